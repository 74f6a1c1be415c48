"""Phenotype model ``y = alpha'G + omega'B + e``: effect sampling, calibration
to target variance ratios, breeding values and realized components."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError

# Gamma(shape, scale) magnitudes before rescaling
ALPHA_GAMMA = (0.4, 5.0)
OMEGA_GAMMA = (1.4, 3.8)


@dataclass(frozen=True)
class PhenotypeModel:
    alpha: np.ndarray  # length n_g
    omega: np.ndarray  # length n_b
    scale_alpha: float = 1.0
    scale_omega: float = 1.0
    residual_sd: float = 1.0


@dataclass
class BreedingValues:
    bv_d: np.ndarray
    bv_m: np.ndarray

    def __post_init__(self):
        self.bv_t = self.bv_d + self.bv_m


def _signed_gamma(n, shape, scale, rng):
    mags = rng.gamma(shape, scale, size=n)
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return mags * signs


def sample_effects(n_g, qtl_y, causative_taxa, n_b, rng):
    """Unscaled sparse effect vectors ``(alpha, omega)``.

    ``alpha`` is nonzero on ``qtl_y`` random SNPs with Gamma(0.4, 5)
    magnitudes, ``omega`` on ``causative_taxa`` with Gamma(1.4, 3.8)
    magnitudes (shape/scale). Each nonzero gets a random sign.
    """
    if qtl_y > n_g:
        raise ValueError(f"qtl_y={qtl_y} exceeds the number of SNPs ({n_g})")
    alpha = np.zeros(n_g)
    snps = np.sort(rng.choice(n_g, size=qtl_y, replace=False))
    alpha[snps] = _signed_gamma(qtl_y, *ALPHA_GAMMA, rng)
    omega = np.zeros(n_b)
    taxa = np.asarray(causative_taxa, dtype=int)
    omega[taxa] = _signed_gamma(taxa.size, *OMEGA_GAMMA, rng)
    return alpha, omega


def calibrate(alpha, omega, g0, b0, h2_d, b2, residual=None):
    """Rescale ``alpha`` and ``omega`` so the base population hits the targets.

    Finds ``s_a, s_w >= 0`` with ``var(s_a a) = h2_d * V`` and
    ``var(s_w m) = b2 * V`` where ``a = alpha'G0``, ``m = omega'B0`` and
    ``V = var(s_a a + s_w m + e)``. With ``residual`` given, ``e`` is that
    realized noise vector (so the ratios hold exactly on the sample);
    otherwise ``e`` is treated as unit-variance noise uncorrelated with
    both components.

    Writing ``x = sd(s_a a) = sqrt(h2_d) t`` and ``y = sqrt(b2) t`` with
    ``t = sqrt(V)``, the fixed-point condition reduces to the quadratic
    ``D t^2 - 2 c t - E = 0`` with
    ``D = 1 - h2_d - b2 - 2 sqrt(h2_d b2) corr(a, m)``,
    ``c = sqrt(h2_d) cov(a/sd_a, e) + sqrt(b2) cov(m/sd_m, e)`` and
    ``E = var(e)``, whose positive root is taken.
    """
    if not (0 <= h2_d and 0 <= b2 and h2_d + b2 < 1):
        raise CalibrationError(f"infeasible targets h2_d={h2_d}, b2={b2}")
    a = alpha @ np.asarray(g0, dtype=float)
    m = omega @ np.asarray(b0, dtype=float)
    n = a.size
    sd_a, sd_m = a.std(), m.std()
    if h2_d > 0 and sd_a == 0:
        raise CalibrationError("direct genetic component has zero variance on the base population")
    if b2 > 0 and sd_m == 0:
        raise CalibrationError("microbiota component has zero variance on the base population")
    za = (a - a.mean()) / sd_a if sd_a > 0 else np.zeros(n)
    zm = (m - m.mean()) / sd_m if sd_m > 0 else np.zeros(n)
    if residual is None:
        e_var, c_ae, c_me = 1.0, 0.0, 0.0
    else:
        e = np.asarray(residual, dtype=float) - np.mean(residual)
        e_var = e.var()
        c_ae, c_me = np.mean(za * e), np.mean(zm * e)
    r = np.mean(za * zm)
    rh, rb = np.sqrt(h2_d), np.sqrt(b2)
    d = 1.0 - h2_d - b2 - 2.0 * rh * rb * r
    c = rh * c_ae + rb * c_me
    disc = c * c + d * e_var
    if d <= 0 or disc < 0:
        raise CalibrationError(
            f"no scaling reaches h2_d={h2_d}, b2={b2}: component correlation {r:.3f} "
            "leaves no room for the residual"
        )
    t = (c + np.sqrt(disc)) / d
    s_a = rh * t / sd_a if h2_d > 0 else 0.0
    s_w = rb * t / sd_m if b2 > 0 else 0.0
    return PhenotypeModel(alpha * s_a, omega * s_w, float(s_a), float(s_w))


def compute_phenotypes(model, g, b, rng=None, noise=None):
    """``alpha'G + omega'B + e``; ``noise`` overrides the N(0, 1) residual draw."""
    det = model.alpha @ np.asarray(g, dtype=float) + model.omega @ np.asarray(b, dtype=float)
    if noise is None:
        if rng is None:
            raise ValueError("need an rng or an explicit noise vector")
        noise = rng.normal(0.0, model.residual_sd, size=det.size)
    return det + noise


def breeding_values(model, beta, g):
    g = np.asarray(g, dtype=float)
    bv_d = model.alpha @ g
    bv_m = beta.weighted(model.omega) @ g
    return BreedingValues(bv_d, bv_m)


def microbiota_effect(model, b):
    return model.omega @ np.asarray(b, dtype=float)


def realized_components(model, beta, g, b, y):
    """Observed ``(h2_d, b2, h2_total)`` using the true effects."""
    vy = np.var(y)
    if vy == 0:
        raise ValueError("phenotype has zero variance")
    bv = breeding_values(model, beta, g)
    return (
        float(np.var(bv.bv_d) / vy),
        float(np.var(microbiota_effect(model, b)) / vy),
        float(np.var(bv.bv_t) / vy),
    )
