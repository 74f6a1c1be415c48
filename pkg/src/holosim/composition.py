"""Compositional-data helpers: closure, CLR, smoothing, Dirichlet draws,
Bray-Curtis, Shannon diversity, multinomial resampling and classical scaling.

Functions accept a single composition (1-D) or a matrix with one composition
per *column* (taxa x individuals), matching the orientation of the microbiota
tables used throughout the package.
"""

from __future__ import annotations

import numpy as np

GAMMA_SHAPE_FLOOR = 1e-12


def closure(x, axis=0):
    """Rescale non-negative values so they sum to one along ``axis``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("compositions cannot have negative entries")
    total = x.sum(axis=axis, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("cannot close a composition with zero total")
    return x / total


def clr(x, axis=0):
    """Centered log-ratio transform.

    Parameters
    ----------
    x : array_like
        Strictly positive composition(s). For 2-D input, compositions are
        taken along ``axis`` (columns by default).

    Returns
    -------
    ndarray
        ``ln x_i - mean_j ln x_j``; sums to zero along ``axis``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("clr requires strictly positive entries")
    lx = np.log(x)
    return lx - lx.mean(axis=axis, keepdims=True)


def clr_inv(v, axis=0):
    """Inverse CLR (softmax). Invariant to adding a constant along ``axis``."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("clr_inv requires finite entries")
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def empirical_bayes_smooth(counts, population_mean, pi=0.75, axis=0):
    """Shrink empirical compositions toward a population mean.

    The result is ``pi * counts / total + (1 - pi) * population_mean``, the
    posterior mean under a Dirichlet prior centred on ``population_mean``
    whose scale equals ``total * (1 - pi) / pi`` (a third of the total at the
    default ``pi = 0.75``).
    """
    if not 0 < pi <= 1:
        raise ValueError(f"pi must lie in (0, 1], got {pi}")
    counts = np.asarray(counts, dtype=float)
    total = counts.sum(axis=axis, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("cannot smooth a sample with zero total count")
    mean = np.asarray(population_mean, dtype=float)
    if counts.ndim == 2 and mean.ndim == 1:
        mean = mean[:, None] if axis == 0 else mean[None, :]
    return pi * counts / total + (1.0 - pi) * mean


def dirichlet_prior_scale(total, pi=0.75):
    """Dirichlet scale ``S`` for which ``total / (total + S)`` equals ``pi``."""
    return total * (1.0 - pi) / pi


def sample_dirichlet(mean, eta, rng, size=None):
    """Draw from ``Dirichlet(eta * mean)`` via normalised gamma variates.

    ``size`` adds trailing draws as columns, giving an ``(n_b, size)`` matrix.
    Shapes below ``GAMMA_SHAPE_FLOOR`` are floored so every draw stays on the
    open simplex; gammas that still underflow to zero are replaced by the
    smallest positive double.
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    shape = np.maximum(eta * np.asarray(mean, dtype=float), GAMMA_SHAPE_FLOOR)
    if size is None:
        g = rng.standard_gamma(shape)
    else:
        g = rng.standard_gamma(shape[:, None], size=(shape.size, size))
    g = np.maximum(g, np.finfo(float).tiny)
    return g / g.sum(axis=0, keepdims=True)


def bray_curtis(a, b):
    """Bray-Curtis dissimilarity ``1 - 2 sum(min(a, b)) / (sum(a) + sum(b))``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("Bray-Curtis requires non-negative vectors")
    sa, sb = a.sum(), b.sum()
    if sa <= 0 or sb <= 0:
        raise ValueError("Bray-Curtis is undefined for all-zero vectors")
    return 1.0 - 2.0 * np.minimum(a, b).sum() / (sa + sb)


def bray_curtis_matrix(x):
    """Pairwise Bray-Curtis dissimilarities between the *rows* of ``x``."""
    from scipy.spatial.distance import pdist, squareform

    x = np.asarray(x, dtype=float)
    if np.any(x.sum(axis=1) <= 0):
        raise ValueError("Bray-Curtis is undefined for all-zero vectors")
    return squareform(pdist(x, metric="braycurtis"))


def shannon(p, axis=0):
    """Shannon index ``-sum p ln p`` with ``0 ln 0 = 0`` (natural log)."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=axis)


def multinomial_resample(p, depth, rng):
    """Draw sequencing-like counts from composition(s) ``p``.

    For a matrix (taxa x individuals) each column is resampled; ``depth`` may
    be a scalar or one depth per column.
    """
    p = np.asarray(p, dtype=float)
    depth = np.asarray(depth)
    if np.any(depth < 1):
        raise ValueError("depth must be at least 1")
    if p.ndim == 1:
        return rng.multinomial(int(depth), p / p.sum())
    pcols = (p / p.sum(axis=0, keepdims=True)).T
    n = np.broadcast_to(depth, (pcols.shape[0],)).astype(np.int64)
    return rng.multinomial(n, pcols).T


def resampled_shannon(p, depth, rng):
    """Shannon diversity of multinomially resampled compositions."""
    counts = multinomial_resample(p, depth, rng)
    return shannon(closure(counts, axis=0), axis=0)


def pcoa(d, k=2):
    """Classical (Torgerson) scaling of a dissimilarity matrix.

    Returns an ``n x k`` coordinate matrix ordered by descending eigenvalue;
    axes whose eigenvalue is not positive are returned as zeros. The sign of
    each axis is fixed so that its largest-magnitude coordinate is positive.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if d.ndim != 2 or d.shape[1] != n:
        raise ValueError("dissimilarity matrix must be square")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12):
        raise ValueError("dissimilarity matrix must be symmetric")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ (d ** 2) @ j
    evals, evecs = np.linalg.eigh((b + b.T) / 2)
    order = np.argsort(evals)[::-1][:k]
    evals, evecs = evals[order], evecs[:, order]
    tol = max(n * np.finfo(float).eps * abs(evals[0]), 1e-12)
    coords = np.zeros((n, k))
    pos = evals > tol
    coords[:, pos] = evecs[:, pos] * np.sqrt(evals[pos])
    flip = np.sign(coords[np.argmax(np.abs(coords), axis=0), np.arange(k)])
    flip[flip == 0] = 1.0
    return coords * flip
