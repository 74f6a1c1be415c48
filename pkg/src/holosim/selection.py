"""Selection criteria and truncation selection of breeding stock."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import SELECTION_CRITERIA
from .genome import round_half_up

log = logging.getLogger(__name__)


@dataclass
class SelectionScore:
    criterion: str
    scores: np.ndarray
    w_div: float | None = None


def standardize(x):
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def score(criterion, bv=None, microbiota_effect=None, diversity=None, w_div=0.0, rng=None,
          standardize_index=True, n=None):
    """Per-individual selection scores for ``criterion``.

    ``MIXED_INDEX`` is ``w_div * z(diversity) + (1 - w_div) * z(bv_t)`` with
    ``z`` a within-generation standardization; pass
    ``standardize_index=False`` to combine the raw values instead.
    """
    criterion = criterion.upper()
    if criterion not in SELECTION_CRITERIA:
        raise ValueError(f"unknown selection criterion {criterion!r}")

    def need(value, what):
        if value is None:
            raise ValueError(f"criterion {criterion} needs {what}")
        return np.asarray(value, dtype=float)

    if criterion == "RANDOM":
        if rng is None:
            raise ValueError("criterion RANDOM needs an rng")
        if n is None:
            n = next(len(v) for v in (diversity, microbiota_effect,
                                      None if bv is None else bv.bv_t) if v is not None)
        s = rng.random(n)
    elif criterion == "MICROBIOTA_EFFECT":
        s = need(microbiota_effect, "the microbiota effect")
    elif criterion == "BV_M":
        s = need(getattr(bv, "bv_m", None), "BV_m")
    elif criterion == "BV_D":
        s = need(getattr(bv, "bv_d", None), "BV_d")
    elif criterion == "BV_T":
        s = need(getattr(bv, "bv_t", None), "BV_t")
    elif criterion == "DIVERSITY":
        s = need(diversity, "diversity")
    else:
        d = need(diversity, "diversity")
        t = need(getattr(bv, "bv_t", None), "BV_t")
        if standardize_index:
            d, t = standardize(d), standardize(t)
        s = w_div * d + (1.0 - w_div) * t
    if not np.all(np.isfinite(s)):
        raise ValueError("selection scores must be finite")
    return SelectionScore(criterion, np.asarray(s, dtype=float),
                          w_div if criterion == "MIXED_INDEX" else None)


def top_k(scores, ids, k):
    """Indices of the ``k`` best scores; ties go to the smaller id."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], ids[i]))
    return np.array(sorted(order[:k]), dtype=int)


def select_breeding_stock(scores, sexes, ids, frac_F, frac_M):
    """Truncation selection within each sex.

    Keeps ``round_half_up(frac * count)`` individuals per sex (at least one).
    Returns ``(selected_F, selected_M)`` as lists of ``(index, id)`` pairs.
    """
    scores = np.asarray(getattr(scores, "scores", scores), dtype=float)
    sexes = np.asarray(sexes)
    out = []
    for sex, frac in (("F", frac_F), ("M", frac_M)):
        if not 0 < frac <= 1:
            raise ValueError(f"selected fraction must lie in (0, 1], got {frac}")
        idx = np.flatnonzero(sexes == sex)
        if idx.size == 0:
            raise ValueError(f"no individuals of sex {sex} to select from")
        k = round_half_up(frac * idx.size)
        if k == 0:
            log.warning("selected fraction %.3g of %d %s rounds to zero; keeping one",
                        frac, idx.size, sex)
            k = 1
        chosen = idx[top_k(scores[idx], [ids[i] for i in idx], k)]
        out.append([(int(i), ids[i]) for i in chosen])
    return out[0], out[1]
