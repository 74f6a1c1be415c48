"""Taxa clustering, genetic-effect matrix, ambient pool, environmental
effects and the per-individual microbiota transmission model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.spatial.distance import pdist

from . import composition as comp
from .errors import ConfigError
from .genome import round_half_up

RELAX_STEP = 5
MAX_RELAX = 3


@dataclass
class TaxaClustering:
    """Cluster label per taxon plus the subset of clusters under genetic control.

    Labels are ``0..n_clusters-1`` numbered by first appearance in taxon order,
    so two clusterings of the same partition compare equal.
    """

    assignment: np.ndarray
    genetic_clusters: tuple = ()

    @property
    def n_clusters(self):
        return int(self.assignment.max()) + 1

    @property
    def sizes(self):
        return np.bincount(self.assignment, minlength=self.n_clusters)

    def members(self, c):
        return np.flatnonzero(self.assignment == c)

    @property
    def genetic_taxa(self):
        if not self.genetic_clusters:
            return np.array([], dtype=int)
        return np.flatnonzero(np.isin(self.assignment, self.genetic_clusters))


def _canonical_labels(labels):
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=int)
    remap[order] = np.arange(order.size)
    return remap[np.searchsorted(np.unique(labels), labels)]


def taxa_dissimilarities(base_counts):
    """Condensed Bray-Curtis dissimilarities between taxa profiles.

    Each individual's counts are first closed to relative abundances, which
    removes depth differences between samples the same way rarefaction does
    on average. Taxa absent from every sample are at distance 0 from each
    other and 1 from everything else.
    """
    x = comp.closure(np.asarray(base_counts, dtype=float), axis=0)
    zero = x.sum(axis=1) == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        d = pdist(x, metric="braycurtis")
    if zero.any():
        n = x.shape[0]
        i, j = np.triu_indices(n, k=1)
        both = zero[i] & zero[j]
        either = zero[i] ^ zero[j]
        d[both] = 0.0
        d[either] = 1.0
    return d


def cluster_taxa(base_counts, n_clusters):
    """Average-linkage hierarchical clustering of taxa, cut at ``n_clusters``."""
    n_b = np.asarray(base_counts).shape[0]
    if not 1 <= n_clusters <= n_b:
        raise ConfigError(f"n_clusters must lie in [1, {n_b}], got {n_clusters}")
    if n_clusters == n_b:
        return TaxaClustering(np.arange(n_b))
    if n_clusters == 1:
        return TaxaClustering(np.zeros(n_b, dtype=int))
    z = linkage(taxa_dissimilarities(base_counts), method="average")
    labels = cut_tree(z, n_clusters=n_clusters).ravel()
    return TaxaClustering(_canonical_labels(labels))


def select_genetic_clusters(clustering, otu_g, rng, size_min=10, size_max=25):
    """Draw whole clusters until at least ``otu_g * n_b`` taxa are covered.

    Clusters with size in ``[size_min, size_max]`` are drawn uniformly without
    replacement; the last draw may overshoot the threshold. If the eligible
    clusters cannot reach it, the bounds widen by 5 on each side (at most 3
    times) before giving up.
    """
    if not 0 < otu_g <= 1:
        raise ConfigError(f"otu_g must lie in (0, 1], got {otu_g}")
    sizes = clustering.sizes
    need = math.ceil(otu_g * sizes.sum() - 1e-9)
    lo, hi = size_min, size_max
    for attempt in range(MAX_RELAX + 1):
        eligible = np.flatnonzero((sizes >= lo) & (sizes <= hi))
        if sizes[eligible].sum() >= need:
            chosen, total = [], 0
            for c in rng.permutation(eligible):
                chosen.append(int(c))
                total += sizes[c]
                if total >= need:
                    break
            return replace(clustering, genetic_clusters=tuple(sorted(chosen)))
        lo, hi = max(1, lo - RELAX_STEP), hi + RELAX_STEP
    raise ConfigError(
        f"cannot cover {need} taxa with clusters of size "
        f"[{max(1, size_min - MAX_RELAX * RELAX_STEP)}, {size_max + MAX_RELAX * RELAX_STEP}]; "
        f"cluster sizes range {sizes.min()}..{sizes.max()}"
    )


def default_qtl_o(n_g, n_genetic_clusters, fraction=0.2):
    return max(1, round_half_up(fraction * n_g / max(1, n_genetic_clusters)))


@dataclass
class BetaMatrix:
    """Sparse QTL effects of SNPs on taxa CLR abundances.

    ``rows`` lists the genetically controlled taxa and ``dense`` holds their
    effect rows (``len(rows) x n_g``); all other rows of the full ``n_b x n_g``
    matrix are zero. ``support`` maps each genetic cluster to its QTL columns.
    """

    n_taxa: int
    n_snps: int
    rows: np.ndarray
    dense: np.ndarray
    support: dict
    qtl_o: int
    sigma: float
    cluster_draws: dict = field(default_factory=dict)
    taxon_draws: dict = field(default_factory=dict)

    def toarray(self):
        out = np.zeros((self.n_taxa, self.n_snps))
        out[self.rows] = self.dense
        return out

    def tosparse(self):
        return sparse.csr_matrix(self.toarray())

    def dot(self, g):
        """Uncentered ``beta @ G`` for a dosage matrix ``G`` (``n_g x n``)."""
        g = np.asarray(g, dtype=float)
        out = np.zeros((self.n_taxa, g.shape[1]))
        if self.rows.size:
            out[self.rows] = self.dense @ g
        return out

    def weighted(self, w):
        """``w @ beta`` as a dense length-``n_g`` vector."""
        if not self.rows.size:
            return np.zeros(self.n_snps)
        return np.asarray(w, dtype=float)[self.rows] @ self.dense

    @classmethod
    def zeros(cls, n_taxa, n_snps):
        return cls(n_taxa, n_snps, np.array([], dtype=int), np.zeros((0, n_snps)), {}, 0, 0.0)


def build_beta(clustering, n_g, sigma_beta, rng, qtl_o=None, qtl_o_fraction=0.2):
    """Cluster-structured sparse effects ``beta_sg = b_cluster,g + b_taxon,g``.

    Every genetic cluster samples its own ``qtl_o`` SNPs (clusters may share
    SNPs); both terms are ``N(0, sigma_beta^2)``. Draws are standard normals
    scaled by ``sigma_beta``, so the same stream with a different sigma gives
    a proportional matrix.
    """
    n_b = clustering.assignment.size
    clusters = sorted(clustering.genetic_clusters)
    if qtl_o is None:
        qtl_o = default_qtl_o(n_g, len(clusters), qtl_o_fraction)
    if qtl_o > n_g:
        raise ConfigError(f"QTL_o={qtl_o} exceeds the number of SNPs ({n_g})")
    if qtl_o < 1:
        raise ConfigError("QTL_o must be >= 1")
    rows = clustering.genetic_taxa
    pos = {int(s): k for k, s in enumerate(rows)}
    dense = np.zeros((rows.size, n_g))
    support, cdraws, tdraws = {}, {}, {}
    for c in clusters:
        cols = np.sort(rng.choice(n_g, size=qtl_o, replace=False))
        shared = rng.standard_normal(qtl_o) * sigma_beta
        support[c], cdraws[c] = cols, shared
        for s in clustering.members(c):
            own = rng.standard_normal(qtl_o) * sigma_beta
            tdraws[int(s)] = own
            dense[pos[int(s)], cols] = shared + own
    return BetaMatrix(n_b, n_g, rows, dense, support, qtl_o, float(sigma_beta), cdraws, tdraws)


def centered_genetic_term(beta, g):
    """``beta @ G`` with every taxon row centered over the individuals."""
    bg = beta.dot(g)
    return bg - bg.mean(axis=1, keepdims=True)


def ambient_microbiota(prev_mean, eta, pi, rng, size=None):
    """Individual ambient compositions ``pi * Dir(eta * mean) + (1 - pi) * mean``."""
    prev_mean = np.asarray(prev_mean, dtype=float)
    draw = comp.sample_dirichlet(prev_mean, eta, rng, size=size)
    mean = prev_mean if size is None else prev_mean[:, None]
    return pi * draw + (1.0 - pi) * mean


@dataclass
class EnvironmentRealization:
    theta: np.ndarray  # n_b x k
    design: np.ndarray  # n_ind x k, 0/1

    def contribution(self):
        """``theta @ E^T`` (``n_b x n_ind``)."""
        return self.theta @ self.design.T


def resolve_taxa_scope(scope, clustering, taxon_ids, rng, min_size=1):
    """Taxon indices covered by an environmental spec's ``taxa_scope``.

    ``("random_clusters", n)`` draws ``n`` clusters among those with at least
    ``min_size`` taxa (all clusters if too few qualify).
    """
    n_b = clustering.assignment.size
    if scope == "ALL":
        return np.arange(n_b)
    kind, arg = scope
    if kind == "clusters":
        unknown = [c for c in arg if not 0 <= c < clustering.n_clusters]
        if unknown:
            raise ConfigError(f"taxa_scope references unknown cluster id(s) {unknown}")
        return np.flatnonzero(np.isin(clustering.assignment, arg))
    if kind == "random_clusters":
        if not 1 <= arg <= clustering.n_clusters:
            raise ConfigError(f"cannot pick {arg} clusters out of {clustering.n_clusters}")
        pool = np.flatnonzero(clustering.sizes >= min_size)
        if pool.size < arg:
            pool = np.arange(clustering.n_clusters)
        picked = rng.choice(pool, size=arg, replace=False)
        return np.flatnonzero(np.isin(clustering.assignment, picked))
    if kind == "taxa":
        index = {t: k for k, t in enumerate(taxon_ids)}
        unknown = [t for t in arg if t not in index]
        if unknown:
            raise ConfigError(f"taxa_scope references unknown taxa {unknown}")
        return np.array(sorted(index[t] for t in arg), dtype=int)
    raise ConfigError(f"unsupported taxa_scope {scope!r}")


def draw_environment_effects(specs, clustering, taxon_ids, rng, min_cluster_size=1):
    """Frozen effect matrix ``theta`` (``n_b x k``), one column per spec."""
    n_b = clustering.assignment.size
    theta = np.zeros((n_b, len(specs)))
    for k, spec in enumerate(specs):
        taxa = resolve_taxa_scope(spec.taxa_scope, clustering, taxon_ids, rng, min_cluster_size)
        theta[taxa, k] = rng.normal(0.0, spec.effect_sd, size=taxa.size)
    return theta


def realize_environment(specs, theta, t, n_ind, rng, inherited=None):
    """Design matrix ``E^(t)`` for generation ``t``.

    Active specs mark ``round_half_up(target_fraction * n_ind)`` random
    individuals; for persistent specs, ``inherited`` (length ``n_ind`` x k,
    usually the dams' exposure) is carried over when the spec was active in
    the previous generation as well.
    """
    if t < 1:
        raise ValueError("environmental effects apply from generation 1 onwards")
    design = np.zeros((n_ind, len(specs)))
    for k, spec in enumerate(specs):
        if not spec.active(t):
            continue
        if spec.persistent_assignment and inherited is not None and spec.active(t - 1):
            design[:, k] = inherited[:, k]
        else:
            n_on = round_half_up(spec.target_fraction * n_ind)
            design[rng.choice(n_ind, size=n_on, replace=False), k] = 1.0
    return EnvironmentRealization(theta, design)


def simulate_microbiota(dam, ambient, lam, env_contrib, genetic_contrib, sigma_m, rng):
    """Offspring compositions from dam/ambient mixing plus CLR-scale modulation.

    All arguments may be single vectors or ``n_b x n`` matrices. Returns
    ``(compositions, clr_values)``; the CLR values are computed from the
    log-scale vector directly so they stay exact even where the composition
    entries are extremely small.
    """
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    mix = lam * np.asarray(dam, dtype=float) + (1.0 - lam) * np.asarray(ambient, dtype=float)
    v = comp.clr(mix, axis=0) + env_contrib + genetic_contrib
    if sigma_m > 0:
        v = v + rng.normal(0.0, sigma_m, size=v.shape)
    b = v - v.mean(axis=0, keepdims=True)
    return comp.clr_inv(v, axis=0), b


@dataclass
class HeritabilityProfile:
    sigmas: np.ndarray
    h2: np.ndarray  # len(sigmas) x n_b
    genetic: np.ndarray  # bool, n_b
    qtl_o: int

    def genetic_median(self):
        return np.median(self.h2[:, self.genetic], axis=1)


def taxa_heritability(genetic_centered, clr_values):
    """Per-taxon ``var(genetic term) / var(CLR abundance)`` across individuals."""
    vb = clr_values.var(axis=1)
    vg = genetic_centered.var(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        h2 = np.where(vb > 0, vg / vb, 0.0)
    return h2


def taxa_heritability_profile(base, sigma_grid, config, streams, clustering=None):
    """Distribution of taxa heritabilities for each effect scale in ``sigma_grid``.

    For every sigma, one generation is bred from the base population by random
    mating, its microbiota simulated with that sigma (no environment), and the
    per-taxon heritability reported. Mating, ambient draws, noise and the
    effect pattern are shared across the grid (common random numbers), so
    only the effect scale differs between grid points.
    """
    from .genome import GeneticMap, build_generation, phase_base_population, assign_sexes

    if len(sigma_grid) == 0:
        raise ValueError("sigma grid must be non-empty")
    counts = base.taxa_counts
    rel = comp.closure(counts, axis=0)
    m0 = comp.empirical_bayes_smooth(counts, rel.mean(axis=1), config.pi)
    if clustering is None:
        clustering = cluster_taxa(counts, config.n_clusters)
    if not clustering.genetic_clusters:
        clustering = select_genetic_clusters(clustering, config.otu_g, streams.get("genetic_clusters"),
                                             config.cluster_size_min, config.cluster_size_max)
    haps = phase_base_population(base.genotypes, streams.get("phase"))
    sexes = assign_sexes(base.n_individuals, config.sex_ratio, streams.get("sex", 0))
    ids = base.individual_ids
    fem = [(i, ids[i]) for i in np.flatnonzero(sexes == "F")]
    mal = [(i, ids[i]) for i in np.flatnonzero(sexes == "M")]
    n_ind = config.n_ind or base.n_individuals
    gmap = GeneticMap.uniform(base.n_snps)
    kids, _, dam_idx, _ = build_generation(haps, fem, mal, n_ind, config.sex_ratio, gmap,
                                           streams.get("mating", 1), 1)
    g1 = kids.dosage
    amb = ambient_microbiota(m0.mean(axis=1), config.eta, config.pi, streams.get("ambient", 1),
                             size=n_ind)
    unit = build_beta(clustering, base.n_snps, 1.0, streams.get("beta"), config.qtl_o,
                      config.qtl_o_fraction)
    unit_term = centered_genetic_term(unit, g1)
    noise = streams.get("microbiota_noise", 1).normal(0.0, config.sigma_m, size=(base.n_taxa, n_ind))
    mix = comp.clr(config.lam * m0[:, dam_idx] + (1 - config.lam) * amb, axis=0)
    h2 = []
    for s in sigma_grid:
        g_term = s * unit_term
        v = mix + g_term + noise
        b = v - v.mean(axis=0, keepdims=True)
        h2.append(taxa_heritability(g_term, b))
    genetic = np.zeros(base.n_taxa, dtype=bool)
    genetic[clustering.genetic_taxa] = True
    return HeritabilityProfile(np.asarray(sigma_grid, dtype=float), np.array(h2), genetic, unit.qtl_o)
