"""End-to-end driver: base-population preparation, the generation loop and
replicate management."""

from __future__ import annotations

import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import composition as comp
from .genome import (GeneticMap, Haplotypes, PedigreeEntry, assign_sexes, build_generation,
                     phase_base_population)
from .microbiome import (BetaMatrix, TaxaClustering, ambient_microbiota, build_beta,
                         centered_genetic_term, cluster_taxa, default_qtl_o,
                         draw_environment_effects, realize_environment, select_genetic_clusters,
                         simulate_microbiota)
from .phenotype import (BreedingValues, PhenotypeModel, breeding_values, calibrate,
                        compute_phenotypes, microbiota_effect, realized_components,
                        sample_effects)
from .rng import StreamFactory
from .selection import score, select_breeding_stock

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EffectsModel:
    """Everything fixed after calibrating on the base population."""

    clustering: TaxaClustering
    beta: BetaMatrix
    phenotype: PhenotypeModel
    theta: np.ndarray
    genetic_map: GeneticMap
    snp_ids: tuple
    taxon_ids: tuple


@dataclass
class GenerationRecord:
    generation: int
    ids: list
    sexes: np.ndarray
    haplotypes: Haplotypes
    compositions: np.ndarray  # n_b x n
    clr: np.ndarray  # n_b x n
    counts: np.ndarray  # resampled counts behind the diversity values
    phenotypes: np.ndarray
    bv: BreedingValues
    microbiota_effect: np.ndarray
    diversity: np.ndarray
    components: tuple  # (h2_d, b2, h2_total)
    pedigree: list
    env_design: np.ndarray  # n x k
    dam_index: np.ndarray | None = None
    sire_index: np.ndarray | None = None
    ambient_mean: np.ndarray | None = None
    ambient_diversity: np.ndarray | None = None
    selected: np.ndarray | None = None
    _dosage: np.ndarray | None = field(default=None, repr=False)

    @property
    def genotypes(self):
        if self._dosage is None:
            self._dosage = self.haplotypes.dosage
        return self._dosage

    @property
    def n(self):
        return len(self.ids)


@dataclass
class SimulationState:
    config: object
    effects: EffectsModel
    records: list
    streams: StreamFactory

    @property
    def generation(self):
        return self.records[-1].generation


def _depths(config, n, rng):
    if len(config.depth) == 1:
        return config.depth[0]
    # a depth vector is treated as an empirical distribution
    return rng.choice(np.asarray(config.depth), size=n, replace=True)


def _diversity(config, compositions, streams, t):
    depth = _depths(config, compositions.shape[1], streams.get("depth", t))
    counts = comp.multinomial_resample(compositions, depth, streams.get("diversity", t))
    return counts, comp.shannon(comp.closure(counts, axis=0), axis=0)


def resolve_sigma_beta(config, qtl_o):
    if config.effect_size is not None:
        return config.effect_size / np.sqrt(qtl_o)
    return config.sigma_beta


def base_compositions(counts, pi):
    """Empirical-Bayes compositions of the base population (taxa x individuals)."""
    rel = comp.closure(counts, axis=0)
    return comp.empirical_bayes_smooth(counts, rel.mean(axis=1), pi)


def prepare_base(inputs, config, streams, genetic_map=None):
    """Build generation 0 and freeze the effects model.

    Genotypes are phased, counts smoothed to compositions (no modulation is
    applied to the base microbiota), taxa clustered, ``beta`` drawn and the
    phenotype effects calibrated so the realized base-population ratios
    equal the targets.
    """
    n = inputs.n_individuals
    g0 = inputs.genotypes
    if genetic_map is None:
        genetic_map = GeneticMap.uniform(inputs.n_snps)
    elif len(genetic_map) != inputs.n_snps:
        raise ValueError("genetic map does not cover every SNP")
    haps = phase_base_population(g0, streams.get("phase"))
    sexes = assign_sexes(n, config.sex_ratio, streams.get("sex", 0))

    m0 = base_compositions(inputs.taxa_counts, config.pi)
    b0 = comp.clr(m0, axis=0)

    clustering = cluster_taxa(inputs.taxa_counts, config.n_clusters)
    clustering = select_genetic_clusters(clustering, config.otu_g, streams.get("genetic_clusters"),
                                         config.cluster_size_min, config.cluster_size_max)
    qtl_o = config.qtl_o or default_qtl_o(inputs.n_snps, len(clustering.genetic_clusters),
                                          config.qtl_o_fraction)
    beta = build_beta(clustering, inputs.n_snps, resolve_sigma_beta(config, qtl_o),
                      streams.get("beta"), qtl_o=qtl_o)

    alpha_t, omega_t = sample_effects(inputs.n_snps, min(config.qtl_y, inputs.n_snps),
                                      clustering.genetic_taxa, inputs.n_taxa,
                                      streams.get("effects"))
    if config.h2_d == 0:
        alpha_t = np.zeros_like(alpha_t)
    eps0 = streams.get("phenotype_noise", 0).normal(0.0, 1.0, size=n)
    model = calibrate(alpha_t, omega_t, g0, b0, config.h2_d, config.b2, residual=eps0)
    theta = draw_environment_effects(config.env_effects, clustering, inputs.taxon_ids,
                                     streams.get("env_theta"), config.cluster_size_min)
    effects = EffectsModel(clustering, beta, model, theta, genetic_map,
                           tuple(inputs.snp_ids), tuple(inputs.taxon_ids))

    y0 = compute_phenotypes(model, g0, b0, noise=eps0)
    counts, delta = _diversity(config, m0, streams, 0)
    record = GenerationRecord(
        generation=0,
        ids=list(inputs.individual_ids),
        sexes=sexes,
        haplotypes=haps,
        compositions=m0,
        clr=b0,
        counts=counts,
        phenotypes=y0,
        bv=breeding_values(model, beta, g0),
        microbiota_effect=microbiota_effect(model, b0),
        diversity=delta,
        components=realized_components(model, beta, g0, b0, y0),
        pedigree=[PedigreeEntry(i, 0, None, None, str(s)) for i, s in zip(inputs.individual_ids, sexes)],
        env_design=np.zeros((n, len(config.env_effects))),
    )
    return SimulationState(config, effects, [record], streams)


def choose_parents(record, config, streams):
    """Breeding stock of ``record`` as ``(selected_F, selected_M)`` index/id pairs."""
    t = record.generation
    if t == 0 and not config.select_from_g0:
        sel_f = [(int(i), record.ids[i]) for i in np.flatnonzero(record.sexes == "F")]
        sel_m = [(int(i), record.ids[i]) for i in np.flatnonzero(record.sexes == "M")]
        return sel_f, sel_m
    s = score(config.selection, bv=record.bv, microbiota_effect=record.microbiota_effect,
              diversity=record.diversity, w_div=config.w_div, rng=streams.get("selection", t),
              standardize_index=config.standardize_index, n=record.n)
    return select_breeding_stock(s, record.sexes, record.ids,
                                 config.size_selection_F, config.size_selection_M)


def advance_generation(state):
    """Select parents from the last generation and simulate the next one."""
    config, eff, streams = state.config, state.effects, state.streams
    prev = state.records[-1]
    t = prev.generation + 1
    n = config.n_ind or prev.n

    sel_f, sel_m = choose_parents(prev, config, streams)
    flags = np.zeros(prev.n, dtype=bool)
    flags[[i for i, _ in sel_f + sel_m]] = True
    prev.selected = flags

    haps, pedigree, dam_idx, sire_idx = build_generation(
        prev.haplotypes, sel_f, sel_m, n, config.sex_ratio, eff.genetic_map,
        streams.get("mating", t), t)
    g = haps.dosage

    ambient_mean = prev.compositions.mean(axis=1)
    ambient = ambient_microbiota(ambient_mean, config.eta, config.pi, streams.get("ambient", t),
                                 size=n)
    inherited = prev.env_design[dam_idx] if prev.env_design.shape[1] else None
    env = realize_environment(config.env_effects, eff.theta, t, n, streams.get("env", t),
                              inherited=inherited)
    m, b = simulate_microbiota(prev.compositions[:, dam_idx], ambient, config.lam,
                               env.contribution(), centered_genetic_term(eff.beta, g),
                               config.sigma_m, streams.get("microbiota_noise", t))
    counts, delta = _diversity(config, m, streams, t)
    amb_depth = _depths(config, n, streams.get("ambient_depth", t))
    amb_div = comp.resampled_shannon(ambient, amb_depth, streams.get("ambient_diversity", t))

    model = eff.phenotype
    y = compute_phenotypes(model, g, b, rng=streams.get("phenotype_noise", t))
    record = GenerationRecord(
        generation=t,
        ids=[p.id for p in pedigree],
        sexes=np.array([p.sex for p in pedigree]),
        haplotypes=haps,
        compositions=m,
        clr=b,
        counts=counts,
        phenotypes=y,
        bv=breeding_values(model, eff.beta, g),
        microbiota_effect=microbiota_effect(model, b),
        diversity=delta,
        components=realized_components(model, eff.beta, g, b, y),
        pedigree=pedigree,
        env_design=env.design,
        dam_index=dam_idx,
        sire_index=sire_idx,
        ambient_mean=ambient_mean,
        ambient_diversity=amb_div,
        _dosage=g,
    )
    state.records.append(record)
    return state


def run_simulation(inputs, config, replicate=0, genetic_map=None):
    """Simulate G0..G``n_gen`` for one replicate. Returns ``(records, effects)``."""
    streams = StreamFactory(config.seed, replicate)
    state = prepare_base(inputs, config, streams, genetic_map)
    for _ in range(config.n_gen):
        advance_generation(state)
    return state.records, state.effects


@dataclass
class ReplicateSet:
    results: list  # per replicate: records, reducer output, or None if it failed
    summaries: list  # per replicate: list of per-generation summary dicts, or None
    failures: dict  # replicate -> error text
    aggregate: list  # per generation: means and 95% intervals across replicates


def _one_replicate(inputs, config, r, genetic_map, reducer):
    from .reporting import summarize_records

    try:
        records, effects = run_simulation(inputs, config, r, genetic_map)
    except Exception:  # reported per replicate, others keep running
        return r, None, None, traceback.format_exc()
    summary = summarize_records(records)
    out = reducer(r, records, effects) if reducer is not None else (records, effects)
    return r, out, summary, None


def run_replicates(inputs, config, n_reps=None, parallelism=1, reducer=None, genetic_map=None):
    """Run independent replicates; replicate ``r`` is seeded by ``(seed, r)``.

    ``reducer(r, records, effects)`` (a picklable callable) may shrink each
    replicate's output inside the worker. Results and aggregates are ordered
    by replicate index regardless of scheduling.
    """
    from .reporting import aggregate_summaries

    n_reps = config.replicates if n_reps is None else n_reps
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    results, summaries, failures = [None] * n_reps, [None] * n_reps, {}
    if parallelism <= 1:
        outs = [_one_replicate(inputs, config, r, genetic_map, reducer) for r in range(n_reps)]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futs = [pool.submit(_one_replicate, inputs, config, r, genetic_map, reducer)
                    for r in range(n_reps)]
            outs = [f.result() for f in futs]
    for r, out, summary, err in outs:
        if err is not None:
            log.error("replicate %d failed:\n%s", r, err)
            failures[r] = err
        results[r], summaries[r] = out, summary
    ok = [s for s in summaries if s is not None]
    return ReplicateSet(results, summaries, failures, aggregate_summaries(ok) if ok else [])
