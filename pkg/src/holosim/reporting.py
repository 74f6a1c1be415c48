"""Exports, run summaries and plot-ready tables.

Layout of an exported run directory::

    manifest.json        config snapshot, seed, version, file checksums, timings
    summary.jsonl        one JSON object per generation (see SUMMARY_FIELDS)
    effects/alpha.tsv    snp_id, value
    effects/omega.tsv    taxon_id, value
    effects/beta.tsv     taxon_id, snp_id, value   (nonzero entries only)
    effects/clusters.tsv taxon_id, cluster, genetic
    effects/theta.tsv    taxon x environmental effect (only with env effects)
    G<t>/genotypes.tsv   SNP x individual dosages
    G<t>/microbiota.tsv  taxon x individual compositions
    G<t>/counts.tsv      resampled counts (optional)
    G<t>/clr.tsv         CLR values (optional)
    G<t>/phenotypes.tsv  id, sex, phenotype, bv_d, bv_m, bv_t, microbiota_effect,
                         diversity, selected[, env_1..env_k]
    G<t>/pedigree.tsv    id, generation, sire, dam, sex, selected
"""

from __future__ import annotations

import hashlib
import json
import platform
import resource
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from . import composition as comp
from .io import read_table, write_table

SUMMARY_FIELDS = (
    "generation", "n", "mean_y", "sd_y", "mean_diversity", "sd_diversity", "mean_bv_t",
    "sd_bv_t", "h2_d", "b2", "h2_total", "delta_y", "delta_y_sd", "delta_diversity",
    "delta_bv_t",
)
PHENOTYPE_COLUMNS = ("id", "sex", "phenotype", "bv_d", "bv_m", "bv_t", "microbiota_effect",
                     "diversity", "selected")
PEDIGREE_COLUMNS = ("id", "generation", "sire", "dam", "sex", "selected")
PLOT_KINDS = ("diversity_density", "pcoa", "response_curves", "heritability_density",
              "lambda_correlations")


# -- summaries ---------------------------------------------------------------

def summarize_records(records):
    """Per-generation summary dicts; changes are relative to the first record.

    ``delta_y`` is in residual-SD units (the residual variance is 1),
    ``delta_y_sd`` in units of the first generation's phenotypic SD.
    """
    if not records:
        raise ValueError("need at least one generation record")
    base = records[0]
    y0, d0, t0 = np.mean(base.phenotypes), np.mean(base.diversity), np.mean(base.bv.bv_t)
    sd0 = np.std(base.phenotypes)
    out = []
    for rec in records:
        y, d, bvt = rec.phenotypes, rec.diversity, rec.bv.bv_t
        h2_d, b2, h2_total = rec.components
        out.append({
            "generation": int(rec.generation),
            "n": int(len(y)),
            "mean_y": float(np.mean(y)),
            "sd_y": float(np.std(y)),
            "mean_diversity": float(np.mean(d)),
            "sd_diversity": float(np.std(d)),
            "mean_bv_t": float(np.mean(bvt)),
            "sd_bv_t": float(np.std(bvt)),
            "h2_d": float(h2_d),
            "b2": float(b2),
            "h2_total": float(h2_total),
            "delta_y": float(np.mean(y) - y0),
            "delta_y_sd": float((np.mean(y) - y0) / sd0) if sd0 > 0 else 0.0,
            "delta_diversity": float(np.mean(d) - d0),
            "delta_bv_t": float(np.mean(bvt) - t0),
        })
    return out


def aggregate_summaries(summaries):
    """Across-replicate mean and normal 95% interval of every summary field."""
    by_gen = {}
    for s in summaries:
        for row in s:
            by_gen.setdefault(row["generation"], []).append(row)
    out = []
    for gen in sorted(by_gen):
        rows = by_gen[gen]
        agg = {"generation": gen, "n_replicates": len(rows)}
        for key in SUMMARY_FIELDS[1:]:
            v = np.array([r[key] for r in rows], dtype=float)
            half = 1.96 * v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else 0.0
            agg[key] = float(v.mean())
            agg[key + "_lo"] = float(v.mean() - half)
            agg[key + "_hi"] = float(v.mean() + half)
        out.append(agg)
    return out


def write_jsonl(path, rows):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()]


# -- tables ------------------------------------------------------------------

def _write_rows(path, header, rows):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_cell(v) for v in row) + "\n")
    return Path(path)


def _cell(v):
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _read_rows(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split("\t")
    return header, [ln.split("\t") for ln in lines[1:] if ln]


def export_generation(record, out_dir, snp_ids, taxon_ids, write_clr=False, write_counts=False):
    """Write one generation's tables into ``out_dir/G<t>/``; returns the paths."""
    gdir = Path(out_dir) / f"G{record.generation}"
    try:
        gdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {gdir}: {exc}") from exc
    ids = record.ids
    paths = [
        write_table(gdir / "genotypes.tsv", record.genotypes, snp_ids, ids, corner="snp"),
        write_table(gdir / "microbiota.tsv", record.compositions, taxon_ids, ids, corner="taxon"),
    ]
    if write_counts:
        paths.append(write_table(gdir / "counts.tsv", record.counts, taxon_ids, ids, corner="taxon"))
    if write_clr:
        paths.append(write_table(gdir / "clr.tsv", record.clr, taxon_ids, ids, corner="taxon"))
    selected = record.selected if record.selected is not None else np.zeros(record.n, dtype=bool)
    k = record.env_design.shape[1]
    rows = []
    for i, rid in enumerate(ids):
        rows.append([rid, record.sexes[i], record.phenotypes[i], record.bv.bv_d[i],
                     record.bv.bv_m[i], record.bv.bv_t[i], record.microbiota_effect[i],
                     record.diversity[i], bool(selected[i]),
                     *[int(x) for x in record.env_design[i]]])
    header = list(PHENOTYPE_COLUMNS) + [f"env_{j + 1}" for j in range(k)]
    paths.append(_write_rows(gdir / "phenotypes.tsv", header, rows))
    ped = [[p.id, p.generation, p.sire, p.dam, p.sex, bool(selected[i])]
           for i, p in enumerate(record.pedigree)]
    paths.append(_write_rows(gdir / "pedigree.tsv", PEDIGREE_COLUMNS, ped))
    return paths


def export_effects(effects, out_dir):
    edir = Path(out_dir) / "effects"
    edir.mkdir(parents=True, exist_ok=True)
    snp_ids, taxon_ids = effects.snp_ids, effects.taxon_ids
    model = effects.phenotype
    paths = [
        _write_rows(edir / "alpha.tsv", ("snp_id", "value"), zip(snp_ids, model.alpha)),
        _write_rows(edir / "omega.tsv", ("taxon_id", "value"), zip(taxon_ids, model.omega)),
    ]
    beta = effects.beta
    trip = []
    for k, s in enumerate(beta.rows):
        for g in np.flatnonzero(beta.dense[k]):
            trip.append((taxon_ids[s], snp_ids[g], beta.dense[k, g]))
    paths.append(_write_rows(edir / "beta.tsv", ("taxon_id", "snp_id", "value"), trip))
    genetic = np.zeros(len(taxon_ids), dtype=bool)
    genetic[effects.clustering.genetic_taxa] = True
    paths.append(_write_rows(edir / "clusters.tsv", ("taxon_id", "cluster", "genetic"),
                             zip(taxon_ids, effects.clustering.assignment, genetic)))
    if effects.theta.shape[1]:
        paths.append(write_table(edir / "theta.tsv", effects.theta, taxon_ids,
                                 [f"env_{j + 1}" for j in range(effects.theta.shape[1])],
                                 corner="taxon"))
    return paths


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def peak_memory_mb():
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # ru_maxrss is KiB on Linux, bytes on macOS
    return rss / (1024 * 1024) if platform.system() == "Darwin" else rss / 1024


def export_run(records, effects, config, out_dir, write_clr=False, write_counts=False,
               started=None):
    """Write every generation, the effects, ``summary.jsonl`` and ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in records:
        paths += export_generation(rec, out_dir, effects.snp_ids, effects.taxon_ids,
                                   write_clr, write_counts)
    paths += export_effects(effects, out_dir)
    summary_path = out_dir / "summary.jsonl"
    write_jsonl(summary_path, summarize_records(records))
    paths.append(summary_path)
    files = {str(p.relative_to(out_dir)): {"sha256": _sha256(p), "bytes": p.stat().st_size}
             for p in paths}
    manifest = {
        "software": "holosim",
        "version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "generations": [rec.generation for rec in records],
        "files": files,
        "wall_clock_s": None if started is None else time.perf_counter() - started,
        "peak_memory_mb": peak_memory_mb(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                      default=str) + "\n", encoding="utf-8")
    return manifest


def verify_manifest(run_dir):
    """Names of files whose checksum no longer matches the manifest."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    bad = []
    for name, meta in manifest["files"].items():
        p = run_dir / name
        if not p.exists() or p.stat().st_size == 0 or _sha256(p) != meta["sha256"]:
            bad.append(name)
    return bad


# -- replay ------------------------------------------------------------------

def load_generation_tables(gdir):
    """Reload one exported generation as a lightweight record."""
    gdir = Path(gdir)
    g, _, ids = read_table(gdir / "genotypes.tsv")
    m, _, _ = read_table(gdir / "microbiota.tsv")
    header, rows = _read_rows(gdir / "phenotypes.tsv")
    col = {h: j for j, h in enumerate(header)}

    def num(name):
        return np.array([float(r[col[name]]) for r in rows])

    bv = SimpleNamespace(bv_d=num("bv_d"), bv_m=num("bv_m"), bv_t=num("bv_t"))
    return SimpleNamespace(
        generation=int(gdir.name[1:]), ids=ids, genotypes=g.astype(np.int8), compositions=m,
        phenotypes=num("phenotype"), diversity=num("diversity"), bv=bv,
        microbiota_effect=num("microbiota_effect"),
        sexes=np.array([r[col["sex"]] for r in rows]),
        selected=np.array([r[col["selected"]] == "1" for r in rows]),
    )


def load_effects(run_dir, snp_ids, taxon_ids):
    edir = Path(run_dir) / "effects"
    s_index = {s: k for k, s in enumerate(snp_ids)}
    t_index = {t: k for k, t in enumerate(taxon_ids)}
    alpha = np.zeros(len(snp_ids))
    for sid, v in _read_rows(edir / "alpha.tsv")[1]:
        alpha[s_index[sid]] = float(v)
    omega = np.zeros(len(taxon_ids))
    for tid, v in _read_rows(edir / "omega.tsv")[1]:
        omega[t_index[tid]] = float(v)
    beta = np.zeros((len(taxon_ids), len(snp_ids)))
    for tid, sid, v in _read_rows(edir / "beta.tsv")[1]:
        beta[t_index[tid], s_index[sid]] = float(v)
    return alpha, omega, beta


def replay_summary(run_dir):
    """Recompute ``summary.jsonl`` rows from the exported tables alone."""
    run_dir = Path(run_dir)
    gdirs = sorted((p for p in run_dir.glob("G*") if p.is_dir() and p.name[1:].isdigit()),
                   key=lambda p: int(p.name[1:]))
    if not gdirs:
        raise FileNotFoundError(f"no generation directories under {run_dir}")
    snp_ids = read_table(gdirs[0] / "genotypes.tsv")[1]
    taxon_ids = read_table(gdirs[0] / "microbiota.tsv")[1]
    alpha, omega, beta = load_effects(run_dir, snp_ids, taxon_ids)
    w = omega @ beta
    records = []
    for gdir in gdirs:
        rec = load_generation_tables(gdir)
        g = rec.genotypes.astype(float)
        b = comp.clr(rec.compositions, axis=0)
        vy = np.var(rec.phenotypes)
        rec.components = (np.var(alpha @ g) / vy, np.var(omega @ b) / vy,
                          np.var(alpha @ g + w @ g) / vy)
        records.append(rec)
    return summarize_records(records)


# -- statistics used by the plot tables and scenario checks -----------------

def two_group_separation(values):
    """Ashman's D for the best two-group split of 1-D values.

    The split minimizes the within-group sum of squares (1-D 2-means, found
    exhaustively over sorted cut points). Larger D means clearer bimodality;
    D > 2 is the usual threshold for a clean separation.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n < 4:
        raise ValueError("need at least 4 values")
    c1, c2 = np.cumsum(x), np.cumsum(x ** 2)
    k = np.arange(1, n)
    left_ss = c2[k - 1] - c1[k - 1] ** 2 / k
    right_ss = (c2[-1] - c2[k - 1]) - (c1[-1] - c1[k - 1]) ** 2 / (n - k)
    cut = int(np.argmin(left_ss + right_ss)) + 1
    a, b = x[:cut], x[cut:]
    pooled = a.var() + b.var()
    if pooled == 0:
        return float("inf") if a.mean() != b.mean() else 0.0
    return float(np.sqrt(2.0) * abs(a.mean() - b.mean()) / np.sqrt(pooled))


def group_separation(coords, groups):
    """``(between-centroid distance, mean within-group pairwise distance)``."""
    coords = np.asarray(coords, dtype=float)
    groups = np.asarray(groups)
    labels = np.unique(groups)
    if labels.size != 2:
        raise ValueError("need exactly two groups")
    a, b = coords[groups == labels[0]], coords[groups == labels[1]]
    between = float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))

    def mean_pairwise(x):
        if len(x) < 2:
            return 0.0
        diff = x[:, None, :] - x[None, :, :]
        d = np.sqrt((diff ** 2).sum(-1))
        return d[np.triu_indices(len(x), 1)].mean()

    within = float((mean_pairwise(a) + mean_pairwise(b)) / 2)
    return between, within


def pcoa_table(records, generations=None, env_column=0, k=2):
    """Joint PCoA (Bray-Curtis) of the selected generations.

    Returns rows ``(id, generation, group, axis1, ..., axis_k)``; ``group`` is
    ``exposed``/``control`` for the chosen environmental column, ``none`` when
    the record has no environmental design.
    """
    recs = [r for r in records if generations is None or r.generation in generations]
    x = np.concatenate([r.compositions for r in recs], axis=1).T
    coords = comp.pcoa(comp.bray_curtis_matrix(x), k=k)
    rows, start = [], 0
    for r in recs:
        design = r.env_design
        for i, rid in enumerate(r.ids):
            if design.shape[1] > env_column:
                group = "exposed" if design[i, env_column] > 0 else "control"
            else:
                group = "none"
            rows.append((rid, r.generation, group, *coords[start + i]))
        start += r.n
    return rows


def lambda_correlations(records, generation=2):
    """Correlation of offspring diversity with dam, sire and ambient diversity."""
    rec = next(r for r in records if r.generation == generation)
    prev = next(r for r in records if r.generation == generation - 1)
    d = rec.diversity
    return {
        "mother": float(np.corrcoef(d, prev.diversity[rec.dam_index])[0, 1]),
        "father": float(np.corrcoef(d, prev.diversity[rec.sire_index])[0, 1]),
        "ambient": float(np.corrcoef(d, rec.ambient_diversity)[0, 1]),
    }


def emit_plot_data(kind, data, path, **options):
    """Write a long-format TSV for one figure type.

    ``data`` depends on ``kind``:

    - ``diversity_density``: list of generation records
    - ``pcoa``: list of generation records (``generations=``, ``env_column=``)
    - ``response_curves``: ``{label: [replicate summaries]}``
    - ``heritability_density``: a ``HeritabilityProfile``
    - ``lambda_correlations``: ``{lambda: [replicate record lists]}`` (``generation=``)
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unsupported plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    if kind == "diversity_density":
        rows = [(rid, r.generation, d) for r in data for rid, d in zip(r.ids, r.diversity)]
        header = ("id", "generation", "diversity")
    elif kind == "pcoa":
        rows = pcoa_table(data, options.get("generations"), options.get("env_column", 0))
        header = ("id", "generation", "group", "axis1", "axis2")
    elif kind == "response_curves":
        rows = [(label, rep, row["generation"], row["delta_y"], row["delta_y_sd"],
                 row["delta_diversity"], row["delta_bv_t"])
                for label, reps in data.items() for rep, summ in enumerate(reps) for row in summ]
        header = ("label", "replicate", "generation", "delta_y", "delta_y_sd",
                  "delta_diversity", "delta_bv_t")
    elif kind == "heritability_density":
        rows = [(s, j, bool(data.genetic[j]), data.h2[k, j])
                for k, s in enumerate(data.sigmas) for j in range(data.h2.shape[1])]
        header = ("sigma_beta", "taxon", "genetic", "h2")
    else:
        gen = options.get("generation", 2)
        rows = []
        for lam, reps in data.items():
            cors = [lambda_correlations(recs, gen) for recs in reps]
            for source in ("mother", "father", "ambient"):
                rows.append((lam, source, float(np.mean([c[source] for c in cors]))))
        header = ("lambda", "source", "r")
    return _write_rows(path, header, rows)
