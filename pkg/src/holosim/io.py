"""Base-population inputs: TSV tables, validation and a synthetic generator.

Tables are UTF-8, tab-delimited, unquoted, with one header row of column ids
and a first column of row ids (SNP or taxon). Lines starting with ``#`` are
ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass
class BaseInputs:
    """Paired base-population genotypes and taxa counts.

    ``genotypes`` is ``n_g x N`` (alternative-allele dosage), ``taxa_counts``
    is ``n_b x N``; both share the column order of ``individual_ids``.
    """

    genotypes: np.ndarray
    taxa_counts: np.ndarray
    individual_ids: list
    snp_ids: list
    taxon_ids: list

    def __post_init__(self):
        self.genotypes = np.asarray(self.genotypes)
        self.taxa_counts = np.asarray(self.taxa_counts)
        self.individual_ids = [str(x) for x in self.individual_ids]
        self.snp_ids = [str(x) for x in self.snp_ids]
        self.taxon_ids = [str(x) for x in self.taxon_ids]
        validate_base(self)

    @property
    def n_snps(self):
        return self.genotypes.shape[0]

    @property
    def n_taxa(self):
        return self.taxa_counts.shape[0]

    @property
    def n_individuals(self):
        return len(self.individual_ids)


def validate_base(base):
    g, m = base.genotypes, base.taxa_counts
    n = len(base.individual_ids)
    if n == 0:
        raise DataError("base population has no individuals")
    if len(set(base.individual_ids)) != n:
        raise DataError("duplicate individual ids in base population")
    if g.ndim != 2 or g.shape != (len(base.snp_ids), n):
        raise DataError(f"genotype matrix shape {g.shape} does not match "
                        f"{len(base.snp_ids)} SNPs x {n} individuals")
    if m.ndim != 2 or m.shape != (len(base.taxon_ids), n):
        raise DataError(f"count matrix shape {m.shape} does not match "
                        f"{len(base.taxon_ids)} taxa x {n} individuals")
    if g.shape[0] == 0 or m.shape[0] == 0:
        raise DataError("genotype and count matrices must be non-empty")
    bad = ~np.isin(g, (0, 1, 2))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"genotype {g[r, c]!r} at ({base.snp_ids[r]}, "
                        f"{base.individual_ids[c]}) is not 0, 1 or 2")
    if np.any(m < 0) or np.any(m != np.floor(m)):
        r, c = np.argwhere((m < 0) | (m != np.floor(m)))[0]
        raise DataError(f"count {m[r, c]!r} at ({base.taxon_ids[r]}, "
                        f"{base.individual_ids[c]}) is not a non-negative integer")
    zero = np.flatnonzero(m.sum(axis=0) <= 0)
    if zero.size:
        ids = ", ".join(base.individual_ids[i] for i in zero)
        raise DataError(f"all-zero taxa-count column(s): {ids}")
    absent = np.flatnonzero(m.sum(axis=1) <= 0)
    if absent.size:
        ids = ", ".join(base.taxon_ids[i] for i in absent[:10])
        raise DataError(f"taxa with zero counts in every individual (filter them out): {ids}")
    base.genotypes = g.astype(np.int8)
    base.taxa_counts = m.astype(np.int64)


def read_table(path):
    """Read a labelled numeric TSV. Returns ``(values, row_ids, col_ids)``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty table")
    header = lines[0].split("\t")
    col_ids = header[1:]
    if not col_ids:
        raise DataError(f"{path}: header has no column ids")
    row_ids, rows = [], []
    for lineno, line in enumerate(lines[1:], 2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise DataError(f"{path}: row {cells[0]!r} has {len(cells) - 1} values, "
                            f"expected {len(col_ids)}")
        row_ids.append(cells[0])
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError:
            bad = next(j for j, c in enumerate(cells[1:]) if not _is_number(c))
            raise DataError(f"{path}: non-numeric value {cells[bad + 1]!r} at "
                            f"({cells[0]}, {col_ids[bad]})") from None
    if not rows:
        raise DataError(f"{path}: table has no data rows")
    return np.array(rows), row_ids, col_ids


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def format_value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_table(path, values, row_ids, col_ids, corner="id", integer=None):
    """Write a labelled matrix as TSV; reals use 17 significant digits."""
    values = np.asarray(values)
    if integer is None:
        integer = np.issubdtype(values.dtype, np.integer)
    fmt = "%d" if integer else "%.17g"
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join([corner, *map(str, col_ids)]) + "\n")
        for rid, row in zip(row_ids, values):
            fh.write(str(rid) + "\t" + "\t".join(fmt % v for v in row) + "\n")
    return path


def load_base_inputs(genotype_path, microbiota_path):
    """Load and cross-validate paired genotype and taxa-count tables.

    Count columns are reordered to follow the genotype column order.
    """
    g, snp_ids, g_ids = read_table(genotype_path)
    m, taxon_ids, m_ids = read_table(microbiota_path)
    for ids, what in ((g_ids, "genotype"), (m_ids, "microbiota")):
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate individual ids in {what} table")
    if set(g_ids) != set(m_ids):
        unmatched = sorted(set(g_ids) ^ set(m_ids))
        raise DataError("unmatched individual ids between genotype and microbiota "
                        "tables: " + ", ".join(unmatched))
    order = [m_ids.index(i) for i in g_ids]
    return BaseInputs(g, m[:, order], g_ids, snp_ids, taxon_ids)


def write_base_inputs(base, genotype_path, microbiota_path):
    write_table(genotype_path, base.genotypes, base.snp_ids, base.individual_ids, corner="snp")
    write_table(microbiota_path, base.taxa_counts, base.taxon_ids, base.individual_ids,
                corner="taxon")


def generate_synthetic_base(n_g, n_b, N, rng, depth=5000, profile_sd=1.0, taxon_sd=0.3,
                            n_modules=None, module_sd=1.0, noise_sd=0.0, dispersion=100.0,
                            prevalence=(0.5, 1.0)):
    """Synthetic paired base population for tests and demos.

    Genotypes are Binomial(2, f) per SNP with ``f ~ Beta(2, 2)``. Each
    individual's composition is a log-normal abundance profile perturbed on
    the log scale by shared module effects. Taxa are split into contiguous
    modules of about 15 that share a mean log-abundance (sd ``profile_sd``,
    plus ``taxon_sd`` jitter per taxon), which gives the taxa clustering
    blocks to find. Optional taxon-level log-normal noise comes on top.
    With ``prevalence=(lo, hi)`` each module is present in an individual
    with a module-specific probability drawn from U(lo, hi); absent modules
    get zero mass, mimicking the zero-inflation of real count tables (None
    disables this). Compositions are then drawn from a Dirichlet with total
    concentration ``dispersion`` around the perturbed profile (skipped when
    ``dispersion`` is None). Counts are ``Multinomial(depth, p_i)``; each
    taxon is guaranteed at least one read somewhere.

    The generator parameters are plumbing, not a model of any real dataset.
    """
    if min(n_g, n_b, N) < 2:
        raise ValueError("n_g, n_b and N must all be >= 2")
    freqs = rng.beta(2.0, 2.0, size=n_g)
    genotypes = rng.binomial(2, freqs[:, None], size=(n_g, N)).astype(np.int8)

    if n_modules is None:
        n_modules = max(1, n_b // 15)
    module = np.sort(rng.integers(0, n_modules, size=n_b))
    log_profile = (rng.normal(0.0, profile_sd, size=n_modules)[module]
                   + rng.normal(0.0, taxon_sd, size=n_b))
    module_effect = rng.normal(0.0, module_sd, size=(n_modules, N))
    log_p = log_profile[:, None] + module_effect[module]
    if noise_sd > 0:
        log_p = log_p + rng.normal(0.0, noise_sd, size=(n_b, N))
    p = np.exp(log_p - log_p.max(axis=0, keepdims=True))
    if prevalence is not None:
        lo, hi = prevalence
        present = rng.random((n_modules, N)) < rng.uniform(lo, hi, size=n_modules)[:, None]
        present[rng.integers(0, n_modules, size=N), np.arange(N)] = True
        p = p * present[module]
    p /= p.sum(axis=0, keepdims=True)
    if dispersion is not None:
        g = rng.standard_gamma(np.maximum(dispersion * p, 1e-12))
        p = np.maximum(g, np.finfo(float).tiny)
        p /= p.sum(axis=0, keepdims=True)
    counts = rng.multinomial(depth, p.T).T.astype(np.int64)
    absent = np.flatnonzero(counts.sum(axis=1) == 0)
    counts[absent, rng.integers(0, N, size=absent.size)] += 1

    width = len(str(max(n_g, n_b, N)))
    return BaseInputs(
        genotypes,
        counts,
        [f"ind{i:0{width}d}" for i in range(N)],
        [f"snp{i:0{width}d}" for i in range(n_g)],
        [f"otu{i:0{width}d}" for i in range(n_b)],
    )
