"""Phased genotypes, Haldane gametes, mating and pedigree bookkeeping.

Haplotypes are stored as ``n_g x n`` ``uint8`` matrices (one column per
individual), matching the orientation of dosage matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


def round_half_up(x):
    return int(np.floor(x + 0.5))


@dataclass
class PhasedGenotype:
    hap_a: np.ndarray
    hap_b: np.ndarray

    @property
    def dosage(self):
        return self.hap_a.astype(np.int8) + self.hap_b.astype(np.int8)


@dataclass
class Haplotypes:
    """Phased genotypes of a whole generation (columns are individuals)."""

    hap_a: np.ndarray
    hap_b: np.ndarray

    def __len__(self):
        return self.hap_a.shape[1]

    def __getitem__(self, i):
        return PhasedGenotype(self.hap_a[:, i], self.hap_b[:, i])

    @property
    def n_snps(self):
        return self.hap_a.shape[0]

    @property
    def dosage(self):
        return self.hap_a.astype(np.int8) + self.hap_b.astype(np.int8)


@dataclass(frozen=True)
class PedigreeEntry:
    id: str
    generation: int
    sire: str | None
    dam: str | None
    sex: str  # "F" or "M"


class GeneticMap:
    """Per-SNP positions in Morgans, grouped by chromosome.

    ``chromosomes`` holds ``(start, stop)`` SNP index ranges and ``positions``
    the cumulative within-chromosome positions.
    """

    def __init__(self, positions, chrom_ids=None, lengths=None):
        positions = np.asarray(positions, dtype=float)
        if chrom_ids is None:
            chrom_ids = np.zeros(positions.size, dtype=int)
        chrom_ids = np.asarray(chrom_ids)
        bounds = np.flatnonzero(chrom_ids[1:] != chrom_ids[:-1]) + 1
        starts = np.concatenate([[0], bounds])
        stops = np.concatenate([bounds, [positions.size]])
        if len(set(chrom_ids[starts].tolist())) != len(starts):
            raise DataError("genetic map: SNPs of a chromosome must be contiguous")
        self.positions = positions
        self.chromosomes = list(zip(starts.tolist(), stops.tolist()))
        self.lengths = []
        for k, (a, b) in enumerate(self.chromosomes):
            seg = positions[a:b]
            if np.any(np.diff(seg) < 0):
                raise DataError("genetic map positions must be non-decreasing within a chromosome")
            length = lengths[k] if lengths is not None else seg[-1] - seg[0]
            self.lengths.append(float(length))
        self.offsets = [float(positions[a]) for a, _ in self.chromosomes]

    def __len__(self):
        return self.positions.size

    @classmethod
    def uniform(cls, n_g, length=1.0):
        """``n_g`` SNPs evenly spaced over one chromosome of ``length`` Morgans."""
        if n_g == 1:
            return cls(np.zeros(1), lengths=[length])
        return cls(np.linspace(0.0, length, n_g), lengths=[length])

    @classmethod
    def from_tsv(cls, path, snp_ids=None):
        """Read ``chromosome, snp_id, position_morgans`` rows (header optional)."""
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            cells = line.split("\t")
            if len(cells) != 3:
                raise DataError(f"{path}: expected 3 columns, got {len(cells)}")
            try:
                rows.append((cells[0], cells[1], float(cells[2])))
            except ValueError:
                if not rows:  # header row
                    continue
                raise DataError(f"{path}: bad position {cells[2]!r} for {cells[1]}") from None
        if snp_ids is not None:
            by_id = {r[1]: r for r in rows}
            missing = [s for s in snp_ids if s not in by_id]
            if missing:
                raise DataError(f"{path}: no map position for SNP(s) {', '.join(missing[:5])}")
            rows = [by_id[s] for s in snp_ids]
        chroms = np.array([r[0] for r in rows])
        return cls(np.array([r[2] for r in rows]), chroms)


def phase_base_population(genotypes, rng):
    """Assign random phase to heterozygous sites of a dosage matrix."""
    g = np.asarray(genotypes)
    het = g == 1
    flip = rng.random(g.shape) < 0.5
    hap_a = ((g == 2) | (het & flip)).astype(np.uint8)
    hap_b = (g - hap_a).astype(np.uint8)
    return Haplotypes(hap_a, hap_b)


def _transmitted_from_a(genetic_map, rng):
    """Boolean mask: True where the gamete copies the parent's first haplotype."""
    out = np.empty(len(genetic_map), dtype=bool)
    for (start, stop), length, offset in zip(genetic_map.chromosomes, genetic_map.lengths,
                                             genetic_map.offsets):
        from_a = rng.random() < 0.5
        n_co = rng.poisson(length) if length > 0 else 0
        pos = genetic_map.positions[start:stop] - offset
        if n_co:
            xs = np.sort(rng.uniform(0.0, length, size=n_co))
            switches = np.searchsorted(xs, pos, side="right")
            out[start:stop] = (switches % 2 == 0) == from_a
        else:
            out[start:stop] = from_a
    return out


def make_gamete(parent, genetic_map, rng):
    """Recombinant haplotype transmitted by ``parent`` under the Haldane model."""
    if len(genetic_map) != parent.hap_a.size:
        raise ValueError("genetic map length does not match the number of SNPs")
    mask = _transmitted_from_a(genetic_map, rng)
    return np.where(mask, parent.hap_a, parent.hap_b).astype(np.uint8)


def mate(sire, dam, genetic_map, rng):
    """Offspring with the dam's gamete as ``hap_a`` and the sire's as ``hap_b``."""
    if sire.hap_a.size != dam.hap_a.size:
        raise ValueError("parents have different numbers of SNPs")
    hap_a = make_gamete(dam, genetic_map, rng)
    hap_b = make_gamete(sire, genetic_map, rng)
    return PhasedGenotype(hap_a, hap_b)


def assign_sexes(n, sex_ratio, rng):
    """``round_half_up(sex_ratio * n)`` females, the rest males, shuffled."""
    n_f = round_half_up(sex_ratio * n)
    sexes = np.array(["F"] * n_f + ["M"] * (n - n_f))
    return sexes[rng.permutation(n)]


def build_generation(parents, selected_F, selected_M, n_ind, sex_ratio, genetic_map, rng,
                     generation, id_format="G{t}_{i:05d}"):
    """Breed ``n_ind`` offspring from the selected dams and sires.

    ``parents`` is the previous generation's :class:`Haplotypes`;
    ``selected_F`` / ``selected_M`` are ``(column index, id)`` pairs. Each
    offspring draws its dam and sire uniformly with replacement.

    Returns ``(Haplotypes, list[PedigreeEntry], dam_idx, sire_idx)`` where
    the index arrays point into the parental columns.
    """
    if len(selected_F) == 0 or len(selected_M) == 0:
        raise ValueError("both parent lists must be non-empty")
    sexes = assign_sexes(n_ind, sex_ratio, rng)
    f_cols = np.array([c for c, _ in selected_F])
    m_cols = np.array([c for c, _ in selected_M])
    f_ids = [i for _, i in selected_F]
    m_ids = [i for _, i in selected_M]
    dam_pick = rng.integers(0, len(f_cols), size=n_ind)
    sire_pick = rng.integers(0, len(m_cols), size=n_ind)

    n_g = parents.n_snps
    hap_a = np.empty((n_g, n_ind), dtype=np.uint8)
    hap_b = np.empty((n_g, n_ind), dtype=np.uint8)
    pedigree = []
    for i in range(n_ind):
        dam = parents[f_cols[dam_pick[i]]]
        sire = parents[m_cols[sire_pick[i]]]
        child = mate(sire, dam, genetic_map, rng)
        hap_a[:, i] = child.hap_a
        hap_b[:, i] = child.hap_b
        pedigree.append(PedigreeEntry(id_format.format(t=generation, i=i), generation,
                                      m_ids[sire_pick[i]], f_ids[dam_pick[i]], str(sexes[i])))
    return Haplotypes(hap_a, hap_b), pedigree, f_cols[dam_pick], m_cols[sire_pick]
