import numpy as np
import pytest

from holosim.errors import DataError
from holosim.genome import (GeneticMap, Haplotypes, PhasedGenotype, assign_sexes,
                            build_generation, make_gamete, mate, phase_base_population,
                            round_half_up)
from holosim.rng import StreamFactory, make_rng


def _het_parent(n):
    return PhasedGenotype(np.zeros(n, dtype=np.uint8), np.ones(n, dtype=np.uint8))


def _all(haps):
    ids = [f"i{k}" for k in range(len(haps))]
    return [(k, ids[k]) for k in range(len(haps))]


def _random_mating(haps, gmap, rng, t):
    n = len(haps)
    sexes = assign_sexes(n, 0.5, rng)
    f = [(k, f"i{k}") for k in np.flatnonzero(sexes == "F")]
    m = [(k, f"i{k}") for k in np.flatnonzero(sexes == "M")]
    return build_generation(haps, f, m, n, 0.5, gmap, rng, t)[0]


class TestPhasing:
    def test_homozygous_unique(self):
        g = np.array([[0, 2], [2, 0]])
        h = phase_base_population(g, make_rng(0))
        np.testing.assert_array_equal(h.hap_a, g // 2)
        np.testing.assert_array_equal(h.hap_b, g // 2)

    def test_dosage_identity(self):
        g = make_rng(1).integers(0, 3, size=(50, 20))
        np.testing.assert_array_equal(phase_base_population(g, make_rng(2)).dosage, g)

    def test_het_phase_balance(self):
        h = phase_base_population(np.ones((10_000, 1), dtype=int), make_rng(3))
        assert h.hap_a.mean() == pytest.approx(0.5, abs=0.02)


class TestGamete:
    def test_homozygous_parent(self):
        p = PhasedGenotype(np.array([1, 0, 1], dtype=np.uint8), np.array([1, 0, 1], dtype=np.uint8))
        gam = make_gamete(p, GeneticMap.uniform(3), make_rng(4))
        np.testing.assert_array_equal(gam, [1, 0, 1])

    def test_het_transmission_rate(self):
        rng = make_rng(5)
        p, gmap = _het_parent(5), GeneticMap.uniform(5)
        alleles = np.array([make_gamete(p, gmap, rng)[2] for _ in range(10_000)])
        assert alleles.mean() == pytest.approx(0.5, abs=0.02)

    def test_recombination_fraction_matches_haldane(self):
        # two loci 0.2 M apart: r = (1 - exp(-2d)) / 2
        rng = make_rng(6)
        p = PhasedGenotype(np.array([0, 0], dtype=np.uint8), np.array([1, 1], dtype=np.uint8))
        gmap = GeneticMap(np.array([0.3, 0.5]), lengths=[1.0])
        rec = np.mean([np.diff(make_gamete(p, gmap, rng).astype(int))[0] != 0
                       for _ in range(20_000)])
        assert rec == pytest.approx((1 - np.exp(-0.4)) / 2, abs=0.015)

    def test_unlinked_chromosomes(self):
        rng = make_rng(7)
        p = PhasedGenotype(np.array([0, 0], dtype=np.uint8), np.array([1, 1], dtype=np.uint8))
        gmap = GeneticMap(np.array([0.0, 0.0]), chrom_ids=["1", "2"])
        diffs = [np.diff(make_gamete(p, gmap, rng).astype(int))[0] != 0 for _ in range(10_000)]
        assert np.mean(diffs) == pytest.approx(0.5, abs=0.02)

    def test_map_length_mismatch(self):
        with pytest.raises(ValueError):
            make_gamete(_het_parent(4), GeneticMap.uniform(3), make_rng(0))


class TestMate:
    def test_forced_outcomes(self):
        two = PhasedGenotype(np.ones(2, dtype=np.uint8), np.ones(2, dtype=np.uint8))
        zero = PhasedGenotype(np.zeros(2, dtype=np.uint8), np.zeros(2, dtype=np.uint8))
        gmap = GeneticMap.uniform(2)
        np.testing.assert_array_equal(mate(two, two, gmap, make_rng(0)).dosage, [2, 2])
        child = mate(zero, two, gmap, make_rng(0))
        np.testing.assert_array_equal(child.dosage, [1, 1])
        # hap_a comes from the dam
        np.testing.assert_array_equal(child.hap_a, [1, 1])

    def test_punnett_ratios(self):
        rng, gmap = make_rng(8), GeneticMap.uniform(1)
        p = _het_parent(1)
        d = np.array([mate(p, p, gmap, rng).dosage[0] for _ in range(10_000)])
        freq = np.bincount(d, minlength=3) / d.size
        np.testing.assert_allclose(freq, [0.25, 0.5, 0.25], atol=0.02)


class TestBuildGeneration:
    def test_sex_counts(self):
        assert (assign_sexes(500, 0.5, make_rng(0)) == "F").sum() == 250
        assert (assign_sexes(5, 0.5, make_rng(0)) == "F").sum() == 3
        assert round_half_up(2.5) == 3 and round_half_up(1.49) == 1

    def test_pedigree_membership(self):
        g = make_rng(9).integers(0, 3, size=(30, 12))
        haps = phase_base_population(g, make_rng(10))
        ids = [f"i{k}" for k in range(12)]
        fem = [(k, ids[k]) for k in (0, 2, 4)]
        mal = [(k, ids[k]) for k in (1, 3)]
        kids, ped, dam_idx, sire_idx = build_generation(haps, fem, mal, 25, 0.5,
                                                        GeneticMap.uniform(30), make_rng(11), 1)
        assert len(kids) == 25 and len(ped) == 25
        assert {p.dam for p in ped} <= {"i0", "i2", "i4"}
        assert {p.sire for p in ped} <= {"i1", "i3"}
        assert all(p.generation == 1 for p in ped)
        assert [ids[k] for k in dam_idx] == [p.dam for p in ped]
        assert sum(p.sex == "F" for p in ped) == 13

    def test_offspring_alleles_come_from_parents(self):
        g = make_rng(12).integers(0, 3, size=(40, 10))
        haps = phase_base_population(g, make_rng(13))
        kids, _, dam_idx, sire_idx = build_generation(
            haps, [(0, "a"), (1, "b")], [(2, "c")], 20, 0.5, GeneticMap.uniform(40),
            make_rng(14), 1)
        for i in range(20):
            d, s = haps[dam_idx[i]], haps[sire_idx[i]]
            assert np.all((kids.hap_a[:, i] == d.hap_a) | (kids.hap_a[:, i] == d.hap_b))
            assert np.all((kids.hap_b[:, i] == s.hap_a) | (kids.hap_b[:, i] == s.hap_b))

    def test_empty_parent_list(self):
        haps = Haplotypes(np.zeros((2, 2), dtype=np.uint8), np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(ValueError):
            build_generation(haps, [], [(0, "a")], 2, 0.5, GeneticMap.uniform(2), make_rng(0), 1)


class TestGeneticMap:
    def test_from_tsv_orders_by_snp_ids(self, tmp_path):
        p = tmp_path / "map.tsv"
        p.write_text("chromosome\tsnp_id\tposition_morgans\n1\tb\t0.5\n1\ta\t0.1\n2\tc\t0.0\n")
        gmap = GeneticMap.from_tsv(p, ["a", "b", "c"])
        np.testing.assert_allclose(gmap.positions, [0.1, 0.5, 0.0])
        assert gmap.chromosomes == [(0, 2), (2, 3)]

    def test_from_tsv_missing_snp(self, tmp_path):
        p = tmp_path / "map.tsv"
        p.write_text("1\ta\t0.1\n")
        with pytest.raises(DataError, match="b"):
            GeneticMap.from_tsv(p, ["a", "b"])

    def test_noncontiguous_chromosome(self):
        with pytest.raises(DataError):
            GeneticMap(np.zeros(3), chrom_ids=["1", "2", "1"])


class TestPopulationProperties:
    def test_allele_frequency_martingale(self):
        n_g, n, reps = 60, 80, 50
        g0 = make_rng(15).binomial(2, 0.5, size=(n_g, n))
        p0 = g0.mean(axis=1) / 2
        gmap = GeneticMap.uniform(n_g)
        finals = []
        for r in range(reps):
            streams = StreamFactory(99, r)
            haps = phase_base_population(g0, streams.get("phase"))
            for t in range(1, 6):
                haps = _random_mating(haps, gmap, streams.get("mating", t), t)
            finals.append(haps.dosage.mean(axis=1) / 2)
        finals = np.array(finals)
        se = finals.std(axis=0, ddof=1) / np.sqrt(reps)
        ok = np.abs(finals.mean(axis=0) - p0) <= 3 * se
        assert ok.mean() >= 0.95

    def test_ld_preserved_across_one_generation(self):
        # base with block LD: each individual copies one of 4 founder haplotypes per block
        rng = make_rng(16)
        n_g, n, block = 200, 200, 20
        founders = rng.integers(0, 2, size=(4, n_g))
        def mosaic():
            pick = np.repeat(rng.integers(0, 4, size=n_g // block), block)
            return founders[pick, np.arange(n_g)]
        g0 = np.array([mosaic() + mosaic() for _ in range(n)]).T
        haps = phase_base_population(g0, rng)
        g1 = _random_mating(haps, GeneticMap.uniform(n_g), rng, 1).dosage

        def adjacent_r2(g):
            g = g.astype(float)
            r2 = []
            for s in range(g.shape[0] - 1):
                a, b = g[s], g[s + 1]
                if a.std() > 0 and b.std() > 0:
                    r2.append(np.corrcoef(a, b)[0, 1] ** 2)
                else:
                    r2.append(np.nan)
            return np.array(r2)

        shuffled = np.array([rng.permutation(row) for row in g0])
        r0, r1, rs = adjacent_r2(g0), adjacent_r2(g1), adjacent_r2(shuffled)
        keep = np.isfinite(r0) & np.isfinite(r1) & np.isfinite(rs)
        assert np.mean(np.abs(r1 - r0)[keep]) < np.mean(np.abs(rs - r0)[keep])
