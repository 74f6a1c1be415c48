import numpy as np
import pytest

from holosim.config import EnvEffectSpec
from holosim.genome import GeneticMap
from holosim.rng import StreamFactory
from holosim.simulation import (advance_generation, base_compositions, prepare_base,
                                run_replicates, run_simulation)


def _assert_records_equal(a, b):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.ids == y.ids
        np.testing.assert_array_equal(x.genotypes, y.genotypes)
        np.testing.assert_array_equal(x.compositions, y.compositions)
        np.testing.assert_array_equal(x.phenotypes, y.phenotypes)
        np.testing.assert_array_equal(x.diversity, y.diversity)


class TestPrepareBase:
    def test_targets_and_no_modulation(self, small_base, small_config):
        state = prepare_base(small_base, small_config, StreamFactory(small_config.seed))
        g0 = state.records[0]
        h2, b2, _ = g0.components
        assert h2 == pytest.approx(0.25, abs=1e-6) and b2 == pytest.approx(0.25, abs=1e-6)
        np.testing.assert_array_equal(g0.compositions,
                                      base_compositions(small_base.taxa_counts, small_config.pi))
        np.testing.assert_array_equal(g0.genotypes, small_base.genotypes)
        assert g0.generation == 0 and g0.n == small_base.n_individuals

    def test_deterministic(self, small_base, small_config):
        a = prepare_base(small_base, small_config, StreamFactory(5)).records
        b = prepare_base(small_base, small_config, StreamFactory(5)).records
        _assert_records_equal(a, b)

    def test_zero_direct_heritability(self, small_base, small_config):
        state = prepare_base(small_base, small_config.replace(h2_d=0.0), StreamFactory(1))
        assert not state.effects.phenotype.alpha.any()
        assert state.records[0].components[1] == pytest.approx(0.25, abs=1e-6)

    def test_genetic_map_mismatch(self, small_base, small_config):
        with pytest.raises(ValueError):
            prepare_base(small_base, small_config, StreamFactory(1), GeneticMap.uniform(3))


class TestGenerationLoop:
    def test_record_count(self, small_base, small_config):
        records, _ = run_simulation(small_base, small_config.replace(n_gen=1))
        assert [r.generation for r in records] == [0, 1]

    def test_defaults_give_six_records(self, small_base, small_config):
        records, _ = run_simulation(small_base, small_config.replace(n_gen=5))
        assert len(records) == 6

    def test_transmission_identity(self, small_base, small_config):
        cfg = small_config.replace(lam=1.0, sigma_m=0.0, effect_size=0.0)
        records, _ = run_simulation(small_base, cfg)
        for prev, rec in zip(records, records[1:]):
            np.testing.assert_allclose(rec.compositions, prev.compositions[:, rec.dam_index],
                                       atol=1e-9)

    def test_parents_flagged_and_valid(self, small_base, small_config):
        records, _ = run_simulation(small_base, small_config.replace(selection="BV_T", n_gen=3))
        for prev, rec in zip(records, records[1:]):
            ids = {i: k for k, i in enumerate(prev.ids)}
            for p in rec.pedigree:
                assert prev.selected[ids[p.dam]] and prev.selected[ids[p.sire]]
                assert prev.sexes[ids[p.dam]] == "F" and prev.sexes[ids[p.sire]] == "M"
        # G0 -> G1 mates everyone; later generations keep 30% per sex
        assert records[0].selected.all()
        n1 = records[1].n
        assert records[1].selected.sum() == 2 * round(0.3 * n1 / 2)

    def test_select_from_g0(self, small_base, small_config):
        records, _ = run_simulation(small_base, small_config.replace(selection="BV_T",
                                                                     select_from_g0=True))
        assert not records[0].selected.all()

    def test_simplex_and_lengths(self, small_base, small_config):
        records, _ = run_simulation(small_base, small_config.replace(n_ind=30))
        for rec in records[1:]:
            assert rec.n == 30
            assert np.all(rec.compositions > 0)
            np.testing.assert_allclose(rec.compositions.sum(axis=0), 1.0, atol=1e-9)
            for v in (rec.phenotypes, rec.diversity, rec.bv.bv_t, rec.microbiota_effect):
                assert v.shape == (30,)
            np.testing.assert_array_equal(rec.bv.bv_t, rec.bv.bv_d + rec.bv.bv_m)

    def test_ambient_mean_from_previous_generation(self, small_base, small_config):
        records, _ = run_simulation(small_base, small_config)
        np.testing.assert_allclose(records[2].ambient_mean, records[1].compositions.mean(axis=1))

    def test_effects_frozen(self, small_base, small_config):
        state = prepare_base(small_base, small_config, StreamFactory(2))
        alpha = state.effects.phenotype.alpha.copy()
        beta = state.effects.beta.toarray().copy()
        advance_generation(state)
        advance_generation(state)
        np.testing.assert_array_equal(state.effects.phenotype.alpha, alpha)
        np.testing.assert_array_equal(state.effects.beta.toarray(), beta)

    def test_theta_reused_across_generations(self, small_base, small_config):
        spec = EnvEffectSpec(generations=(1, 2), effect_sd=2.0)
        cfg = small_config.replace(env_effects=(spec,), sigma_m=0.0, lam=1.0, effect_size=0.0)
        records, effects = run_simulation(small_base, cfg)
        theta = effects.theta[:, 0]
        for prev, rec in zip(records, records[1:]):
            exposed = rec.env_design[:, 0] > 0
            assert exposed.sum() == round(0.5 * rec.n)
            # with pure vertical transmission the CLR shift is exactly theta
            shift = rec.clr - prev.clr[:, rec.dam_index]
            np.testing.assert_allclose(shift[:, exposed] - shift[:, exposed].mean(axis=0),
                                       np.repeat((theta - theta.mean())[:, None], exposed.sum(), 1),
                                       atol=1e-9)
            np.testing.assert_allclose(shift[:, ~exposed], 0.0, atol=1e-9)


class TestReplicates:
    def test_single_replicate_matches_run(self, small_base, small_config):
        direct, _ = run_simulation(small_base, small_config, replicate=0)
        rs = run_replicates(small_base, small_config, n_reps=1)
        _assert_records_equal(direct, rs.results[0][0])

    def test_scheduling_independent(self, small_base, small_config):
        serial = run_replicates(small_base, small_config, n_reps=3)
        pooled = run_replicates(small_base, small_config, n_reps=3, parallelism=2)
        for a, b in zip(serial.results, pooled.results):
            _assert_records_equal(a[0], b[0])
        assert serial.aggregate == pooled.aggregate

    def test_replicates_differ(self, small_base, small_config):
        rs = run_replicates(small_base, small_config, n_reps=2)
        assert not np.array_equal(rs.results[0][0][1].phenotypes, rs.results[1][0][1].phenotypes)

    def test_failures_reported(self, small_base, small_config):
        rs = run_replicates(small_base, small_config, n_reps=2, genetic_map=GeneticMap.uniform(3))
        assert sorted(rs.failures) == [0, 1]
        assert rs.aggregate == [] and rs.results == [None, None]

    def test_reducer_and_aggregate(self, small_base, small_config):
        rs = run_replicates(small_base, small_config, n_reps=3,
                            reducer=lambda r, recs, eff: (r, len(recs)))
        assert rs.results == [(0, 3), (1, 3), (2, 3)]
        g0 = rs.aggregate[0]
        assert g0["n_replicates"] == 3
        assert g0["h2_d_lo"] <= g0["h2_d"] <= g0["h2_d_hi"]

    def test_bad_count(self, small_base, small_config):
        with pytest.raises(ValueError):
            run_replicates(small_base, small_config, n_reps=0)
