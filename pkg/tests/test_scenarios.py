import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flexmarket.scenarios import (ForecastDiagnostics, NoiseConfig,
                                  PercentileTable, ScenarioSet, build_tiers,
                                  build_week_features, cluster_weeks,
                                  compute_constituent_percentiles,
                                  compute_net_load_percentiles,
                                  default_self_hedge_cost_up,
                                  forecast_diagnostics,
                                  generate_synthetic_scenarios,
                                  read_scenarios_csv, to_injection,
                                  write_scenarios_csv)
from flexmarket.system import MarketConfig

PCTS = [5.0, 10.0, 20.0, 35.0, 50.0, 65.0, 80.0, 90.0, 95.0]


def sort_index_oracle(samples: np.ndarray, pct: float) -> float:
    """Nearest-rank quantile computed the long way, per sample column."""
    ordered = sorted(samples.tolist())
    rank = int(np.ceil(pct / 100.0 * len(ordered)))
    return ordered[max(rank, 1) - 1]


class TestConstituentPercentiles:
    def test_degenerate_distribution_is_flat(self):
        sset = ScenarioSet({"load": np.full((10, 6), 50.0)})
        table = compute_constituent_percentiles(sset, PCTS, "load")
        assert np.all(table.values == 50.0)

    def test_two_point_distribution_monotone(self):
        sset = ScenarioSet({"load": np.array([[0.0] * 4, [100.0] * 4])})
        table = compute_constituent_percentiles(sset, [5.0, 50.0, 95.0], "load")
        med = table.at(50.0)
        assert np.all((0 <= med) & (med <= 100))
        assert np.all(table.at(5.0) <= table.at(95.0))

    def test_matches_sort_index_oracle_exactly(self):
        rng = np.random.default_rng(11)
        data = rng.normal(100, 25, size=(5000, 3))
        sset = ScenarioSet({"x": data})
        table = compute_constituent_percentiles(sset, PCTS, "x")
        for j, p in enumerate(PCTS):
            for t in range(3):
                assert table.values[t, j] == sort_index_oracle(data[:, t], p)

    def test_rejects_out_of_range_percentiles(self):
        sset = ScenarioSet({"x": np.zeros((3, 2))})
        with pytest.raises(ValueError):
            compute_constituent_percentiles(sset, [0.0, 50.0], "x")
        with pytest.raises(ValueError):
            compute_constituent_percentiles(sset, [100.0], "x")

    def test_requires_two_scenarios(self):
        sset = ScenarioSet({"x": np.zeros((1, 2))})
        with pytest.raises(ValueError):
            compute_constituent_percentiles(sset, [50.0], "x")


class TestNetLoadPercentiles:
    def make(self, quantity, lo, mid, hi):
        vals = np.column_stack([np.full(4, lo), np.full(4, mid),
                                np.full(4, hi)])
        return PercentileTable(quantity, (5.0, 50.0, 95.0), vals)

    def test_zero_renewables_reduces_to_load(self):
        load = self.make("load", 20.0, 50.0, 80.0)
        zero = self.make("w", 0.0, 0.0, 0.0)
        nl = compute_net_load_percentiles(load, zero, zero)
        assert np.allclose(nl.values, load.values)

    def test_hand_evaluated_complementary_combination(self):
        load = self.make("load", 30000.0, 40000.0, 52000.0)
        wind = self.make("wind", 4000.0, 7000.0, 10000.0)
        solar = self.make("solar", 500.0, 1000.0, 2000.0)
        nl = compute_net_load_percentiles(load, wind, solar)
        # low net load pairs low load with high renewables
        assert np.all(nl.at(5.0) == 30000.0 - 10000.0 - 2000.0)
        assert np.all(nl.at(50.0) == 40000.0 - 7000.0 - 1000.0)
        assert np.all(nl.at(95.0) == 52000.0 - 4000.0 - 500.0)

    def test_symmetric_distributions_give_median_identity(self):
        load = self.make("load", 40.0, 50.0, 60.0)
        wind = self.make("wind", 5.0, 10.0, 15.0)
        solar = self.make("solar", 1.0, 2.0, 3.0)
        nl = compute_net_load_percentiles(load, wind, solar)
        assert np.all(nl.at(50.0) == 50.0 - 10.0 - 2.0)

    def test_missing_complementary_percentile_is_an_error(self):
        load = PercentileTable("load", (5.0, 50.0),
                               np.column_stack([np.full(2, 1.0),
                                                np.full(2, 2.0)]))
        wind = PercentileTable("wind", (5.0, 50.0),
                               np.column_stack([np.zeros(2), np.zeros(2)]))
        with pytest.raises(ValueError, match="complementary"):
            compute_net_load_percentiles(load, wind, wind)


class TestTiers:
    def test_default_percentiles_build_eight_tiers_with_rare_deep_tier(self):
        cfg = MarketConfig()
        vals = np.tile(np.linspace(100, 180, 9), (6, 1))
        table = PercentileTable("inj", tuple(PCTS), vals)
        tiers = build_tiers(table, cfg)
        assert tiers.num_tiers == 8
        assert tiers.prob_up[0] == pytest.approx(0.05)
        assert tiers.prob_down[-1] == pytest.approx(0.05)
        # scarcity-implied self-hedge cost of the rarest tier
        assert default_self_hedge_cost_up(tiers, cfg) == \
            pytest.approx(0.05 * 4500.0)
        assert default_self_hedge_cost_up(tiers, cfg) == 225.0

    def test_exercise_probabilities_strictly_ordered(self):
        tiers = build_tiers(PercentileTable(
            "inj", tuple(PCTS), np.tile(np.linspace(0, 80, 9), (3, 1))),
            MarketConfig())
        assert np.all(np.diff(tiers.prob_up) > 0)
        assert np.all(np.diff(tiers.prob_down) < 0)

    def test_single_percentile_rejected(self):
        cfg = MarketConfig(tier_percentiles=(50.0,))
        table = PercentileTable("inj", (50.0,), np.full((3, 1), 10.0))
        with pytest.raises(ValueError):
            build_tiers(table, cfg)

    def test_uniform_distribution_tier_widths_match_percentile_gaps(self):
        # closed-form quantiles of U[0, 100]: value(p) = p
        cfg = MarketConfig()
        vals = np.tile(np.array(PCTS), (4, 1))
        tiers = build_tiers(PercentileTable("inj", tuple(PCTS), vals), cfg)
        widths = tiers.widths("inj")[0]
        gaps = np.diff(PCTS)
        assert np.allclose(widths, gaps)
        assert widths[3] == pytest.approx(15.0)   # the [35, 50] band

    @given(st.lists(st.floats(-100, 100), min_size=9, max_size=9))
    @settings(max_examples=40)
    def test_tier_partition_is_exact(self, raw):
        vals = np.sort(np.asarray(raw, dtype=float))[None, :]
        tiers = build_tiers(PercentileTable("inj", tuple(PCTS), vals),
                            MarketConfig())
        total = tiers.widths("inj").sum()
        assert total == pytest.approx(vals[0, -1] - vals[0, 0], abs=1e-9)

    def test_full_crossing_probability_complement(self):
        # mass strictly above a tier's lower level completes to one
        tiers = build_tiers(PercentileTable(
            "inj", tuple(PCTS), np.tile(np.linspace(5, 95, 9), (2, 1))),
            MarketConfig())
        for r, p_lo in enumerate(PCTS[:-1]):
            assert tiers.prob_up[r] + (1 - p_lo / 100.0) == pytest.approx(1.0)

    def test_to_injection_flips_orientation(self):
        vals = np.tile(np.array([10.0, 20.0, 40.0]), (3, 1))
        table = PercentileTable("load", (5.0, 50.0, 95.0), vals)
        inj = to_injection(table)
        assert inj.percentiles == (5.0, 50.0, 95.0)
        assert np.all(inj.at(5.0) == -40.0)
        assert np.all(inj.at(95.0) == -10.0)
        assert np.all(inj.at(50.0) == -20.0)


class TestClusterWeeks:
    def brute_force_cost(self, z, k):
        z = (z - z.mean(axis=0)) / np.where(z.std(axis=0) > 0,
                                            z.std(axis=0), 1.0)
        dist = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
        best = None
        for medoids in itertools.combinations(range(len(z)), k):
            cost = dist[:, list(medoids)].min(axis=1).sum()
            if best is None or cost < best:
                best = cost
        return best

    def test_k_equals_n_gives_singletons(self):
        feats = np.arange(10, dtype=float).reshape(5, 2)
        result = cluster_weeks(feats, 5)
        assert sorted(result.medoids.tolist()) == [0, 1, 2, 3, 4]
        assert np.all(result.weights == 1)

    def test_two_separated_groups_match_exhaustive_oracle(self):
        rng = np.random.default_rng(3)
        a = rng.normal(0, 0.3, size=(4, 3))
        b = rng.normal(8, 0.3, size=(4, 3))
        feats = np.vstack([a, b])
        result = cluster_weeks(feats, 2)
        assert len(set(result.assignments[:4])) == 1
        assert len(set(result.assignments[4:])) == 1
        assert result.assignments[0] != result.assignments[4]
        # PAM must reach the exhaustive optimum on this instance
        z = (feats - feats.mean(axis=0)) / feats.std(axis=0)
        dist = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
        cost = dist[:, result.medoids].min(axis=1).sum()
        assert cost == pytest.approx(self.brute_force_cost(feats, 2), rel=1e-9)

    def test_identical_weeks_keep_weight_total(self):
        feats = np.ones((6, 4))
        result = cluster_weeks(feats, 2)
        assert result.weights.sum() == 6

    def test_medoid_objective_beats_any_other_member(self):
        rng = np.random.default_rng(9)
        feats = rng.normal(size=(12, 4))
        result = cluster_weeks(feats, 3)
        z = (feats - feats.mean(axis=0)) / feats.std(axis=0)
        dist = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
        for ci, m in enumerate(result.medoids):
            members = np.where(result.assignments == ci)[0]
            m_cost = dist[m, members].sum()
            for other in members:
                assert m_cost <= dist[other, members].sum() + 1e-9

    def test_invalid_k_rejected(self):
        feats = np.ones((4, 2))
        with pytest.raises(ValueError):
            cluster_weeks(feats, 0)
        with pytest.raises(ValueError):
            cluster_weeks(feats, 5)

    def test_week_features_shape_and_content(self):
        da = np.vstack([np.full(168, 100.0), np.linspace(0, 200, 168)])
        rt = da + 5.0
        feats = build_week_features(da, rt)
        assert feats.shape == (2, 4)
        assert feats[0, 0] == pytest.approx(100.0)
        assert feats[0, 1] == pytest.approx(0.0)


class TestDiagnostics:
    def test_perfect_median_forecast(self):
        rng = np.random.default_rng(5)
        data = np.sort(rng.normal(50, 10, size=(101, 8)), axis=0)
        actual = data[50]   # exactly the middle scenario
        diag = forecast_diagnostics(ScenarioSet({"nl": data}), actual, "nl")
        assert np.allclose(diag.observed_rank, 100 * 51 / 101)
        mid = diag.rank_curve[diag.rank_curve[:, 0] == 50][0]
        assert mid[1] == pytest.approx(100 * 51 / 101)
        assert abs(diag.error_mean) < 1e-9

    def test_total_miscalibration_ranks_100_everywhere(self):
        data = np.tile(np.linspace(0, 10, 20)[:, None], (1, 5))
        actual = np.full(5, 99.0)
        diag = forecast_diagnostics(ScenarioSet({"nl": data}), actual, "nl")
        assert np.all(diag.observed_rank == 100.0)
        assert np.all(diag.rank_curve[:, 1] == 100.0)

    def test_misaligned_axes_rejected(self):
        data = np.zeros((4, 6))
        with pytest.raises(ValueError):
            forecast_diagnostics(ScenarioSet({"nl": data}), np.zeros(5), "nl")


class TestSynthetic:
    def test_zero_noise_reproduces_profile(self):
        profile = np.linspace(10, 20, 24)
        sset = generate_synthetic_scenarios(
            profile, NoiseConfig(std=0.0, count=7), seed=1)
        assert np.allclose(sset.matrix("net_load"), profile)

    def test_same_seed_is_bitwise_identical(self):
        profile = np.linspace(10, 20, 24)
        a = generate_synthetic_scenarios(profile, NoiseConfig(std=3.0,
                                                              count=50), 42)
        b = generate_synthetic_scenarios(profile, NoiseConfig(std=3.0,
                                                              count=50), 42)
        assert np.array_equal(a.matrix("net_load"), b.matrix("net_load"))

    def test_ensemble_std_converges(self):
        profile = np.full(12, 100.0)
        sset = generate_synthetic_scenarios(
            profile, NoiseConfig(std=5.0, autocorr=0.6, count=10000), 3)
        sample_std = sset.matrix("net_load").std(axis=0).mean()
        assert sample_std == pytest.approx(5.0, rel=0.02)
        sample_mean = sset.matrix("net_load").mean(axis=0).mean()
        assert sample_mean == pytest.approx(100.0, abs=0.25)

    def test_autocorrelation_is_first_order(self):
        sset = generate_synthetic_scenarios(
            np.zeros(200), NoiseConfig(std=1.0, autocorr=0.7, count=400), 9)
        x = sset.matrix("net_load")
        lag1 = np.mean([np.corrcoef(x[i, :-1], x[i, 1:])[0, 1]
                        for i in range(50)])
        assert lag1 == pytest.approx(0.7, abs=0.06)

    def test_positive_count_required(self):
        with pytest.raises(ValueError):
            generate_synthetic_scenarios(np.zeros(4),
                                         NoiseConfig(std=1.0, count=0), 1)


def test_scenario_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    sset = ScenarioSet({"wind": rng.uniform(0, 50, (3, 5)),
                        "load": rng.uniform(100, 200, (3, 5))})
    path = tmp_path / "scen.csv"
    write_scenarios_csv(sset, str(path))
    back = read_scenarios_csv(str(path))
    for key in ("wind", "load"):
        assert np.allclose(back.matrix(key), sset.matrix(key), atol=1e-6)
