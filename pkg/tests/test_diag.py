import math

import numpy as np
import pytest
from scipy import stats

from wtflow.diag import (annulus_fraction, initial_radial_stats,
                         kl_perturbation_curve, marginal_field_oracle,
                         mixture_weights, radius_bound_check,
                         trajectory_norm_table)
from wtflow.model import VectorFieldModel
from wtflow.numcore import RandomStream
from wtflow.paths import PathKind, PathSpec, SingularityError
from wtflow.train import TrainConfig, train


def chi_interval_mass(d: int, beta: float) -> float:
    """Independent oracle: chi-distribution mass of the sqrt(d) +- beta annulus."""
    return float(stats.chi.cdf(math.sqrt(d) + beta, d)
                 - stats.chi.cdf(math.sqrt(d) - beta, d))


class TestAnnulus:
    def test_one_dimensional_case(self):
        frac = annulus_fraction(1, 10 ** 5, 1.0, RandomStream(60))
        assert abs(frac - chi_interval_mass(1, 1.0)) < 0.01
        assert abs(frac - 0.954) < 0.011

    def test_high_dimensional_concentration(self):
        frac = annulus_fraction(512, 10 ** 4, 3.0, RandomStream(61))
        assert frac >= 0.99
        assert abs(frac - chi_interval_mass(512, 3.0)) < 0.01

    def test_monotone_in_width(self):
        # identical draws (same seed) make the annuli nested
        narrow = annulus_fraction(16, 20000, 1.0, RandomStream(62))
        wide = annulus_fraction(16, 20000, 4.0, RandomStream(62))
        assert wide >= narrow

    def test_mc_tracks_oracle_across_seeds(self):
        d, n, beta = 16, 2000, 1.5
        p = chi_interval_mass(d, beta)
        bound = 3.0 * math.sqrt(p * (1.0 - p) / n)
        misses = sum(
            abs(annulus_fraction(d, n, beta, RandomStream(seed)) - p) >= bound
            for seed in range(20))
        assert misses <= 1  # 3-sigma bound holds for 95%+ of seeds

    def test_validation(self):
        with pytest.raises(ValueError):
            annulus_fraction(4, 10, 5.0, RandomStream(0))  # beta > sqrt(d)
        with pytest.raises(ValueError):
            annulus_fraction(0, 10, 1.0, RandomStream(0))


class TestKLCurve:
    def test_identical_densities_zero(self):
        curve = kl_perturbation_curve(0.0, 1.0, [0.0, 1e-3, 1e-2, 1e-1])
        assert np.array_equal(curve.kl, np.zeros(4))

    def test_quadratic_scaling(self):
        eps = np.logspace(-3, -1, 5)
        curve = kl_perturbation_curve(0.0, 4.0, eps)
        assert abs(curve.slope - 2.0) <= 0.1

    def test_zero_eps_exactly_zero(self):
        curve = kl_perturbation_curve(0.0, 4.0, [0.0, 1e-2])
        assert curve.kl[0] == 0.0

    def test_nonnegative(self):
        for var0 in (1.0, 2.5, 9.0):
            curve = kl_perturbation_curve(0.3, var0, [1e-3, 1e-2, 1e-1])
            assert np.all(curve.kl >= 0.0)

    def test_regime_restriction(self):
        with pytest.raises(ValueError):
            kl_perturbation_curve(0.0, 0.25, [1e-2])

    def test_eps_range_validated(self):
        with pytest.raises(ValueError):
            kl_perturbation_curve(0.0, 4.0, [0.5])


class TestMarginalField:
    def test_single_point_equals_conditional(self):
        spec = PathSpec(PathKind.FORWARD_RF)
        point = np.array([[0.7, -0.3]])
        x = np.array([0.2, 0.5])
        got = marginal_field_oracle(x, 0.4, point, spec)
        assert np.array_equal(got, spec.conditional_field(x, point[0], 0.4))

    def test_symmetric_pair_cancels(self):
        spec = PathSpec(PathKind.FORWARD_RF)
        a = np.array([1.3, -0.4])
        data = np.stack([a, -a])
        field = marginal_field_oracle(np.zeros(2), 0.5, data, spec)
        assert float(field @ a) == 0.0

    def test_matches_naive_summation(self):
        rs = RandomStream(63)
        data = rs.normal((8, 2))
        for spec in (PathSpec(PathKind.FORWARD_RF), PathSpec(PathKind.REVERSE_RF)):
            for _ in range(20):
                x = rs.normal((2,))
                t = 0.1 + 0.8 * float(rs.uniform(1)[0])
                sigma = spec.sigma(t)
                mus = np.stack([spec.mu(p, t) for p in data])
                dens = np.exp(-((x - mus) ** 2).sum(axis=1) / (2 * sigma ** 2))
                dens /= dens.sum()
                fields = np.stack([spec.conditional_field(x, p, t) for p in data])
                naive = (dens[:, None] * fields).sum(axis=0)
                got = marginal_field_oracle(x, t, data, spec)
                assert np.max(np.abs(got - naive)) < 1e-8

    def test_weights_normalized(self):
        rs = RandomStream(64)
        data = rs.normal((16, 3))
        w = mixture_weights(rs.normal((3,)), 0.3, data, PathSpec(PathKind.REVERSE_RF))
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.all(w >= 0.0)

    def test_reverse_singularity(self):
        spec = PathSpec(PathKind.REVERSE_RF)
        data = np.zeros((4, 2))
        with pytest.raises(SingularityError):
            marginal_field_oracle(np.zeros(2), spec.t_min / 2, data, spec)

    def test_far_query_stays_stable(self):
        # log-sum-exp keeps huge negative log-weights from underflowing to 0/0
        spec = PathSpec(PathKind.FORWARD_RF)
        data = RandomStream(65).normal((8, 2))
        field = marginal_field_oracle(np.array([1e4, -1e4]), 0.5, data, spec)
        assert np.all(np.isfinite(field))


class ScaledField:
    def __init__(self, factor):
        self.factor = factor

    def eval_batch(self, x, t):
        return self.factor * np.asarray(x, dtype=np.float64)


class TestNormTable:
    def test_zero_model_constant_columns(self):
        rs = RandomStream(66)
        model = VectorFieldModel(dim=2, hidden=(8,), init_stream=rs.child(0))
        table = trajectory_norm_table(model, rs.normal((10, 2)), n_steps=50)
        assert np.allclose(table.means, table.means[:, :1])

    def test_origin_sample_all_zero_row(self):
        rs = RandomStream(67)
        model = VectorFieldModel(dim=2, hidden=(8,), init_stream=rs.child(0))
        table = trajectory_norm_table(model, np.zeros((1, 2)), n_steps=10)
        assert np.array_equal(table.means, np.zeros((1, len(table.grid))))

    def test_grid_layout(self):
        rs = RandomStream(68)
        model = VectorFieldModel(dim=2, hidden=(8,), init_stream=rs.child(0))
        table = trajectory_norm_table(model, {"a": rs.normal((4, 2)),
                                              "b": rs.normal((6, 2))},
                                      n_steps=50)
        assert table.grid == list(range(0, 51, 5))
        assert table.means.shape == (2, 11)
        assert table.classes == ["a", "b"]

    def test_trained_toy_interior_minimum(self, disc_grid_run):
        scenario, result, _ = disc_grid_run
        table = trajectory_norm_table(result.model, {"normal": scenario.train},
                                      n_steps=50)
        assert table.argmin_of("normal") > 0


class TestRadialStats:
    def test_contracting_field(self):
        rs = RandomStream(69)
        data = rs.normal((50, 2))
        stats_in = initial_radial_stats(ScaledField(-1.0), data)
        assert stats_in.fraction_inward == 1.0
        expected = -float(np.linalg.norm(data, axis=1).mean())
        assert stats_in.mean_radial == pytest.approx(expected)

    def test_expanding_field(self):
        rs = RandomStream(70)
        stats_out = initial_radial_stats(ScaledField(1.0), rs.normal((50, 2)))
        assert stats_out.fraction_inward == 0.0

    def test_origin_samples_skipped(self):
        data = np.array([[0.0, 0.0], [1.0, 0.0]])
        got = initial_radial_stats(ScaledField(-1.0), data)
        assert got.n_used == 1 and got.n_skipped == 1

    def test_trained_reverse_model_moves_inward(self, disc_grid_run):
        scenario, result, _ = disc_grid_run
        got = initial_radial_stats(result.model, scenario.train)
        assert got.fraction_inward > 0.5


class TestRadiusBound:
    def test_zero_features(self):
        report = radius_bound_check(np.zeros((3, 4, 2, 2)))
        assert report.max_norm == 0.0 and not report.violation

    def test_single_large_entry_violates(self):
        feats = np.zeros((1, 4, 1, 1))
        feats[0, 0, 0, 0] = math.sqrt(4.0) + 1.0
        report = radius_bound_check(feats)
        assert report.violation
        assert report.bound == pytest.approx(2.0)

    def test_gaussian_features_near_shell(self):
        rs = RandomStream(71)
        feats = rs.normal((2, 64, 4, 4))
        report = radius_bound_check(feats)
        assert report.bound == pytest.approx(8.0)
        assert report.max_norm == pytest.approx(
            np.linalg.norm(feats.reshape(2, 64, 16), axis=1).max())


class TestOracleApproximationTrend:
    def test_msd_decreases_over_checkpoints(self):
        rs = RandomStream(72)
        data = rs.normal((256, 2)) * 0.7 + np.array([1.0, -0.5])
        spec = PathSpec(PathKind.FORWARD_RF)

        def msd(model):
            total = 0.0
            probe = RandomStream(73)
            for _ in range(64):
                x = probe.normal((2,)) * 1.2
                t = 0.1 + 0.7 * float(probe.uniform(1)[0])
                oracle = marginal_field_oracle(x, t, data, spec)
                got = model.eval_batch(x, t)
                total += float(((got - oracle) ** 2).sum())
            return total / 64

        deviations = []
        for steps in (1, 300, 1500):
            cfg = TrainConfig(learning_rate=1e-3, weight_decay=0.0, epochs=10000,
                              batch_size=128, lr_decay_factor=1.0, seed=72,
                              direction=PathKind.FORWARD_RF, wt_enabled=False,
                              hidden=(64, 64), max_steps=steps)
            deviations.append(msd(train(data, cfg).model))
        assert deviations[0] > deviations[1] > deviations[2]
