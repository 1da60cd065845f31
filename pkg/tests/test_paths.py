import numpy as np
import pytest

from wtflow.numcore import RandomStream, Tensor
from wtflow.paths import (PathKind, PathSpec, SingularityError,
                          conditional_target, eval_forward_ot_field,
                          eval_reverse_field, interpolate)


@pytest.fixture
def rs():
    return RandomStream(17)


class TestInterpolate:
    def test_endpoints_bit_exact(self, rs):
        x0 = Tensor(rs.normal((5,)))
        x1 = Tensor(rs.normal((5,)))
        assert np.array_equal(interpolate(x0, x1, 0.0).data, x0.data)
        assert np.array_equal(interpolate(x0, x1, 1.0).data, x1.data)

    def test_midpoint(self):
        x0 = Tensor([0.0, 0.0])
        x1 = Tensor([2.0, 4.0])
        assert np.array_equal(interpolate(x0, x1, 0.5).data, [1.0, 2.0])

    def test_bounds_and_shapes(self):
        x = Tensor([1.0])
        with pytest.raises(ValueError):
            interpolate(x, x, 1.5)
        with pytest.raises(ValueError):
            interpolate(x, Tensor([1.0, 2.0]), 0.5)


class TestConditionalTarget:
    def test_identical_endpoints(self):
        x = Tensor([3.0, -1.0])
        assert np.array_equal(conditional_target(x, x).data, [0.0, 0.0])

    def test_arithmetic(self):
        got = conditional_target(Tensor([1.0, 0.0]), Tensor([0.0, 1.0]))
        assert np.array_equal(got.data, [-1.0, 1.0])

    def test_matches_path_velocity(self, rs):
        # the straight path has constant velocity: difference quotients of the
        # interpolant must reproduce the target at every (t, h)
        x0 = Tensor(rs.normal((4,)))
        x1 = Tensor(rs.normal((4,)))
        target = conditional_target(x0, x1).data
        for t in (0.0, 0.2, 0.5, 0.85):
            for h in (0.15, 0.01, 1e-4):
                if t + h > 1.0:
                    continue
                quotient = (interpolate(x0, x1, t + h).data
                            - interpolate(x0, x1, t).data) / h
                assert np.allclose(quotient, target, atol=1e-7)


class TestReverseField:
    def test_singularity_at_zero(self):
        spec = PathSpec(PathKind.REVERSE_RF)
        x = Tensor([1.0, 0.0])
        with pytest.raises(SingularityError):
            eval_reverse_field(x, x, 0.0, spec)

    def test_singularity_below_guard_any_input(self, rs):
        spec = PathSpec(PathKind.REVERSE_RF)
        for _ in range(100):
            x_t = Tensor(rs.normal((3,)))
            x0 = Tensor(rs.normal((3,)))
            t = float(rs.uniform(1)[0]) * spec.t_min * 0.999
            with pytest.raises(SingularityError):
                eval_reverse_field(x_t, x0, t, spec)

    def test_on_path_recovers_target(self):
        spec = PathSpec(PathKind.REVERSE_RF)
        x0 = Tensor([1.0, 0.0])
        x1 = Tensor([0.0, 1.0])
        x_t = interpolate(x0, x1, 0.5)
        got = eval_reverse_field(x_t, x0, 0.5, spec)
        assert np.allclose(got.data, [-1.0, 1.0], atol=1e-12)

    def test_on_path_identity_over_time_grid(self, rs):
        spec = PathSpec(PathKind.REVERSE_RF)
        x0 = Tensor(rs.normal((6,)))
        x1 = Tensor(rs.normal((6,)))
        target = conditional_target(x0, x1).data
        for t in [spec.t_min, 0.1, 0.3, 0.5, 0.7, 0.9, 0.999, 1.0]:
            x_t = interpolate(x0, x1, t)
            got = eval_reverse_field(x_t, x0, t, spec).data
            assert np.max(np.abs(got - target)) < 1e-9

    def test_degenerate_pair_is_zero(self):
        spec = PathSpec(PathKind.REVERSE_RF)
        x0 = Tensor([0.4, -0.7])
        got = eval_reverse_field(x0, x0, 0.5, spec)
        assert np.allclose(got.data, 0.0, atol=1e-15)

    def test_requires_reverse_spec(self):
        x = Tensor([1.0])
        with pytest.raises(ValueError):
            eval_reverse_field(x, x, 0.5, PathSpec(PathKind.FORWARD_RF))


class TestForwardOTField:
    def test_at_zero_substitutes_directly(self):
        x0 = Tensor([2.0, -1.0])
        x1 = Tensor([0.5, 0.5])
        eps = 0.25
        got = eval_forward_ot_field(x0, x1, 0.0, eps)
        assert np.allclose(got.data, x1.data - (1 - eps) * x0.data, atol=1e-12)

    def test_small_eps_limit_matches_straight_target(self, rs):
        x0 = Tensor(rs.normal((4,)))
        x1 = Tensor(rs.normal((4,)))
        eps = 1e-8
        t = 0.4
        x_t = Tensor(t * x1.data + (1 - (1 - eps) * t) * x0.data)
        got = eval_forward_ot_field(x_t, x1, t, eps)
        assert np.max(np.abs(got.data - conditional_target(x0, x1).data)) < 1e-6

    def test_zero_inputs(self):
        z = Tensor([0.0, 0.0])
        got = eval_forward_ot_field(z, z, 0.3, 0.1)
        assert np.array_equal(got.data, [0.0, 0.0])

    def test_epsilon_validation(self):
        x = Tensor([1.0])
        with pytest.raises(ValueError):
            eval_forward_ot_field(x, x, 0.5, 0.0)
        with pytest.raises(ValueError):
            eval_forward_ot_field(x, x, 1.0, 0.1)


class TestPathSpec:
    def test_forward_ot_needs_epsilon(self):
        with pytest.raises(ValueError):
            PathSpec(PathKind.FORWARD_OT, epsilon=0.0)

    def test_forward_field_guard_near_one(self):
        spec = PathSpec(PathKind.FORWARD_RF)
        with pytest.raises(SingularityError):
            spec.conditional_field(np.array([1.0]), np.array([1.0]), 1.0)

    def test_schedules(self):
        assert PathSpec(PathKind.REVERSE_RF).sigma(0.3) == pytest.approx(0.3)
        assert PathSpec(PathKind.FORWARD_RF).sigma(0.3) == pytest.approx(0.7)
        ot = PathSpec(PathKind.FORWARD_OT, epsilon=0.1)
        assert ot.sigma(1.0) == pytest.approx(0.1)
