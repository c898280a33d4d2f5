import math

import numpy as np
import pytest

from lkcert import (InitialFunction, RhsSystem, SimConfig, SimulationAborted,
                    build_example_system, in_S_alpha, node_segment_sup_norms,
                    sample, segment_sup_norm, simulate)
from lkcert.ddesim import rhs_eval


def linear_dde(h=1.0):
    """Scalar x'(t) = -x(t - h)."""
    return RhsSystem(n=1, h=h,
                     f_eval=lambda x, xd: -xd,
                     q_eval=lambda x, xd: np.zeros(1),
                     b_eval=lambda t: np.zeros((1, 1)))


def zero_rhs(n=2, h=1.0):
    return RhsSystem(n=n, h=h,
                     f_eval=lambda x, xd: np.zeros(n),
                     q_eval=lambda x, xd: np.zeros(n),
                     b_eval=lambda t: np.zeros((n, n)))


class TestSimulateBasics:
    def test_zero_rhs_holds_constant(self):
        sys = zero_rhs()
        phi = InitialFunction.constant(np.array([3.0, -2.0]), sys.h)
        traj = simulate(sys, phi, SimConfig(step=0.1, t_end=5.0))
        assert np.all(traj.nodes == np.array([3.0, -2.0]))
        assert traj.t_end == pytest.approx(5.0)

    def test_misaligned_step_rejected(self):
        sys = linear_dde(h=1.0)
        phi = InitialFunction.constant(np.ones(1), 1.0)
        with pytest.raises(ValueError, match="multiple"):
            simulate(sys, phi, SimConfig(step=0.3, t_end=2.0))

    def test_phi_horizon_mismatch_rejected(self):
        sys = linear_dde(h=1.0)
        phi = InitialFunction.constant(np.ones(1), 2.0)
        with pytest.raises(ValueError, match="horizon"):
            simulate(sys, phi, SimConfig(step=0.1, t_end=2.0))

    def test_blowup_raises_with_failure_time(self):
        sys = RhsSystem(n=1, h=0.1,
                        f_eval=lambda x, xd: x ** 3,
                        q_eval=lambda x, xd: np.zeros(1),
                        b_eval=lambda t: np.zeros((1, 1)))
        phi = InitialFunction.constant(np.array([10.0]), 0.1)
        with pytest.raises(SimulationAborted) as err, \
                np.errstate(over="ignore", invalid="ignore"):
            simulate(sys, phi, SimConfig(step=0.001, t_end=1.0))
        assert 0 < err.value.t_fail < 1.0

    def test_deterministic_bitwise(self, example3):
        spec, _ = example3
        phi = InitialFunction.constant(np.array([6e-4, 6e-4]), spec.h)
        cfg = SimConfig(step=1e-2, t_end=5.0)
        t1 = simulate(spec, phi, cfg)
        t2 = simulate(spec, phi, cfg)
        assert np.array_equal(t1.nodes, t2.nodes)
        assert np.array_equal(t1.derivs, t2.derivs)

    def test_rhs_eval_dimension_check(self, example3):
        spec, _ = example3
        with pytest.raises(ValueError):
            rhs_eval(spec, 0.0, np.zeros(3), np.zeros(3))


class TestLinearAnalytic:
    """x'(t) = -x(t-1), phi = 1: x(t) = 1 - t on [0,1], x(2) = -1/2."""

    def test_method_of_steps_values(self):
        sys = linear_dde()
        phi = InitialFunction.constant(np.ones(1), 1.0)
        traj = simulate(sys, phi, SimConfig(step=1e-3, t_end=2.0))
        for t, expect in ((0.5, 0.5), (1.0, 0.0), (2.0, -0.5)):
            assert sample(traj, t)[0] == pytest.approx(expect, abs=1e-9)

    def test_exponential_history_convergence_order(self):
        """phi(theta) = e^theta makes the solution non-polynomial, so the
        step-halving error ratio exposes the true integrator order."""
        sys = linear_dde()
        phi = InitialFunction.from_callable(
            lambda th: np.array([math.exp(th)]), 1.0)
        # piecewise closed form: x(2) = -1/e
        exact = -math.exp(-1.0)
        errors = []
        for step in (0.1, 0.05, 0.025):
            traj = simulate(sys, phi, SimConfig(step=step, t_end=2.0))
            errors.append(abs(traj.nodes[-1, 0] - exact))
        orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
        assert min(orders) >= 3.0, (errors, orders)

    def test_exponential_history_segment_values(self):
        # x(t) = 1 + 1/e - e^(t-1) on [0, 1]
        sys = linear_dde()
        phi = InitialFunction.from_callable(
            lambda th: np.array([math.exp(th)]), 1.0)
        traj = simulate(sys, phi, SimConfig(step=0.01, t_end=1.0))
        for t in (0.25, 0.5, 0.99):
            expect = 1 + math.exp(-1.0) - math.exp(t - 1.0)
            assert sample(traj, t)[0] == pytest.approx(expect, abs=1e-10)


class TestEulerOracle:
    def test_rk4_matches_small_step_euler(self, example3):
        """Independent explicit-Euler integration at step/1000 agrees with the
        RK4 trajectory within 1e-6 relative over [0, 20]."""
        spec, _ = example3
        phi_vec = np.array([6e-4, 6e-4])
        phi = InitialFunction.constant(phi_vec, spec.h)
        step = 0.05
        traj = simulate(spec, phi, SimConfig(step=step, t_end=20.0))

        e_step = step / 1000.0
        n_steps = int(round(20.0 / e_step))
        m = int(round(spec.h / e_step))
        hist = np.empty((n_steps + 1, 2))
        hist[0] = phi_vec
        x = phi_vec.copy()
        f_eval, q_eval, b_eval = spec.f_eval, spec.q_eval, spec.b_eval
        for i in range(n_steps):
            xd = hist[i - m] if i >= m else phi_vec
            x = x + e_step * (f_eval(x, xd) + b_eval(i * e_step) @ q_eval(x, xd))
            hist[i + 1] = x

        rk = traj.nodes
        eu = hist[::1000]
        scale = np.max(np.linalg.norm(eu, axis=1))
        err = np.max(np.linalg.norm(rk - eu, axis=1))
        assert err <= 1e-6 * scale, err / scale


@pytest.fixture(scope="module")
def traj(example3):
    spec, _ = example3
    phi = InitialFunction.constant(np.array([6e-4, 6e-4]), spec.h)
    return simulate(spec, phi, SimConfig(step=1e-2, t_end=3.0))


class TestSample:
    def test_exact_at_nodes(self, traj):
        for i in (0, 7, 150, 300):
            t = traj.t0 + i * traj.step
            assert np.array_equal(sample(traj, t), traj.nodes[i])

    def test_history_reads_phi(self, traj):
        assert np.array_equal(sample(traj, -0.3), traj.phi(-0.3))
        assert np.array_equal(sample(traj, -traj.h), traj.phi(-traj.h))

    def test_out_of_range_rejected(self, traj):
        with pytest.raises(ValueError):
            sample(traj, traj.t_end + 1.0)
        with pytest.raises(ValueError):
            sample(traj, -traj.h - 1.0)

    def test_interpolant_matches_fine_grid(self, example3):
        """Hermite dense output agrees with a 10x finer integration."""
        spec, _ = example3
        phi = InitialFunction.constant(np.array([6e-4, 6e-4]), spec.h)
        coarse = simulate(spec, phi, SimConfig(step=1e-2, t_end=2.0))
        fine = simulate(spec, phi, SimConfig(step=1e-3, t_end=2.0))
        ts = np.linspace(0.005, 1.995, 97)
        scale = np.linalg.norm(phi(0.0))
        for t in ts:
            err = np.linalg.norm(sample(coarse, float(t))
                                 - sample(fine, float(t)))
            assert err <= 1e-9 * scale

    def test_nodes_are_read_only(self, traj):
        with pytest.raises(ValueError):
            traj.nodes[0, 0] = 1.0


class TestSegmentNorms:
    def test_rolling_matches_pointwise(self, traj):
        rolled = node_segment_sup_norms(traj)
        assert len(rolled) == len(traj.nodes)
        for i in range(0, len(traj.nodes), 17):
            t = traj.t0 + i * traj.step
            assert rolled[i] == pytest.approx(segment_sup_norm(traj, t),
                                              rel=1e-12)

    def test_constant_history_segment_norm(self):
        sys = zero_rhs()
        phi = InitialFunction.constant(np.array([3.0, 4.0]), sys.h)
        traj = simulate(sys, phi, SimConfig(step=0.1, t_end=2.0))
        assert segment_sup_norm(traj, 1.0) == pytest.approx(5.0)
        assert np.allclose(node_segment_sup_norms(traj), 5.0)

    def test_in_s_alpha(self, traj):
        assert in_S_alpha(traj, 2.0, alpha=1.1)
        with pytest.raises(ValueError):
            in_S_alpha(traj, 2.0, alpha=1.0)


class TestInitialFunction:
    def test_constant_sup_norm(self):
        phi = InitialFunction.constant([3.0, 4.0], 2.0)
        assert phi.sup_norm == 5.0
        assert np.array_equal(phi(-1.0), [3.0, 4.0])

    def test_from_callable_sup_norm(self):
        phi = InitialFunction.from_callable(
            lambda th: np.array([math.sin(th)]), math.pi)
        assert phi.sup_norm == pytest.approx(1.0, abs=1e-3)
