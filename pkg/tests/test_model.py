import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lkcert import (CaseA, CaseB, LyapunovSpec, SystemSpec,
                    build_example_system, check_bound_constants,
                    example_omega, kappa_and_w)
from lkcert.model import EXAMPLE_B_HAT


class TestKappaAndW:
    def test_published_configuration(self):
        kappa, w = kappa_and_w(1e-4, 5)
        assert kappa == pytest.approx(9.99000099990001e-05, rel=1e-14)
        assert w == pytest.approx(6.243750624937506e-06, rel=1e-14)

    def test_mu3_configuration(self):
        kappa, w = kappa_and_w(0.05, 3)
        # min{1 - 0.05*4, 0.05, 0.05/1.05 * (1 - 0.05*4)} = 0.8/21
        assert kappa == pytest.approx(0.8 / 21, rel=1e-14)
        assert w == pytest.approx(0.2 / 21, rel=1e-14)

    def test_zeta_out_of_range(self):
        for zeta in (0.0, -1e-3, 0.2, 1.0):
            with pytest.raises(ValueError):
                kappa_and_w(zeta, 5)

    def test_mu_out_of_range(self):
        with pytest.raises(ValueError):
            kappa_and_w(1e-4, 1.0)

    @given(st.floats(min_value=1e-6, max_value=0.04),
           st.sampled_from([3.0, 5.0, 7.0]))
    @settings(max_examples=50, deadline=None)
    def test_always_positive(self, zeta, mu):
        kappa, w = kappa_and_w(zeta, mu)
        assert 0 < w <= kappa


class TestExampleOmega:
    def test_frozen_value(self):
        assert example_omega(1e-14) == pytest.approx(2.4142135623731204e-14,
                                                     rel=1e-14)

    def test_small_eps_limit(self):
        # omega(eps)/eps -> 1 + sqrt(2) as eps -> 0
        assert example_omega(1e-12) / 1e-12 == pytest.approx(1 + math.sqrt(2),
                                                             rel=1e-10)

    def test_nonincreasing_toward_zero(self):
        grid = np.logspace(-1, -12, 23)
        vals = [example_omega(float(e)) for e in grid]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-11

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            example_omega(0.0)


class TestBuildExampleSystem:
    def test_published_lyapunov_constants(self):
        spec, lyap = build_example_system(5, 5, 10.0, 1e-4)
        assert spec.b_hat == EXAMPLE_B_HAT == 2.0
        assert lyap.gamma == 6.0
        assert lyap.alpha0 == pytest.approx(0.04164166666666667, rel=1e-14)
        assert lyap.alpha1 == pytest.approx(0.16676666666666665, rel=1e-14)
        assert lyap.beta == pytest.approx(1.4146378547175953, rel=1e-14)
        assert lyap.psi == pytest.approx(10.005, rel=1e-14)
        assert lyap.w == pytest.approx(6.243750624937506e-06, rel=1e-14)

    def test_bound_constants_table(self):
        spec, _ = build_example_system(5, 5, 10.0, 1e-4)
        assert (spec.m1, spec.m2) == (math.sqrt(2), math.sqrt(2))
        assert (spec.eta11, spec.eta12) == (5.0, 0.0)
        assert (spec.p1, spec.p2) == (1.0, 1.0)
        assert (spec.q11, spec.q12) == (5.0, 0.0)
        assert (spec.q21, spec.q22) == (0.0, 5.0)

    def test_rhs_values(self):
        spec, lyap = build_example_system(3, 3, 0.5, 0.05)
        x, xd = np.array([2.0, -1.0]), np.array([0.5, 3.0])
        assert np.allclose(spec.f_eval(x, xd), [-1.0, -8.0 - 27.0])
        assert np.allclose(spec.q_eval(x, xd), [0.125, -1.0])
        b = spec.b_eval(0.7)
        assert b[0, 1] == b[1, 0] == 0.0
        assert b[0, 0] == pytest.approx(
            math.cos(0.7) + math.sin(math.sqrt(2) * 0.7))
        assert lyap.v_eval(np.array([1.0, 1.0])) == pytest.approx(
            0.5 + 0.05, rel=1e-14)

    def test_rejects_even_or_noninteger_degrees(self):
        for mu in (4, 2.5):
            with pytest.raises(ValueError):
                build_example_system(mu, 5, 10.0, 1e-4)
        with pytest.raises(ValueError):
            build_example_system(5, 4, 10.0, 1e-4)

    def test_rejects_bad_h(self):
        with pytest.raises(ValueError):
            build_example_system(5, 5, -1.0, 1e-4)


class TestSpecValidation:
    def test_system_spec_rejects_bad_fields(self):
        spec, lyap = build_example_system(5, 5, 10.0, 1e-4)
        from dataclasses import replace
        for bad in (dict(h=0.0), dict(mu=1.0), dict(sigma=0.5),
                    dict(n=0), dict(m1=-1.0), dict(b_hat=-0.1)):
            with pytest.raises(ValueError):
                replace(spec, **bad)
        for bad in (dict(gamma=1.5), dict(w=0.0), dict(alpha0=0.0),
                    dict(alpha0=0.5, alpha1=0.4), dict(beta=0.0),
                    dict(psi=-1.0)):
            with pytest.raises(ValueError):
                replace(lyap, **bad)

    def test_case_a_rejects_negative_l0(self):
        with pytest.raises(ValueError):
            CaseA(l0=-1.0)
        assert CaseA(l0=0.0).l0 == 0.0

    def test_case_b_decay_check(self):
        CaseB(omega_eval=example_omega).check_decay()
        with pytest.raises(ValueError):
            CaseB(omega_eval=lambda e: 1.0 / e).check_decay()
        with pytest.raises(ValueError):
            CaseB(omega_eval=lambda e: 1.0).check_decay()


class TestCheckBoundConstants:
    def test_example5_all_bounds_hold(self, example5):
        spec, lyap = example5
        report = check_bound_constants(spec, lyap, n_samples=500,
                                       check_jacobians=True)
        assert report.ok, report.failed()
        names = {c.name for c in report.checks}
        assert "delay_free_decay" in names and "df_dx1_bound" in names

    def test_example3_all_bounds_hold(self, example3):
        spec, lyap = example3
        report = check_bound_constants(spec, lyap, n_samples=500)
        assert report.ok, report.failed()

    def test_detects_wrong_constant(self, example3):
        spec, lyap = example3
        from dataclasses import replace
        bad = replace(lyap, w=lyap.w * 100)
        report = check_bound_constants(spec, bad, n_samples=500)
        assert not report.ok
        assert "delay_free_decay" in report.failed()

    def test_deterministic(self, example3):
        spec, lyap = example3
        r1 = check_bound_constants(spec, lyap, n_samples=200, seed=7)
        r2 = check_bound_constants(spec, lyap, n_samples=200, seed=7)
        assert [(c.name, c.worst_slack) for c in r1.checks] == \
            [(c.name, c.worst_slack) for c in r2.checks]
