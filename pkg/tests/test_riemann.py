"""Exact Riemann solutions: shock speeds, fans, admissibility gating.

The quadratic-family shock between the states 1/8 and 3/8 has the closed
form speed 1/2 + 19*eps/64, used here as a frozen reference.
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from probeflow import (
    DomainError,
    EpsilonLaw,
    Greenshields,
    sample_solution,
    solve_riemann,
)

eps_values = st.floats(min_value=-1.0 / 3.0, max_value=1.0 / 3.0, allow_nan=False)
densities = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def shock_speed_reference(eps):
    """Chord slope of rho*(1+eps*rho)*(1-rho) between 1/8 and 3/8."""
    return 0.5 + 19.0 * eps / 64.0


class TestShock:
    def test_classification(self):
        sol = solve_riemann(Greenshields(1.0), 0.125, 0.375)
        assert sol.kind == "shock"
        assert sol.fan is None

    @pytest.mark.parametrize("eps", [0.0, 1.0 / 48.0, 0.1, 0.2, 1.0 / 3.0, -0.25])
    def test_speed_closed_form(self, eps):
        sol = solve_riemann(EpsilonLaw(eps), 0.125, 0.375)
        assert sol.speed == pytest.approx(shock_speed_reference(eps), abs=1e-15)

    def test_linear_law_speed_is_exactly_half(self):
        assert solve_riemann(EpsilonLaw(0.0), 0.125, 0.375).speed == 0.5

    def test_sampling_is_right_continuous(self):
        sol = solve_riemann(Greenshields(1.0), 0.125, 0.375)
        assert sol.sample(sol.speed) == 0.375
        assert sol.sample(sol.speed - 1e-12) == 0.125

    @given(eps_values, densities, densities)
    def test_rankine_hugoniot_residual(self, eps, a, b):
        rho_l, rho_r = min(a, b), max(a, b)
        if rho_r - rho_l < 1e-6:
            return
        law = EpsilonLaw(eps)
        sol = solve_riemann(law, rho_l, rho_r)
        residual = (
            law.flux(rho_r) - law.flux(rho_l) - sol.speed * (rho_r - rho_l)
        )
        assert abs(residual) <= 1e-14

    @given(eps_values, densities, densities)
    def test_lax_admissibility(self, eps, a, b):
        rho_l, rho_r = min(a, b), max(a, b)
        if rho_r - rho_l < 1e-6:
            return
        law = EpsilonLaw(eps)
        sol = solve_riemann(law, rho_l, rho_r)
        # strictly concave flux: characteristics run into the shock
        assert law.flux_slope(rho_l) > sol.speed > law.flux_slope(rho_r)


class TestRarefaction:
    def test_classification_and_edges(self):
        sol = solve_riemann(Greenshields(1.0), 1.0, 0.0)
        assert sol.kind == "rarefaction"
        assert sol.speed is None
        assert sol.fan == (-1.0, 1.0)

    def test_self_similar_interior(self):
        # under v = 1 - rho the fan solves 1 - 2*rho = xi
        sol = solve_riemann(Greenshields(1.0), 1.0, 0.0)
        for xi, expected in [(0.0, 0.5), (0.5, 0.25), (-0.5, 0.75)]:
            assert sol.sample(xi) == pytest.approx(expected, abs=1e-11)

    def test_constant_states_outside_fan(self):
        sol = solve_riemann(Greenshields(1.0), 0.75, 0.25)
        lo, hi = sol.fan
        assert sol.sample(lo - 0.1) == 0.75
        assert sol.sample(hi + 0.1) == 0.25
        assert sol.sample(lo) == 0.75
        assert sol.sample(hi) == 0.25

    @given(eps_values, densities, densities)
    def test_fan_edges_are_characteristic_speeds(self, eps, a, b):
        rho_l, rho_r = max(a, b), min(a, b)
        if rho_l - rho_r < 1e-6:
            return
        law = EpsilonLaw(eps)
        sol = solve_riemann(law, rho_l, rho_r)
        assert sol.kind == "rarefaction"
        lo, hi = sol.fan
        assert lo == pytest.approx(float(law.flux_slope(rho_l)))
        assert hi == pytest.approx(float(law.flux_slope(rho_r)))
        assert lo < hi


class TestConstant:
    def test_equal_states(self):
        sol = solve_riemann(Greenshields(1.0), 0.3, 0.3)
        assert sol.kind == "constant"
        np.testing.assert_array_equal(sol.sample(np.linspace(-2, 2, 9)), 0.3)


class TestSampling:
    @given(eps_values, densities, densities)
    def test_profile_monotone_between_states(self, eps, a, b):
        sol = solve_riemann(EpsilonLaw(eps), a, b)
        xi = np.linspace(-3.0, 3.0, 41)
        out = sol.sample(xi)
        diffs = np.diff(out)
        if a <= b:
            assert np.all(diffs >= -1e-12)
        else:
            assert np.all(diffs <= 1e-12)
        assert out[0] == pytest.approx(a, abs=1e-11)
        assert out[-1] == pytest.approx(b, abs=1e-11)

    def test_profile_in_physical_coordinates(self):
        sol = solve_riemann(Greenshields(1.0), 0.125, 0.375)
        x = np.array([-1.0, 0.2, 1.0])
        np.testing.assert_array_equal(sol.profile(2.0, x), sol.sample(x / 2.0))
        # at t = 0 the profile is the raw jump at the origin
        np.testing.assert_array_equal(sol.profile(0.0, x), [0.125, 0.375, 0.375])

    def test_module_level_sampler_delegates(self):
        sol = solve_riemann(Greenshields(1.0), 0.125, 0.375)
        xi = np.linspace(-1.0, 1.0, 11)
        np.testing.assert_array_equal(sample_solution(sol, xi), sol.sample(xi))
        assert sample_solution(sol, 0.0) == sol.sample(0.0)


class TestValidation:
    def test_inadmissible_law_rejected(self):
        with pytest.raises(DomainError):
            solve_riemann(EpsilonLaw(0.5), 0.125, 0.375)

    @pytest.mark.parametrize("rho_l,rho_r", [(-0.1, 0.5), (0.5, 1.2)])
    def test_out_of_range_states_rejected(self, rho_l, rho_r):
        with pytest.raises(DomainError):
            solve_riemann(Greenshields(1.0), rho_l, rho_r)
