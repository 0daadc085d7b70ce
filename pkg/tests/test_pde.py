import math

import numpy as np
import pytest

from oracles import classical_expectation

from gconvex.errors import (
    DomainTooSmall,
    GrowthBoundViolated,
    InterpolationOutOfRange,
    StabilityViolation,
)
from gconvex.generators import GeneratorSpec, ValidationDomain
from gconvex.pde import (
    PayoffSpec,
    SolverConfig,
    SpaceGrid,
    TimeGrid,
    conditional_g_expectation_path,
    default_space_grid,
    g_expectation,
    solve_pde,
    truncate_payoff,
)

DOM = ValidationDomain(n_t=11, n_y=41, n_z=41)


@pytest.fixture(scope="module")
def gens():
    return {src: GeneratorSpec.from_source(src, domain=DOM)
            for src in ("0", "y", "-y", "abs(z1)", "0.5*y + 2*z1", "0.5*y", "2*z1")}


def _solve(gens, gen_src, payoff_src, T=1.0, **kw):
    return solve_pde(gens[gen_src], PayoffSpec.from_source(payoff_src), T, **kw)


class TestClosedForms:
    def test_zero_generator_martingale(self, gens):
        res = _solve(gens, "0", "x")
        assert res.value_at(0.0, 0.0) == pytest.approx(0.0, abs=1e-6)

    def test_constant_growth(self, gens):
        # frozen oracle: c * exp(a(T-t)), a = 1, c = 1
        res = _solve(gens, "y", "1")
        assert res.value_at(0.0, 0.0) == pytest.approx(2.718281828459045, abs=1e-3)
        assert res.value_at(0.5, 0.0) == pytest.approx(1.6487212707001282, abs=1e-3)

    def test_abs_driver(self, gens):
        # frozen oracle: Y_t = W_t + (T - t), Z = 1
        res = _solve(gens, "abs(z1)", "x")
        assert res.value_at(0.0, 0.0) == pytest.approx(1.0, abs=1e-3)
        assert res.value_at(0.5, 1.0) == pytest.approx(1.5, abs=1e-3)
        # Z component
        i = len(res.time.times) // 2
        j = res.space.n // 2
        assert res.z_surface[i, j] == pytest.approx(1.0, abs=1e-6)

    def test_abs_driver_negative_slope(self, gens):
        res = _solve(gens, "abs(z1)", "-x")
        assert res.value_at(0.0, 0.0) == pytest.approx(1.0, abs=1e-3)

    def test_linear_driver(self, gens):
        # frozen oracle: exp(a(T-t)) (x + b(T-t)), a = 0.5, b = 2
        res = _solve(gens, "0.5*y + 2*z1", "x")
        assert res.value_at(0.0, 0.0) == pytest.approx(3.2974425414002564, abs=5e-3)

    def test_classical_square(self, gens):
        assert g_expectation(gens["0"], PayoffSpec.from_source("x*x"),
                             0.0, 1.0, 0.0) == pytest.approx(1.0, abs=1e-3)

    def test_terminal_time_exact(self, gens):
        # (A2) at t = T holds exactly, not just within tolerance
        for x in (-2.0, 0.0, 1.5):
            assert g_expectation(gens["y"], PayoffSpec.from_source("x*x"),
                                 1.0, 1.0, x) == x * x

    def test_girsanov_square(self, gens):
        # oracle: classical expectation under drift 2
        want = classical_expectation(lambda x: x * x, 1.0, drift=2.0)
        assert want == pytest.approx(5.0, rel=1e-12)
        res = _solve(gens, "2*z1", "x*x")
        assert res.value_at(0.0, 0.0) == pytest.approx(want, abs=5e-3)

    def test_terminal_consistency(self, gens):
        res = _solve(gens, "abs(z1)", "x*x")
        xs = res.space.points
        np.testing.assert_array_equal(res.surface[-1], xs * xs)

    def test_surface_finite(self, gens):
        res = _solve(gens, "0.5*y + 2*z1", "x*x")
        assert np.all(np.isfinite(res.surface))
        assert np.all(np.isfinite(res.z_surface))


class TestErrors:
    def test_stability_violation(self, gens):
        space = SpaceGrid(-7, 7, 401)
        time = TimeGrid(0.0, 1.0, 100)  # dt = 0.01 >> 0.9 dx^2
        with pytest.raises(StabilityViolation):
            solve_pde(gens["0"], PayoffSpec.from_source("x"), 1.0,
                      space=space, time=time)

    def test_domain_too_small(self, gens):
        with pytest.raises(DomainTooSmall):
            solve_pde(gens["0"], PayoffSpec.from_source("x*x"), 1.0,
                      config=SolverConfig(half_width=1.5, n_x=151))

    def test_growth_bound_violation(self, gens):
        # bound declared for a bounded payoff, then evaluated on a wide grid
        payoff = PayoffSpec.from_source("x*x*x*x", growth_bound=(0.5, 1))
        with pytest.raises(GrowthBoundViolated):
            solve_pde(gens["0"], payoff, 1.0)

    def test_interpolation_out_of_range(self, gens):
        res = _solve(gens, "0", "x")
        with pytest.raises(InterpolationOutOfRange):
            res.value_at(0.0, 1000.0)
        with pytest.raises(InterpolationOutOfRange):
            res.value_at(2.0, 0.0)

    def test_dimension_guard(self):
        gen2 = GeneratorSpec.from_source("norm(z)", dim_z=2,
                                         domain=ValidationDomain(n_t=5, n_y=11, n_z=11))
        with pytest.raises(ValueError):
            solve_pde(gen2, PayoffSpec.from_source("x"), 1.0)


class TestProperties:
    def test_monotonicity_a1(self, gens):
        hi = _solve(gens, "abs(z1)", "x + 1")
        lo = _solve(gens, "abs(z1)", "x")
        assert np.min(hi.surface - lo.surface) >= -1e-9

    def test_convergence_order(self, gens):
        # halving dx (dt tied to dx^2) shrinks closed-form error by >= 3x
        for src, payoff, want in [("y", "1", math.e),
                                  ("0.5*y + 2*z1", "x", 3.2974425414002564)]:
            errs = []
            for n_x in (201, 401):
                res = _solve(gens, src, payoff, config=SolverConfig(n_x=n_x))
                errs.append(abs(res.value_at(0.0, 0.0) - want))
            assert errs[0] / errs[1] >= 3.0

    def test_tower_property_chain(self, gens):
        # tower for the classical expectation
        chain = conditional_g_expectation_path(
            gens["0"], PayoffSpec.from_source("x"), 1.0, [0.5])
        assert chain.value_at(0.0, 0.0) == pytest.approx(0.0, abs=1e-6)
        # frozen closed form through the chain: E^g_{0,0.5}[W_0.5 + 0.5] = 1
        chain = conditional_g_expectation_path(
            gens["abs(z1)"], PayoffSpec.from_source("x"), 1.0, [0.5])
        assert chain.value_at(0.0, 0.0) == pytest.approx(1.0, abs=2e-3)
        assert chain.value_at(0.5, 0.0) == pytest.approx(0.5, abs=2e-3)
        # exponential growth composed twice: e^{0.5} * e^{0.5} = e
        chain = conditional_g_expectation_path(
            gens["y"], PayoffSpec.from_source("1"), 1.0, [0.5])
        assert chain.value_at(0.0, 0.0) == pytest.approx(math.e, abs=2e-3)

    def test_chain_matches_direct(self, gens):
        direct = _solve(gens, "0.5*y + 2*z1", "x*x")
        chain = conditional_g_expectation_path(
            gens["0.5*y + 2*z1"], PayoffSpec.from_source("x*x"), 1.0, [0.3, 0.7])
        assert chain.value_at(0.0, 0.0) == pytest.approx(
            direct.value_at(0.0, 0.0), abs=1e-2)


class TestTruncation:
    def test_clamp_values(self):
        payoff = PayoffSpec.from_source("x*x")
        trunc = truncate_payoff(payoff, level=5, anchor=0.0)
        assert trunc(10.0) == 25.0
        assert trunc(3.0) == 9.0
        assert trunc(-8.0) == 25.0

    def test_truncation_error_decreases(self, gens):
        # dominated convergence, resolvable range of levels; oracle = quadrature
        payoff = PayoffSpec.from_source("x*x")
        full = _solve(gens, "0", "x*x").value_at(0.0, 0.0)
        diffs = []
        for level in (2, 3, 4, 5):
            trunc = truncate_payoff(payoff, level=level)
            got = solve_pde(gens["0"], trunc, 1.0).value_at(0.0, 0.0)
            want = classical_expectation(lambda x, lv=level: min(max(x, -lv), lv) ** 2, 1.0)
            # kinked terminal data costs some spatial accuracy
            assert got == pytest.approx(want, abs=2.5e-3)
            diffs.append(abs(full - got))
        assert all(a >= b - 1e-12 for a, b in zip(diffs, diffs[1:]))
        assert diffs[0] > diffs[-1]

    def test_level_must_be_positive(self):
        with pytest.raises(ValueError):
            truncate_payoff(PayoffSpec.from_source("x"), level=0)


class TestGrids:
    def test_default_space_grid_covers_tails(self, gens):
        grid = default_space_grid(gens["y"], 1.0)
        assert grid.x_min <= -7.0 + 1e-9 and grid.x_max >= 7.0 - 1e-9
        assert grid.n % 2 == 1

    def test_csv_dump(self, gens, tmp_path):
        res = solve_pde(gens["0"], PayoffSpec.from_source("x"), 0.01,
                        config=SolverConfig(n_x=21, boundary_probe=False))
        out = tmp_path / "surface.csv"
        res.to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "t,x,u,z"
        assert len(lines) == 1 + (res.time.n_steps + 1) * res.space.n
