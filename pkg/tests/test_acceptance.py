"""Acceptance battery: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -s`` to see one pass/fail line per
criterion. The tests are ordered; the final one asserts the whole battery's
single-threaded runtime budget.
"""

import math
import time
from contextlib import contextmanager

import numpy as np

from oracles import lower_convex_hull

from gconvex.catalog import (
    AXIOM_GENERATORS,
    CATALOG,
    CONVEX_BATTERY_SMOOTH,
    CONVEX_BATTERY_TABULATED,
    PREDICTOR_FALSE,
    PREDICTOR_TRUE,
    build_scenario,
    entry_by_name,
    generator,
)
from gconvex.characterization import jensen_all_convex_predictor
from gconvex.convexity import (
    ScanGrid,
    check_nonsmooth,
    check_shape,
    g_convex_envelope,
    pi_a_membership,
)
from gconvex.functions import SymbolicFunction, TabulatedFunction, compose
from gconvex.jensen import (
    Scenario,
    axiom_suite,
    martingale_transform_suite,
    stability_suite,
    verify_jensen,
    viability_check,
)
from gconvex.mc import solve_mc
from gconvex.pde import (
    PayoffSpec,
    SolverConfig,
    conditional_g_expectation_path,
    solve_pde,
)

E = math.e
SQRT_E = 1.6487212707001282

_BATTERY_T0 = time.perf_counter()


@contextmanager
def criterion(num, desc):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {num:2d}: {desc}")
        raise
    print(f"[PASS] criterion {num:2d}: {desc}")


def test_criterion_01_constant_payoff_exponential_growth():
    with criterion(1, "g=ay closed form c*e^{a(T-t)} on the 401 grid, < 5 s"):
        t0 = time.perf_counter()
        res = solve_pde(generator("y"), PayoffSpec.from_source("1"), 1.0,
                        config=SolverConfig(n_x=401))
        assert abs(res.value_at(0.0, 0.0) - E) <= 1e-3
        assert abs(res.value_at(0.5, 0.0) - SQRT_E) <= 1e-3
        assert time.perf_counter() - t0 < 5.0


def test_criterion_02_jensen_counterexample():
    with criterion(2, "gap e - e^2 within 5e-3 and exact witness margin -1"):
        sc = Scenario(name="counterexample", gen=generator("y"),
                      payoff=PayoffSpec.from_source("1"),
                      h=SymbolicFunction.from_source("y*y"), T=1.0,
                      eval_times=(0.0,), config=SolverConfig(dt_safety=0.2))
        rep = verify_jensen(sc)
        assert rep.verdict == "fails"
        assert abs(rep.gap_at_start - (E - E * E)) <= 5e-3

        verdict = check_shape(generator("y"), "y*y", "convex",
                              scan=ScanGrid(y_min=0.0, y_max=1.0, n_y=101))
        assert verdict.decision == "neither"
        assert verdict.certificate
        assert verdict.min_margin == -1.0
        assert verdict.witness["y"] == 1.0
        assert verdict.witness["z"] == [0.0]


def test_criterion_03_abs_driver_closed_forms():
    with criterion(3, "g=|z|: E[W_1] = E[-W_1] = 1; -y g-convex, not g-concave"):
        gen = generator("abs(z1)")
        up = solve_pde(gen, PayoffSpec.from_source("x"), 1.0)
        down = solve_pde(gen, PayoffSpec.from_source("-x"), 1.0)
        v_up, v_down = up.value_at(0.0, 0.0), down.value_at(0.0, 0.0)
        assert abs(v_up - 1.0) <= 1e-3
        assert abs(v_down - 1.0) <= 1e-3
        for payoff in ("x", "-x"):
            mc = solve_mc(gen, PayoffSpec.from_source(payoff), 1.0)
            assert abs(mc.y0 - 1.0) <= max(3 * mc.stderr, 2e-2)
        # h(y) = -y: h(E[W]) = -1 <= E[-W] = 1, strictly
        assert -v_up < v_down - 1.0  # gap is 2, far beyond tolerance
        assert check_shape(gen, "-y", "convex").decision == "g_convex"
        assert check_shape(gen, "-y", "concave").decision == "neither"


def test_criterion_04_example_battery_abs_driver():
    with criterion(4, "g=|z| battery: y^2, |y|, -y^2 concave, -|z| with |y|"):
        gen = generator("abs(z1)")
        v_sq = check_shape(gen, "y*y", "convex")
        assert v_sq.decision == "g_convex"
        assert v_sq.min_margin == 0.0

        grid = np.linspace(-5, 5, 201)
        habs = TabulatedFunction(grid=grid, values=np.abs(grid))
        assert check_nonsmooth(gen, habs).decision == "g_convex"

        v_conc = check_shape(gen, "-(y*y)", "concave")
        assert v_conc.decision == "neither"
        assert v_conc.certificate
        assert v_conc.witness["y"] > 0

        v_neg = check_nonsmooth(generator("-abs(z1)"), habs)
        assert v_neg.decision == "neither"
        assert v_neg.certificate
        assert v_neg.witness["y"] < 0


def test_criterion_05_characterization_coherence():
    with criterion(5, "all-convex predictor vs the 6-function battery"):
        for src in PREDICTOR_TRUE:
            assert jensen_all_convex_predictor(generator(src)) is True
        for src in PREDICTOR_FALSE:
            assert jensen_all_convex_predictor(generator(src)) is False

        grid = np.linspace(-5, 5, 201)
        tabs = [TabulatedFunction(
            grid=grid,
            values=SymbolicFunction.from_source(src)(grid))
            for src in CONVEX_BATTERY_TABULATED]
        assert len(CONVEX_BATTERY_SMOOTH) + len(tabs) == 6
        for src in PREDICTOR_TRUE:
            gen = generator(src)
            for h in CONVEX_BATTERY_SMOOTH:
                assert check_shape(gen, h, "convex").decision == "g_convex"
            for h in tabs:
                assert check_nonsmooth(gen, h).decision == "g_convex"
        # each failing generator certifies a violation on a convex candidate
        v = check_shape(generator("y"), "y*y", "convex")
        assert v.decision == "neither" and v.certificate
        v = check_nonsmooth(generator("-abs(z1)"),
                            TabulatedFunction(grid=grid, values=np.abs(grid)))
        assert v.decision == "neither" and v.certificate


def test_criterion_06_affine_set_and_solver_affinity():
    with criterion(6, "Pi_g^a membership and numeric g-affinity of 2y+3"):
        gen = generator("abs(z1)")
        assert pi_a_membership(gen, (2.0, 3.0)).member
        assert pi_a_membership(gen, (1.0, 0.0)).member
        assert not pi_a_membership(gen, (-1.0, 0.0)).member

        base = solve_pde(gen, PayoffSpec.from_source("x"), 1.0)
        lifted = solve_pde(gen, PayoffSpec.from_source("2*x + 3"), 1.0)
        got = lifted.value_at(0.0, 0.0)
        want = 2.0 * base.value_at(0.0, 0.0) + 3.0
        assert abs(got - want) <= 2e-3


def test_criterion_07_envelope_vs_hull_oracle():
    with criterion(7, "envelope matches the hull oracle; f = 0 under g=ay"):
        y = np.linspace(-5, 5, 401)
        dy = y[1] - y[0]
        res = g_convex_envelope(generator("abs(z1)"),
                                "min(abs(y - 1), abs(y + 1))", y_grid=y)
        hull = lower_convex_hull(y, res.phi_values)
        assert float(np.max(np.abs(res.function.values - hull))) <= 2 * dy
        assert res.verdict.decision == "g_convex"

        res0 = g_convex_envelope(generator("y"), "y*y", y_grid=y)
        assert float(np.max(np.abs(res0.function.values))) <= 1e-9


def test_criterion_08_axiom_suite():
    with criterion(8, "(A1)-(A3), (A4') for {0, y, |z|, 0.5y+2z}; tower = e"):
        for src in AXIOM_GENERATORS:
            rep = axiom_suite(generator(src))
            assert rep.passed, (src, rep.results)
        chain = conditional_g_expectation_path(
            generator("y"), PayoffSpec.from_source("1"), 1.0, [0.5])
        assert abs(chain.value_at(0.0, 0.0) - E) <= 2e-3


def test_criterion_09_viability_equivalence():
    with criterion(9, "viability verdict equals Jensen verdict on the catalog"):
        for entry in CATALOG:
            sc = build_scenario(entry)
            jens = verify_jensen(sc)
            viab = viability_check(
                sc.gen, sc.h, sc.payoff,
                PayoffSpec(phi=compose(sc.h, sc.payoff.phi)),
                T=sc.T, config=sc.config, name=entry.name)
            assert viab.viable == jens.holds, entry.name
            assert jens.verdict == entry.jensen, entry.name


def test_criterion_10_martingale_transforms():
    with criterion(10, "g=|z|: y^2 transform submartingale, identity martingale"):
        gen = generator("abs(z1)")
        rep = martingale_transform_suite(gen, "y*y", ["x", "x + 1", "2*x"])
        assert rep.implied == "g_submartingale"
        assert set(rep.per_payoff.values()) == {"g_submartingale"}
        assert rep.consistent
        rep_id = martingale_transform_suite(gen, "y", ["x"])
        assert rep_id.implied == "g_martingale"
        assert set(rep_id.per_payoff.values()) == {"g_martingale"}


def test_criterion_11_cross_solver_and_convergence():
    with criterion(11, "MC/PDE agreement on 10 scenarios; spatial order >= 3x"):
        for entry in CATALOG:
            gen = generator(entry.gen)
            payoff = PayoffSpec.from_source(entry.payoff)
            pde_y0 = solve_pde(gen, payoff, entry.T).value_at(0.0, 0.0)
            mc = solve_mc(gen, payoff, entry.T)
            assert abs(pde_y0 - mc.y0) <= max(3 * mc.stderr, 2e-2), entry.name
            if entry.closed_form is not None:
                assert abs(pde_y0 - entry.closed_form) <= 5e-3, entry.name

        for name in ("interest-const", "drifted"):
            entry = entry_by_name(name)
            gen = generator(entry.gen)
            payoff = PayoffSpec.from_source(entry.payoff)
            errs = []
            for n_x in (201, 401):
                res = solve_pde(gen, payoff, entry.T,
                                config=SolverConfig(n_x=n_x))
                errs.append(abs(res.value_at(0.0, 0.0) - entry.closed_form))
            assert errs[0] / errs[1] >= 3.0, (name, errs)


def test_criterion_12_stability_suite():
    with criterion(12, "smoothed |y| sequence: all g-convex, sup-error <= 1/sqrt(k)"):
        gen = generator("abs(z1)")
        grid = np.linspace(-5, 5, 201)
        ks = (1, 4, 16, 64)
        seq = [TabulatedFunction(grid=grid, values=np.sqrt(grid**2 + 1.0 / k))
               for k in ks]
        limit = TabulatedFunction(grid=grid, values=np.abs(grid))
        rep = stability_suite(gen, seq, limit)
        assert rep.all_g_convex
        assert rep.monotone
        for dist, k in zip(rep.sup_distances, ks):
            assert dist <= k ** -0.5 + 1e-12


def test_criterion_10b_battery_runtime():
    with criterion(10, "full battery single-threaded runtime < 3 min"):
        assert time.perf_counter() - _BATTERY_T0 < 180.0
