"""End-to-end numerical verification: generalized Jensen inequality,
martingale-transform classification, epigraph viability, and the
g-expectation axioms, all driven by the PDE solver.

Gap comparisons are evaluated on an interior window of the spatial grid
(|x - center| <= 2 sqrt(T) by default) so that the asymptotically affine
boundary treatment cannot leak into the verdicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .convexity import check_shape
from .errors import (
    AxiomViolated,
    ContradictionDetected,
    InconclusiveClassification,
    InputNotInEpigraph,
)
from .functions import as_scalar_function, compose
from .pde import (
    PayoffSpec,
    SolverConfig,
    SpaceGrid,
    conditional_g_expectation_path,
    default_space_grid,
    solve_pde,
    solve_terminal_values,
)

#: multiples of sqrt(T) kept inside the evaluation window
WINDOW_SIGMAS = 2.0


def solver_tolerance(dx, floor=5e-3):
    """Gap tolerance dominated by the spatial discretization error."""
    return max(floor, 10.0 * dx * dx)


@dataclass(frozen=True)
class Scenario:
    """One complete experiment: driver, terminal payoff, candidate h."""

    name: str
    gen: object  # GeneratorSpec
    payoff: PayoffSpec
    h: object  # ScalarFunction
    T: float = 1.0
    eval_times: tuple = (0.0, 0.5)
    config: SolverConfig = field(default_factory=SolverConfig)
    tol: float | None = None

    def __post_init__(self):
        if any(t < 0 or t > self.T for t in self.eval_times):
            raise ValueError("eval_times must lie in [0, T]")
        object.__setattr__(self, "h", as_scalar_function(self.h))

    def tolerance(self, space):
        return self.tol if self.tol is not None else solver_tolerance(space.dx)


def _window_mask(space, center, T, sigmas=WINDOW_SIGMAS):
    xs = space.points
    mask = np.abs(xs - center) <= sigmas * math.sqrt(T) + 1e-12
    return xs, mask


@dataclass(frozen=True)
class JensenReport:
    scenario: str
    verdict: str  # "holds" | "fails"
    tol: float
    min_gap: float
    min_gap_location: dict
    gap_at_start: float
    eval_times: tuple
    window: tuple
    xs: np.ndarray = field(repr=False)
    lhs: np.ndarray = field(repr=False)  # h(u_X), (len(eval_times), width)
    rhs: np.ndarray = field(repr=False)  # u_{h(X)}
    gaps: np.ndarray = field(repr=False)  # rhs - lhs

    @property
    def holds(self):
        return self.verdict == "holds"

    def to_json_dict(self):
        return {
            "scenario": self.scenario, "verdict": self.verdict,
            "tol": self.tol, "min_gap": self.min_gap,
            "min_gap_location": self.min_gap_location,
            "gap_at_start": self.gap_at_start,
            "eval_times": list(self.eval_times),
            "window": list(self.window),
        }

    def gap_csv(self, path):
        """Plot-ready dump: one "t,x,lhs,rhs,gap" row per window point."""
        with open(path, "w") as fh:
            fh.write("t,x,lhs,rhs,gap\n")
            for i, t in enumerate(self.eval_times):
                for j, x in enumerate(self.xs):
                    fh.write(f"{t:.17g},{x:.17g},{self.lhs[i, j]:.17g},"
                             f"{self.rhs[i, j]:.17g},{self.gaps[i, j]:.17g}\n")


def verify_jensen(sc):
    """Solve for phi and h(phi) terminals and compare h(u_X) with u_{h(X)}.

    gap(t, x) = u_{h(X)}(t, x) - h(u_X(t, x)); the inequality holds when the
    gap stays above -tol on the evaluation window.
    """
    space = default_space_grid(sc.gen, sc.T, sc.config)
    res_x = solve_pde(sc.gen, sc.payoff, sc.T, space=space, config=sc.config)
    payoff_h = PayoffSpec(phi=compose(sc.h, sc.payoff.phi))
    res_hx = solve_pde(sc.gen, payoff_h, sc.T, space=space, config=sc.config)

    xs, mask = _window_mask(space, sc.config.center, sc.T)
    tol = sc.tolerance(space)
    width = int(mask.sum())
    lhs = np.empty((len(sc.eval_times), width))
    rhs = np.empty_like(lhs)
    for i, t in enumerate(sc.eval_times):
        u_x = res_x.row_at(t)[mask]
        rhs[i] = res_hx.row_at(t)[mask]
        lhs[i] = np.asarray(sc.h(u_x), dtype=float)
    gaps = rhs - lhs

    idx = np.unravel_index(int(np.argmin(gaps)), gaps.shape)
    min_gap = float(gaps[idx])
    location = {"t": float(sc.eval_times[idx[0]]), "x": float(xs[mask][idx[1]])}
    start = res_hx.value_at(0.0, sc.config.center) - float(
        sc.h(res_x.value_at(0.0, sc.config.center)))
    return JensenReport(
        scenario=sc.name, verdict="holds" if min_gap >= -tol else "fails",
        tol=tol, min_gap=min_gap, min_gap_location=location,
        gap_at_start=float(start), eval_times=tuple(sc.eval_times),
        window=(float(xs[mask][0]), float(xs[mask][-1])),
        xs=xs[mask], lhs=lhs, rhs=rhs, gaps=gaps)


def witness_scenario(gen, h, witness, T=0.1, name="witness", config=None):
    """Localized counterexample scenario from a pointwise violation witness:
    linear payoff with the witness slope/level and a short horizon so the
    solution stays near the witness."""
    from .functions import SymbolicFunction

    y_star = float(witness["y"])
    z_star = float(witness["z"][0]) if witness["z"] else 0.0
    ast = dsl.Add(dsl.Num(y_star), dsl.Mul(dsl.Num(z_star), dsl.Var("x")))
    payoff = PayoffSpec(phi=SymbolicFunction(ast=ast, var="x"))
    config = config or SolverConfig()
    return Scenario(name=name, gen=gen, payoff=payoff, h=h, T=T,
                    eval_times=(0.0,), config=config)


# ---------------------------------------------------------------------------
# Process classification and martingale transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProcessSurface:
    """Snapshots of a process value surface at increasing times."""

    times: tuple
    space: SpaceGrid
    values: np.ndarray = field(repr=False)  # (len(times), n_x)

    @classmethod
    def from_solve(cls, result, times):
        rows = np.vstack([result.row_at(t) for t in times])
        return cls(times=tuple(float(t) for t in times), space=result.space,
                   values=rows)

    def map(self, func):
        func = as_scalar_function(func)
        return ProcessSurface(times=self.times, space=self.space,
                              values=np.vstack([np.asarray(func(row), dtype=float)
                                                for row in self.values]))


def classify_process(gen, surface, tol=None, center=0.0,
                     dt_safety=None):
    """Classify {g_martingale | g_submartingale | g_supermartingale | none}.

    For each consecutive pair s < t, re-solves with the time-t row as
    terminal data and compares to the stored time-s row on the window.
    Raises InconclusiveClassification when one pair mixes signs beyond
    tolerance.
    """
    if len(surface.times) < 2:
        raise ValueError("need at least two times to classify")
    space = surface.space
    tol = tol if tol is not None else solver_tolerance(space.dx)
    dt_safety = dt_safety if dt_safety is not None else SolverConfig().dt_safety
    horizon = surface.times[-1]
    _, mask = _window_mask(space, center, horizon)

    relations = []
    for k in range(len(surface.times) - 1):
        s, t = surface.times[k], surface.times[k + 1]
        resolved = solve_terminal_values(gen, surface.values[k + 1], s, t,
                                         space, dt_safety=dt_safety)
        diff = (resolved.surface[0] - surface.values[k])[mask]
        above, below = float(diff.max()), float(diff.min())
        if above > tol and below < -tol:
            raise InconclusiveClassification(
                f"between t={s} and t={t} the discrepancy spans "
                f"[{below:.3g}, {above:.3g}] beyond tol={tol:.3g}")
        if above <= tol and below >= -tol:
            relations.append("eq")
        elif below >= -tol:
            relations.append("ge")
        else:
            relations.append("le")

    if all(r == "eq" for r in relations):
        return "g_martingale"
    if all(r in ("eq", "ge") for r in relations):
        return "g_submartingale"
    if all(r in ("eq", "le") for r in relations):
        return "g_supermartingale"
    return "none"


@dataclass(frozen=True)
class TransformReport:
    implied: str
    per_payoff: dict
    consistent: bool

    def to_json_dict(self):
        return {"implied": self.implied, "per_payoff": dict(self.per_payoff),
                "consistent": self.consistent}


_ACCEPTABLE = {
    "g_martingale": {"g_martingale"},
    "g_submartingale": {"g_martingale", "g_submartingale"},
}


def martingale_transform_suite(gen, h, base_payoffs, T=1.0, sample_times=None,
                               config=None, scan=None):
    """Transform solved g-martingales through h and classify the result.

    A g-affine h must give g-martingales, a g-convex one g-submartingales;
    an h verdicted "neither" must break the submartingale property for at
    least one payoff in the battery (evidence for the inverse direction).
    Raises ContradictionDetected when a certified verdict and the solver
    disagree (a scheme or checker defect).
    """
    h = as_scalar_function(h)
    config = config or SolverConfig()
    sample_times = tuple(sample_times or (0.0, 0.25 * T, 0.5 * T, 0.75 * T))

    affine = check_shape(gen, h, "affine", scan=scan)
    if affine.decision == "g_affine":
        implied = "g_martingale"
    else:
        convex = check_shape(gen, h, "convex", scan=scan)
        implied = "g_submartingale" if convex.decision == "g_convex" else "neither"

    per_payoff = {}
    for k, payoff in enumerate(base_payoffs):
        payoff = payoff if isinstance(payoff, PayoffSpec) else PayoffSpec.from_source(payoff)
        res = solve_pde(gen, payoff, T, config=config)
        base = ProcessSurface.from_solve(res, sample_times)
        try:
            got = classify_process(gen, base.map(h), center=config.center,
                                   dt_safety=config.dt_safety)
        except InconclusiveClassification:
            got = "inconclusive"
        label = payoff.phi.source if hasattr(payoff.phi, "source") else f"payoff_{k}"
        per_payoff[label] = got

    if implied in _ACCEPTABLE:
        bad = {k: v for k, v in per_payoff.items()
               if v not in _ACCEPTABLE[implied]}
        if bad:
            raise ContradictionDetected(
                f"h implies {implied} but transforms classified {bad}")
        consistent = True
    else:
        consistent = any(v not in ("g_martingale", "g_submartingale")
                         for v in per_payoff.values())
    return TransformReport(implied=implied, per_payoff=per_payoff,
                           consistent=consistent)


# ---------------------------------------------------------------------------
# Viability (epigraph of h under the diagonal two-component system)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViabilityReport:
    scenario: str
    viable: bool
    min_margin: float
    witness: dict
    tol: float

    def to_json_dict(self):
        return {"scenario": self.scenario, "viable": self.viable,
                "min_margin": self.min_margin, "witness": self.witness,
                "tol": self.tol}


def viability_check(gen, h, payoff1, payoff2, T=1.0, config=None, tol=None,
                    name="viability"):
    """Epigraph viability: with h(X1) <= X2 at the terminal time, check
    h(u1(t,x)) <= u2(t,x) for all grid times on the window. The diagonal
    system decouples into two scalar solves."""
    h = as_scalar_function(h)
    config = config or SolverConfig()
    space = default_space_grid(gen, T, config)
    xs = space.points

    x1_vals = np.broadcast_to(np.asarray(payoff1(xs), dtype=float), xs.shape)
    x2_vals = np.broadcast_to(np.asarray(payoff2(xs), dtype=float), xs.shape)
    h_x1 = np.asarray(h(x1_vals), dtype=float)
    slack = float(np.max(h_x1 - x2_vals))
    if slack > 1e-9:
        j = int(np.argmax(h_x1 - x2_vals))
        raise InputNotInEpigraph(
            f"h(X1) exceeds X2 by {slack:.3g} at x={xs[j]:.4g}")

    res1 = solve_pde(gen, payoff1, T, space=space, config=config)
    res2 = solve_pde(gen, payoff2, T, space=space, config=config)
    tol = tol if tol is not None else solver_tolerance(space.dx)
    _, mask = _window_mask(space, config.center, T)

    margins = res2.surface[:, mask] - np.asarray(
        h(res1.surface[:, mask]), dtype=float)
    idx = np.unravel_index(int(np.argmin(margins)), margins.shape)
    min_margin = float(margins[idx])
    witness = {"t": float(res1.time.times[idx[0]]),
               "x": float(xs[mask][idx[1]])}
    return ViabilityReport(scenario=name, viable=min_margin >= -tol,
                           min_margin=min_margin, witness=witness, tol=tol)


# ---------------------------------------------------------------------------
# Axiom suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxiomSuiteReport:
    results: dict  # axiom id -> {"passed": bool, ...}

    @property
    def passed(self):
        return all(r["passed"] for r in self.results.values())

    def raise_if_failed(self):
        for axiom, rep in self.results.items():
            if not rep["passed"]:
                raise AxiomViolated(axiom, str(rep))

    def to_json_dict(self):
        return {"passed": self.passed, "results": self.results}


def axiom_suite(gen, T=1.0, config=None):
    """Numerical checks of monotonicity (A1), terminal consistency (A2),
    the tower property (A3), and the local property (A4')."""
    config = config or SolverConfig()
    results = {}

    # A1: ordered terminal data produce ordered surfaces (comparison)
    hi = solve_pde(gen, PayoffSpec.from_source("x + 1"), T, config=config)
    lo = solve_pde(gen, PayoffSpec.from_source("x"), T,
                   space=hi.space, config=config)
    worst = float(np.min(hi.surface - lo.surface))
    results["A1"] = {"passed": worst >= -1e-9, "min_difference": worst}

    # A2: terminal row equals the payoff exactly
    payoff = PayoffSpec.from_source("x*x")
    res = solve_pde(gen, payoff, T, config=config)
    exact = bool(np.array_equal(res.surface[-1], payoff(res.space.points)))
    results["A2"] = {"passed": exact}

    # A3: chained solve equals direct solve at (0, center)
    tol = solver_tolerance(res.space.dx)
    chain = conditional_g_expectation_path(gen, payoff, T, [T / 2],
                                           space=res.space, config=config)
    direct_v = res.value_at(0.0, config.center)
    chain_v = chain.value_at(0.0, config.center)
    results["A3"] = {"passed": abs(chain_v - direct_v) <= 2 * tol,
                     "direct": direct_v, "chained": chain_v,
                     "tol": 2 * tol}

    # A4': gluing solves at an intermediate-time partition matches the
    # per-piece solves away from the interface (domain of dependence)
    results["A4'"] = _local_property_check(gen, T, config)

    return AxiomSuiteReport(results=results)


def _local_property_check(gen, T, config):
    t_part = T / 4.0
    half = 8.0 * math.sqrt(T) + 2.0 * gen.mu_hat * T
    wide = SolverConfig(n_x=513, half_width=half, center=config.center,
                        dt_safety=config.dt_safety, boundary_probe=False)
    space = default_space_grid(gen, T, wide)
    xs = space.points
    u1 = solve_pde(gen, PayoffSpec.from_source("x"), T, space=space, config=wide)
    u2 = solve_pde(gen, PayoffSpec.from_source("x*x"), T, space=space, config=wide)

    left = xs < config.center
    glued = np.where(left, u1.row_at(t_part), u2.row_at(t_part))
    mixed = solve_terminal_values(gen, glued, 0.0, t_part, space,
                                  dt_safety=wide.dt_safety)

    commit = 4.0 * math.sqrt(t_part) + gen.mu_hat * t_part
    safe = 4.0 * math.sqrt(T) + gen.mu_hat * T
    sel_left = (xs <= config.center - commit) & (xs >= space.x_min + safe)
    sel_right = (xs >= config.center + commit) & (xs <= space.x_max - safe)
    if not sel_left.any() or not sel_right.any():
        raise ValueError("empty commit region; enlarge the domain")

    tol = solver_tolerance(space.dx)
    dev_left = float(np.max(np.abs(mixed.surface[0][sel_left]
                                   - u1.surface[0][sel_left])))
    dev_right = float(np.max(np.abs(mixed.surface[0][sel_right]
                                    - u2.surface[0][sel_right])))
    worst = max(dev_left, dev_right)
    return {"passed": worst <= tol, "max_deviation": worst, "tol": tol,
            "partition_time": t_part}


# ---------------------------------------------------------------------------
# Stability of verdicts under pointwise convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    verdicts: tuple
    limit_verdict: str
    sup_distances: tuple
    monotone: bool

    @property
    def all_g_convex(self):
        return (self.limit_verdict == "g_convex"
                and all(v == "g_convex" for v in self.verdicts))

    def to_json_dict(self):
        return {"verdicts": list(self.verdicts),
                "limit_verdict": self.limit_verdict,
                "sup_distances": list(self.sup_distances),
                "monotone": self.monotone}


def stability_suite(gen, h_sequence, h_limit, scan=None):
    """All members and the pointwise limit must share the g_convex verdict;
    sup-distances to the limit must decrease monotonically."""
    from .convexity import DEFAULT_SCAN, check_nonsmooth

    scan = scan or DEFAULT_SCAN
    grid = scan.y_points
    limit_tab = as_scalar_function(h_limit)
    limit_vals = np.asarray(limit_tab(grid), dtype=float)
    verdicts = []
    distances = []
    for h in h_sequence:
        h = as_scalar_function(h)
        verdicts.append(check_nonsmooth(gen, h, scan=scan).decision)
        distances.append(float(np.max(np.abs(
            np.asarray(h(grid), dtype=float) - limit_vals))))
    limit_verdict = check_nonsmooth(gen, limit_tab, scan=scan).decision
    monotone = all(a >= b - 1e-12 for a, b in zip(distances, distances[1:]))
    return StabilityReport(verdicts=tuple(verdicts), limit_verdict=limit_verdict,
                           sup_distances=tuple(distances), monotone=monotone)
