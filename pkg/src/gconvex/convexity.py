"""Pointwise convexity criterion: the operator

    L_g h (t, y, z) = 1/2 h''(y)|z|^2 + g(t, h(y), h'(y) z) - h'(y) g(t, y, z)

and the decisions built on it: shape checks for smooth and tabulated
candidates, affine-pair memberships, envelopes, compositions.

A "neither" verdict is a certificate (a concrete violating point evaluated in
exact arithmetic); a passing verdict is evidence on the scan, not a proof.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsl
from .errors import (
    DerivativeUnavailable,
    DominationViolated,
    EmptyMinorantFamily,
    GridTooCoarse,
    HypothesisNotVerified,
    PreconditionFailed,
)
from .functions import SymbolicFunction, TabulatedFunction, as_scalar_function

TAU_OP_SYMBOLIC = 1e-9

LABEL_VIOLATED = "violated (witness)"
LABEL_NO_VIOLATION = "no violation found on scan"


@dataclass(frozen=True)
class ScanGrid:
    """Scan of the quantifier domain: t values, y range, z box per coordinate."""

    t_values: tuple = (0.0, 0.5, 1.0)
    y_min: float = -5.0
    y_max: float = 5.0
    n_y: int = 201
    z_min: float = -5.0
    z_max: float = 5.0
    n_z: int = 51

    @classmethod
    def for_horizon(cls, T, **kw):
        return cls(t_values=(0.0, T / 2.0, T), **kw)

    @property
    def y_points(self):
        return np.linspace(self.y_min, self.y_max, self.n_y)

    @property
    def z_points(self):
        return np.linspace(self.z_min, self.z_max, self.n_z)

    def describe(self):
        return {
            "t_values": list(self.t_values),
            "y": [self.y_min, self.y_max, self.n_y],
            "z": [self.z_min, self.z_max, self.n_z],
        }


DEFAULT_SCAN = ScanGrid()


@dataclass(frozen=True)
class ConvexityVerdict:
    decision: str  # g_convex | g_concave | g_affine | neither
    min_margin: float
    max_margin: float
    witness: dict
    scan: dict
    certificate: bool
    tau: float

    @property
    def label(self):
        return LABEL_VIOLATED if self.certificate else LABEL_NO_VIOLATION

    def to_json_dict(self):
        return {
            "decision": self.decision,
            "min_margin": self.min_margin,
            "max_margin": self.max_margin,
            "witness": self.witness,
            "scan": self.scan,
            "certificate": self.certificate,
            "label": self.label,
        }


def l_g_operator(gen, h, t, y, z):
    """Evaluate L_g h at a single point; z is a sequence of dim_z reals."""
    h = as_scalar_function(h)
    z = tuple(float(zi) for zi in z)
    if len(z) != gen.dim_z:
        raise ValueError(f"expected {gen.dim_z} z-components, got {len(z)}")
    if isinstance(h, TabulatedFunction):
        hy = float(h(y))
        hp = h.derivative(y)  # raises DerivativeUnavailable at kinks
        j = int(np.argmin(np.abs(h.grid - y)))
        hpp = float(h.second_quotients()[j - 1])
    else:
        hy = float(h(y))
        hp = float(h.derivative(y))
        hpp = float(h.second_derivative(y))
    z_sq = sum(zi * zi for zi in z)
    g_h = float(gen(t, hy, tuple(hp * zi for zi in z)))
    g_y = float(gen(t, y, z))
    return 0.5 * hpp * z_sq + g_h - hp * g_y


def _margin_grid(gen, t_values, y_values, h_vals, hp_vals, hpp_vals, z_values):
    """L_g margins on the product grid t x y x z^d.

    h_vals/hp_vals/hpp_vals are aligned with y_values. Returns an array of
    shape (n_t, n_y, n_z, ..., n_z).
    """
    d = gen.dim_z
    if d > 2:
        raise ValueError("scans support dim_z <= 2")
    nd = 2 + d
    tt = np.asarray(t_values, dtype=float).reshape((-1,) + (1,) * (nd - 1))
    y_values = np.asarray(y_values, dtype=float)
    y_shape = (1, -1) + (1,) * d
    yy = y_values.reshape(y_shape)

    def along_y(vals):
        arr = np.broadcast_to(np.asarray(vals, dtype=float), y_values.shape)
        return arr.reshape(y_shape)

    h = along_y(h_vals)
    hp = along_y(hp_vals)
    hpp = along_y(hpp_vals)
    zz = []
    for i in range(d):
        sh = [1] * nd
        sh[2 + i] = -1
        zz.append(np.asarray(z_values, dtype=float).reshape(sh))
    z_sq = sum(zi ** 2 for zi in zz)
    ast = gen.expr.ast
    g_h = dsl.eval_expr(ast, tt, h, tuple(hp * zi for zi in zz))
    g_y = dsl.eval_expr(ast, tt, yy, tuple(zz))
    margins = 0.5 * hpp * z_sq + g_h - hp * g_y
    full = (len(t_values), len(y_values)) + (len(z_values),) * d
    return np.broadcast_to(margins, full)


def _witness_at(index, t_values, y_values, z_values, dim_z):
    ti, yi, *zi = index
    return {
        "t": float(np.asarray(t_values)[ti]),
        "y": float(np.asarray(y_values)[yi]),
        "z": [float(np.asarray(z_values)[j]) for j in zi],
    }


def _decide(margins, mode, tau, t_values, y_values, z_values, dim_z, scan_desc):
    """Margins -> verdict. Ties resolve to the first point in (t, y, z) order
    because argmin/argmax scan in C order."""
    min_idx = np.unravel_index(int(np.argmin(margins)), margins.shape)
    max_idx = np.unravel_index(int(np.argmax(margins)), margins.shape)
    min_margin = float(margins[min_idx])
    max_margin = float(margins[max_idx])
    if mode == "convex":
        passed = min_margin >= -tau
        decision = "g_convex" if passed else "neither"
        w_idx = min_idx
    elif mode == "concave":
        passed = max_margin <= tau
        decision = "g_concave" if passed else "neither"
        w_idx = max_idx
    elif mode == "affine":
        passed = min_margin >= -tau and max_margin <= tau
        decision = "g_affine" if passed else "neither"
        w_idx = min_idx if abs(min_margin) >= abs(max_margin) else max_idx
    else:
        raise ValueError(f"unknown mode {mode!r}")
    witness = _witness_at(w_idx, t_values, y_values, z_values, dim_z)
    return ConvexityVerdict(
        decision=decision, min_margin=min_margin, max_margin=max_margin,
        witness=witness, scan=scan_desc, certificate=not passed, tau=tau)


def check_shape(gen, h, mode="convex", scan=None, tau=None):
    """Scan L_g over the grid and decide the requested shape.

    Symbolic C2 candidates use exact derivatives; tabulated or merely
    continuous candidates delegate to check_nonsmooth (convex mode only).
    """
    scan = scan or DEFAULT_SCAN
    h = as_scalar_function(h)
    if isinstance(h, TabulatedFunction):
        if mode != "convex":
            raise DerivativeUnavailable(
                f"mode {mode!r} requires a symbolic C2 candidate")
        return check_nonsmooth(gen, h, scan=scan)
    if h.smoothness != "C2":
        if mode != "convex":
            raise DerivativeUnavailable(
                f"mode {mode!r} requires a C2 candidate, got a continuous one")
        return check_nonsmooth(gen, h.tabulate(scan.y_points), scan=scan)

    tau = TAU_OP_SYMBOLIC if tau is None else tau
    ys = scan.y_points
    margins = _margin_grid(gen, scan.t_values, ys, h(ys), h.derivative(ys),
                           h.second_derivative(ys), scan.z_points)
    return _decide(margins, mode, tau, scan.t_values, ys, scan.z_points,
                   gen.dim_z, scan.describe())


def check_nonsmooth(gen, h, scan=None):
    """Almost-everywhere criterion for continuous tabulated candidates.

    Step 1: usual convexity via second difference quotients (a necessary
    condition). Step 2: at points where the left/right difference quotients
    agree (h'' exists numerically), require L_g >= -tau; kinks are skipped.
    """
    scan = scan or DEFAULT_SCAN
    if not isinstance(h, TabulatedFunction):
        h = as_scalar_function(h).tabulate(scan.y_points)
    dy = h.spacing
    tau = 10.0 * dy * dy
    quotients = h.second_quotients()
    interior_y = h.grid[1:-1]
    scan_desc = dict(scan.describe(), tabulation=[float(h.grid[0]),
                                                  float(h.grid[-1]), len(h.grid)])
    j_min = int(np.argmin(quotients))
    if quotients[j_min] < -tau:
        witness = {"t": float(scan.t_values[0]), "y": float(interior_y[j_min]),
                   "z": [0.0] * gen.dim_z}
        return ConvexityVerdict(
            decision="neither", min_margin=float(quotients[j_min]),
            max_margin=float(quotients.max()), witness=witness,
            scan=scan_desc, certificate=True, tau=tau)

    valid = ~h.kink_mask()
    if int(valid.sum()) < 10:
        raise GridTooCoarse(
            f"only {int(valid.sum())} usable points after kink exclusion")
    ys = interior_y[valid]
    h_vals = h.values[1:-1][valid]
    hp_vals = 0.5 * (h.left_slopes() + h.right_slopes())[valid]
    hpp_vals = quotients[valid]
    margins = _margin_grid(gen, scan.t_values, ys, h_vals, hp_vals, hpp_vals,
                           scan.z_points)
    return _decide(margins, "convex", tau, scan.t_values, ys, scan.z_points,
                   gen.dim_z, scan_desc)


# ---------------------------------------------------------------------------
# Affine pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffinePair:
    a: float
    b: float


@dataclass(frozen=True)
class MembershipReport:
    kind: str  # "pi_a" | "pi_v"
    pair: AffinePair
    member: bool
    margin: float
    witness: dict

    def to_json_dict(self):
        return {"kind": self.kind, "a": self.pair.a, "b": self.pair.b,
                "member": self.member, "margin": self.margin,
                "witness": self.witness}


def _affine_deviation(gen, pair, scan):
    """g(t, a y + b, a z) - a g(t, y, z) on the scan grid."""
    d = gen.dim_z
    nd = 2 + d
    tt = np.asarray(scan.t_values, dtype=float).reshape((-1,) + (1,) * (nd - 1))
    yy = scan.y_points.reshape((1, -1) + (1,) * d)
    zz = []
    for i in range(d):
        sh = [1] * nd
        sh[2 + i] = -1
        zz.append(scan.z_points.reshape(sh))
    ast = gen.expr.ast
    lhs = dsl.eval_expr(ast, tt, pair.a * yy + pair.b,
                        tuple(pair.a * zi for zi in zz))
    rhs = pair.a * dsl.eval_expr(ast, tt, yy, tuple(zz))
    full = (len(scan.t_values), scan.n_y) + (scan.n_z,) * d
    return np.broadcast_to(lhs - rhs, full)


def pi_a_membership(gen, pair, scan=None, tau=TAU_OP_SYMBOLIC):
    """(a, b) commutes with g: g(t, ay+b, az) = a g(t, y, z) on the scan."""
    scan = scan or DEFAULT_SCAN
    pair = pair if isinstance(pair, AffinePair) else AffinePair(*pair)
    dev = _affine_deviation(gen, pair, scan)
    idx = np.unravel_index(int(np.argmax(np.abs(dev))), dev.shape)
    margin = float(dev[idx])
    member = abs(margin) <= tau
    witness = _witness_at(idx, scan.t_values, scan.y_points, scan.z_points,
                          gen.dim_z)
    return MembershipReport(kind="pi_a", pair=pair, member=member,
                            margin=margin, witness=witness)


def pi_v_membership(gen, pair, scan=None, tau=TAU_OP_SYMBOLIC):
    """(a, b) dominates under g: g(t, ay+b, az) >= a g(t, y, z) on the scan."""
    scan = scan or DEFAULT_SCAN
    pair = pair if isinstance(pair, AffinePair) else AffinePair(*pair)
    dev = _affine_deviation(gen, pair, scan)
    idx = np.unravel_index(int(np.argmin(dev)), dev.shape)
    margin = float(dev[idx])
    member = margin >= -tau
    witness = _witness_at(idx, scan.t_values, scan.y_points, scan.z_points,
                          gen.dim_z)
    return MembershipReport(kind="pi_v", pair=pair, member=member,
                            margin=margin, witness=witness)


# ---------------------------------------------------------------------------
# Envelope, suprema, compositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopeResult:
    function: TabulatedFunction
    verdict: ConvexityVerdict
    support_pairs: tuple
    phi_values: np.ndarray


def _default_slope_grid(phi_vals, y_grid, n_slopes=401):
    slopes = np.diff(phi_vals) / np.diff(y_grid)
    lim = float(np.max(np.abs(slopes))) + 1.0
    return np.linspace(-lim, lim, n_slopes)


def g_convex_envelope(gen, phi, y_grid=None, slope_grid=None, scan=None,
                      tau=TAU_OP_SYMBOLIC):
    """Supremum of feasible affine minorants a y + b*(a) with (a, b*) in Pi_g^v.

    b*(a) is the largest intercept keeping the line below phi on the grid;
    slopes whose pair fails the Pi_g^v scan are discarded.
    """
    scan = scan or DEFAULT_SCAN
    phi = as_scalar_function(phi)
    if y_grid is None:
        y_grid = phi.grid if isinstance(phi, TabulatedFunction) else \
            np.linspace(scan.y_min, scan.y_max, 401)
    y_grid = np.asarray(y_grid, dtype=float)
    phi_vals = np.asarray(phi(y_grid), dtype=float)
    if slope_grid is None:
        slope_grid = _default_slope_grid(phi_vals, y_grid)

    kept = []
    f_vals = np.full_like(phi_vals, -np.inf)
    for a in slope_grid:
        b_star = float(np.min(phi_vals - a * y_grid))
        if not pi_v_membership(gen, AffinePair(float(a), b_star), scan, tau).member:
            continue
        kept.append(AffinePair(float(a), b_star))
        f_vals = np.maximum(f_vals, a * y_grid + b_star)
    if not kept:
        raise EmptyMinorantFamily("no slope admits a feasible minorant")

    function = TabulatedFunction(grid=y_grid, values=f_vals)
    verdict = check_nonsmooth(gen, function, scan=scan)
    return EnvelopeResult(function=function, verdict=verdict,
                          support_pairs=tuple(kept), phi_values=phi_vals)


def _verdict_for(gen, h, scan):
    h = as_scalar_function(h)
    if isinstance(h, TabulatedFunction) or h.smoothness != "C2":
        return check_nonsmooth(gen, h, scan=scan)
    return check_shape(gen, h, "convex", scan=scan)


def combine_sup(gen, members, dominator, y_grid=None, scan=None):
    """Pointwise max of verified g-convex functions dominated by phi.

    Returns the tabulated supremum together with its re-checked verdict.
    """
    scan = scan or DEFAULT_SCAN
    if not members:
        raise ValueError("need at least one member function")
    if y_grid is None:
        y_grid = scan.y_points
    y_grid = np.asarray(y_grid, dtype=float)
    dominator = as_scalar_function(dominator)
    phi_vals = np.asarray(dominator(y_grid), dtype=float)

    stack = []
    for h in members:
        h = as_scalar_function(h)
        verdict = _verdict_for(gen, h, scan)
        if verdict.decision != "g_convex":
            raise HypothesisNotVerified(
                f"member is not g-convex (decision {verdict.decision}, "
                f"witness {verdict.witness})")
        vals = np.asarray(h(y_grid), dtype=float)
        excess = float(np.max(vals - phi_vals))
        if excess > 1e-9:
            raise DominationViolated(f"member exceeds dominator by {excess:.3g}")
        stack.append(vals)
    f_vals = np.max(np.vstack(stack), axis=0)
    function = TabulatedFunction(grid=y_grid, values=f_vals)
    verdict = check_nonsmooth(gen, function, scan=scan)
    return function, verdict


def _fit_affine(psi, y_grid):
    vals = np.asarray(psi(y_grid), dtype=float)
    a = (vals[-1] - vals[0]) / (y_grid[-1] - y_grid[0])
    b = vals[0] - a * y_grid[0]
    residual = float(np.max(np.abs(vals - (a * y_grid + b))))
    return float(a), float(b), residual


def check_composition(gen, h, psi, case, scan=None):
    """Verdict for h(psi(.)) under the two composition rules.

    case "affine_inner": psi g-affine (pair in Pi_g^a) and h g-convex.
    case "increasing_outer": h g-convex and nondecreasing, psi g-convex.
    """
    scan = scan or DEFAULT_SCAN
    h = as_scalar_function(h)
    psi = as_scalar_function(psi)
    y_grid = scan.y_points

    if case == "affine_inner":
        a, b, residual = _fit_affine(psi, y_grid)
        if residual > 1e-9:
            raise HypothesisNotVerified(
                f"inner function is not affine (residual {residual:.3g})")
        if not pi_a_membership(gen, AffinePair(a, b), scan).member:
            raise HypothesisNotVerified(f"({a}, {b}) is not in Pi_g^a")
        outer = _verdict_for(gen, h, scan)
        if outer.decision != "g_convex":
            raise HypothesisNotVerified("outer function is not g-convex")
    elif case == "increasing_outer":
        outer = _verdict_for(gen, h, scan)
        if outer.decision != "g_convex":
            raise HypothesisNotVerified("outer function is not g-convex")
        h_on = np.asarray(h(y_grid), dtype=float)
        if np.min(np.diff(h_on)) < -1e-9:
            raise HypothesisNotVerified("outer function is not nondecreasing")
        inner = _verdict_for(gen, psi, scan)
        if inner.decision != "g_convex":
            raise HypothesisNotVerified("inner function is not g-convex")
    else:
        raise ValueError(f"unknown composition case {case!r}")

    if isinstance(h, SymbolicFunction) and isinstance(psi, SymbolicFunction):
        composed = h.compose(psi)
        if composed.smoothness == "C2":
            return check_shape(gen, composed, "convex", scan=scan)
        tab = composed.tabulate(y_grid)
    else:
        tab = TabulatedFunction(grid=y_grid,
                                values=np.asarray(h(psi(y_grid)), dtype=float))
    return check_nonsmooth(gen, tab, scan=scan)


# ---------------------------------------------------------------------------
# Specialized corollaries
# ---------------------------------------------------------------------------

def special_case_z_independent(gen, h, scan=None, tau=TAU_OP_SYMBOLIC):
    """Reduced criterion when g does not depend on z:
    h convex and g(t, h(y)) - h'(y) g(t, y) >= 0 on the (t, y) scan."""
    scan = scan or DEFAULT_SCAN
    if not gen.independent_of_z:
        raise PreconditionFailed("generator depends on z")
    h = as_scalar_function(h)
    if h.smoothness != "C2":
        raise DerivativeUnavailable("the reduced criterion needs a C2 candidate")
    ys = scan.y_points
    hpp = np.broadcast_to(np.asarray(h.second_derivative(ys), dtype=float), ys.shape)
    scan_desc = scan.describe()
    zeros = [0.0] * gen.dim_z
    if float(hpp.min()) < -tau:
        j = int(np.argmin(hpp))
        return ConvexityVerdict(
            decision="neither", min_margin=float(hpp.min()),
            max_margin=float(hpp.max()),
            witness={"t": float(scan.t_values[0]), "y": float(ys[j]), "z": zeros},
            scan=scan_desc, certificate=True, tau=tau)

    tt = np.asarray(scan.t_values, dtype=float)[:, None]
    yy = ys[None, :]
    hy = np.broadcast_to(np.asarray(h(ys), dtype=float), ys.shape)[None, :]
    hp = np.broadcast_to(np.asarray(h.derivative(ys), dtype=float), ys.shape)[None, :]
    z0 = tuple(np.zeros_like(yy) for _ in range(gen.dim_z))
    ast = gen.expr.ast
    ineq = dsl.eval_expr(ast, tt, hy, z0) - hp * dsl.eval_expr(ast, tt, yy, z0)
    ineq = np.broadcast_to(ineq, (len(scan.t_values), len(ys)))
    idx = np.unravel_index(int(np.argmin(ineq)), ineq.shape)
    min_margin = float(ineq[idx])
    passed = min_margin >= -tau
    witness = {"t": float(scan.t_values[idx[0]]), "y": float(ys[idx[1]]),
               "z": zeros}
    return ConvexityVerdict(
        decision="g_convex" if passed else "neither",
        min_margin=min_margin, max_margin=float(ineq.max()),
        witness=witness, scan=scan_desc, certificate=not passed, tau=tau)


@dataclass(frozen=True)
class SlopeBoundReport:
    sign: str  # "positive" | "negative" | "both"
    verdict: ConvexityVerdict
    slope_min: float
    slope_max: float
    consistent: bool


def slope_bound_check(gen, h, scan=None, tau=TAU_OP_SYMBOLIC):
    """For y-independent g with g(t, 0) of definite sign somewhere, a g-convex
    h must satisfy h' <= 1 (positive sign) resp. h' >= 1 (negative sign)."""
    scan = scan or DEFAULT_SCAN
    if not gen.independent_of_y:
        raise PreconditionFailed("generator depends on y")
    h = as_scalar_function(h)
    t_grid = np.linspace(min(scan.t_values), max(scan.t_values), 21)
    g0 = np.broadcast_to(
        np.asarray(gen(t_grid, 0.0, tuple(0.0 for _ in range(gen.dim_z))),
                   dtype=float), t_grid.shape)
    has_pos = bool(np.any(g0 > tau))
    has_neg = bool(np.any(g0 < -tau))
    if not has_pos and not has_neg:
        raise PreconditionFailed("g(t, 0) vanishes on the scan; no sign condition")
    sign = "both" if (has_pos and has_neg) else ("positive" if has_pos else "negative")

    verdict = check_shape(gen, h, "convex", scan=scan)
    ys = scan.y_points
    if isinstance(h, TabulatedFunction):
        slopes = np.concatenate([h.left_slopes(), h.right_slopes()])
    else:
        slopes = np.broadcast_to(np.asarray(h.derivative(ys), dtype=float), ys.shape)
    slope_min, slope_max = float(np.min(slopes)), float(np.max(slopes))
    consistent = True
    if verdict.decision == "g_convex":
        if has_pos and slope_max > 1.0 + tau:
            consistent = False
        if has_neg and slope_min < 1.0 - tau:
            consistent = False
    return SlopeBoundReport(sign=sign, verdict=verdict, slope_min=slope_min,
                            slope_max=slope_max, consistent=consistent)
