"""Generator-level structure tests predicting Jensen behavior for whole
function classes: super-homogeneity, financing conditions, translation
invariance, periodicity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsl
from .convexity import DEFAULT_SCAN, TAU_OP_SYMBOLIC, AffinePair, pi_a_membership
from .errors import InconsistentRoutes

#: lambda samples for the super-homogeneity scan; violations in the catalog
#: occur at negative lambda
DEFAULT_LAMBDAS = tuple(sorted(set(
    [-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0]
    + list(np.linspace(-3.0, 3.0, 50)))))

#: translation constants; pi/3 guards against grid aliasing
DEFAULT_SHIFTS = (-2.0, -1.0, 1.0, 2.0, np.pi / 3.0)


@dataclass(frozen=True)
class CharacterizationReport:
    test_name: str
    verdict: bool
    margin: float
    witness: dict | None = None
    relation: str | None = None
    reason: str | None = None

    def to_json_dict(self):
        out = {"test": self.test_name, "verdict": self.verdict,
               "margin": self.margin}
        if self.relation is not None:
            out["relation"] = self.relation
        if self.witness is not None:
            out["witness"] = self.witness
        if self.reason is not None:
            out["reason"] = self.reason
        return out


def _z_grid(gen, scan):
    d = gen.dim_z
    zz = []
    for i in range(d):
        sh = [1] * (1 + d)  # leading t axis added by callers as needed
        sh[1 + i] = -1
        zz.append(scan.z_points.reshape(sh))
    return zz


def _y_dependence_witness(gen, scan):
    """Largest variation of g in y at fixed (t, z), with its location."""
    d = gen.dim_z
    nd = 2 + d
    tt = np.asarray(scan.t_values, dtype=float).reshape((-1,) + (1,) * (nd - 1))
    yy = scan.y_points.reshape((1, -1) + (1,) * d)
    zz = []
    for i in range(d):
        sh = [1] * nd
        sh[2 + i] = -1
        zz.append(scan.z_points.reshape(sh))
    vals = dsl.eval_expr(gen.expr.ast, tt, yy, tuple(zz))
    full = (len(scan.t_values), scan.n_y) + (scan.n_z,) * d
    vals = np.broadcast_to(vals, full)
    spread = vals.max(axis=1) - vals.min(axis=1)
    idx = np.unravel_index(int(np.argmax(spread)), spread.shape)
    ti, *zi = idx
    y_hi = float(scan.y_points[int(np.argmax(vals[(ti, slice(None)) + tuple(zi)]))])
    return float(spread[idx]), {
        "t": float(scan.t_values[ti]),
        "y": y_hi,
        "z": [float(scan.z_points[j]) for j in zi],
    }


def super_homogeneity_test(gen, lambdas=DEFAULT_LAMBDAS, scan=None,
                           tau=TAU_OP_SYMBOLIC):
    """g(t, lambda z) >= lambda g(t, z) over the scan; requires y-independence."""
    scan = scan or DEFAULT_SCAN
    if not gen.independent_of_y:
        spread, witness = _y_dependence_witness(gen, scan)
        return CharacterizationReport(
            test_name="super_homogeneity", verdict=False, margin=-spread,
            witness=witness, reason="dependent_on_y")

    d = gen.dim_z
    nd = 2 + d
    tt = np.asarray(scan.t_values, dtype=float).reshape((-1,) + (1,) * (nd - 1))
    lam = np.asarray(lambdas, dtype=float).reshape((1, -1) + (1,) * d)
    zz = []
    for i in range(d):
        sh = [1] * nd
        sh[2 + i] = -1
        zz.append(scan.z_points.reshape(sh))
    ast = gen.expr.ast
    lhs = dsl.eval_expr(ast, tt, 0.0, tuple(lam * zi for zi in zz))
    rhs = lam * dsl.eval_expr(ast, tt, 0.0, tuple(zz))
    full = (len(scan.t_values), len(lambdas)) + (scan.n_z,) * d
    dev = np.broadcast_to(lhs - rhs, full)
    idx = np.unravel_index(int(np.argmin(dev)), dev.shape)
    margin = float(dev[idx])
    ti, li, *zi = idx
    witness = {"t": float(scan.t_values[ti]), "lambda": float(lambdas[li]),
               "z": [float(scan.z_points[j]) for j in zi]}
    return CharacterizationReport(
        test_name="super_homogeneity", verdict=margin >= -tau, margin=margin,
        witness=None if margin >= -tau else witness)


def jensen_all_convex_predictor(gen, scan=None):
    """True iff Jensen holds for every convex candidate: g independent of y
    and super-homogeneous in z."""
    scan = scan or DEFAULT_SCAN
    return gen.independent_of_y and super_homogeneity_test(gen, scan=scan).verdict


def _flag_vs_membership(gen, test_name, flag, memberships, scan, tau):
    """Shared body of the financing-condition tests: a structure flag must
    agree with the sampled pi_a-membership route."""
    reports = [pi_a_membership(gen, pair, scan=scan, tau=tau)
               for pair in memberships]
    member_route = all(r.member for r in reports)
    if member_route != flag:
        raise InconsistentRoutes(
            f"{test_name}: flag route says {flag}, membership route says "
            f"{member_route} ({reports})")
    worst = max(reports, key=lambda r: abs(r.margin))
    return CharacterizationReport(
        test_name=test_name, verdict=flag, margin=float(worst.margin),
        witness=None if flag else worst.witness)


def self_financing_test(gen, scan=None, tau=TAU_OP_SYMBOLIC):
    """E^g[0] = 0, equivalently g(., 0, 0) = 0, equivalently h = 0 g-affine."""
    scan = scan or DEFAULT_SCAN
    return _flag_vs_membership(gen, "self_financing", gen.zero_at_origin,
                               [AffinePair(0.0, 0.0)], scan, tau)


def zero_interest_test(gen, scan=None, tau=TAU_OP_SYMBOLIC):
    """E^g[c] = c for constants, equivalently g(., y, 0) = 0."""
    scan = scan or DEFAULT_SCAN
    return _flag_vs_membership(
        gen, "zero_interest", gen.zero_on_y_axis,
        [AffinePair(0.0, 0.0), AffinePair(0.0, 1.0), AffinePair(0.0, -1.0)],
        scan, tau)


def translation_invariance_test(gen, shifts=DEFAULT_SHIFTS, scan=None,
                                tau=TAU_OP_SYMBOLIC):
    """E^g[X + c] = E^g[X] + c for all c, equivalently g independent of y,
    equivalently h(y) = y + c g-affine for all c."""
    scan = scan or DEFAULT_SCAN
    return _flag_vs_membership(
        gen, "translation_invariance", gen.independent_of_y,
        [AffinePair(1.0, float(c)) for c in shifts], scan, tau)


def periodicity_test(gen, c, scan=None, tau=TAU_OP_SYMBOLIC):
    """Classify g(t, y + c, z) vs g(t, y, z): equal / ge / le / none."""
    if c == 0:
        raise ValueError("shift c must be nonzero")
    scan = scan or DEFAULT_SCAN
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
    diff = (dsl.eval_expr(ast, tt, yy + c, tuple(zz))
            - dsl.eval_expr(ast, tt, yy, tuple(zz)))
    full = (len(scan.t_values), scan.n_y) + (scan.n_z,) * d
    diff = np.broadcast_to(diff, full)
    lo, hi = float(diff.min()), float(diff.max())
    if abs(lo) <= tau and abs(hi) <= tau:
        relation, margin = "equal", max(abs(lo), abs(hi))
    elif lo >= -tau:
        relation, margin = "ge", lo
    elif hi <= tau:
        relation, margin = "le", hi
    else:
        relation, margin = "none", lo
    return CharacterizationReport(
        test_name="periodicity", verdict=relation != "none", margin=margin,
        relation=relation)
