"""Generator expressions g(t, y, z): parsing, validation, and structure flags."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .errors import DivisionHazard, NonLipschitzWarning

#: classification tolerance; expressions are evaluated exactly on the grid,
#: so this only has to absorb float rounding
TAU_CLASS = 1e-12

_HAZARD_EPS = 1e-9


@dataclass(frozen=True)
class ValidationDomain:
    """Box in (t, y, z)-space with per-axis resolutions.

    Defaults cover desk-scale scenarios with margin: t in [0, T],
    y in [-10, 10], z in [-10, 10]^d, 101 points per axis (21 per z-axis
    when d >= 2 to keep the product grid tractable).
    """

    t_max: float = 1.0
    y_lim: float = 10.0
    z_lim: float = 10.0
    n_t: int = 101
    n_y: int = 101
    n_z: int = 101

    def __post_init__(self):
        if min(self.n_t, self.n_y, self.n_z) < 2:
            raise ValueError("validation grid needs at least 2 points per axis")
        if self.t_max <= 0 or self.y_lim <= 0 or self.z_lim <= 0:
            raise ValueError("validation box extents must be positive")

    def axes(self, dim_z):
        t = np.linspace(0.0, self.t_max, self.n_t)
        y = np.linspace(-self.y_lim, self.y_lim, self.n_y)
        n_z = self.n_z if dim_z == 1 else min(self.n_z, 21)
        zs = [np.linspace(-self.z_lim, self.z_lim, n_z) for _ in range(dim_z)]
        return t, y, zs


@dataclass(frozen=True)
class GeneratorExpr:
    """Validated driver AST together with its z-dimension."""

    ast: object
    dim_z: int

    def __call__(self, t, y, z):
        return dsl.eval_expr(self.ast, t, y, z)

    @property
    def source(self):
        return dsl.pretty_print(self.ast)


@dataclass(frozen=True)
class GeneratorSpec:
    """Generator plus the grid evidence gathered about it."""

    expr: GeneratorExpr
    mu_hat: float
    independent_of_y: bool
    independent_of_z: bool
    zero_at_origin: bool
    zero_on_y_axis: bool
    validation_domain: ValidationDomain = field(default_factory=ValidationDomain)

    def __post_init__(self):
        if not np.isfinite(self.mu_hat) or self.mu_hat < 0:
            raise ValueError(f"mu_hat must be finite and >= 0, got {self.mu_hat}")
        if self.zero_on_y_axis and not self.zero_at_origin:
            raise ValueError("zero_on_y_axis implies zero_at_origin")

    @property
    def dim_z(self):
        return self.expr.dim_z

    def __call__(self, t, y, z):
        return self.expr(t, y, z)

    @property
    def flags(self):
        return {
            "independent_of_y": self.independent_of_y,
            "independent_of_z": self.independent_of_z,
            "zero_at_origin": self.zero_at_origin,
            "zero_on_y_axis": self.zero_on_y_axis,
        }

    @classmethod
    def from_source(cls, source, dim_z=1, domain=None):
        domain = domain or ValidationDomain()
        expr = parse_generator(source, dim_z, domain=domain)
        mu = estimate_lipschitz(expr, domain)
        flags = classify_generator(expr, domain)
        return cls(expr=expr, mu_hat=mu, validation_domain=domain, **flags)


def _grid_eval(expr, t, y, zs):
    """Evaluate on the product grid t x y x z_1 x ... x z_d.

    Returns an array of shape (n_t, n_y, n_z, ..., n_z).
    """
    d = len(zs)
    shape_len = 2 + d
    tt = t.reshape((-1,) + (1,) * (shape_len - 1))
    yy = y.reshape((1, -1) + (1,) * d)
    zz = []
    for i, zi in enumerate(zs):
        sh = [1] * shape_len
        sh[2 + i] = -1
        zz.append(zi.reshape(sh))
    vals = dsl.eval_expr(expr.ast, tt, yy, zz)
    return np.broadcast_to(vals, (len(t), len(y)) + tuple(len(zi) for zi in zs))


def parse_generator(source, dim_z, domain=None):
    """Parse and validate a driver expression.

    Raises ExpressionSyntaxError / UnknownVariable on grammar violations and
    DivisionHazard when a denominator can vanish on the validation grid.
    """
    if dim_z < 1:
        raise ValueError(f"dim_z must be >= 1, got {dim_z}")
    ast = dsl.parse_expression(source, dim_z)
    expr = GeneratorExpr(ast=ast, dim_z=dim_z)
    _check_division(expr, domain or ValidationDomain())
    return expr


def _check_division(expr, domain):
    denominators = [n.right for n in dsl.iter_nodes(expr.ast) if isinstance(n, dsl.Div)]
    if not denominators:
        return
    t, y, zs = domain.axes(expr.dim_z)
    for den in denominators:
        vals = _grid_eval(GeneratorExpr(den, expr.dim_z), t, y, zs)
        lo, hi = float(vals.min()), float(vals.max())
        if lo <= 0.0 <= hi or min(abs(lo), abs(hi)) < _HAZARD_EPS:
            raise DivisionHazard(
                f"denominator '{dsl.pretty_print(den)}' can vanish on the "
                f"validation grid (range [{lo:.3g}, {hi:.3g}])")


def eval_generator(expr, t, y, z):
    """Evaluate g at (t, y, z); z is a sequence of dim_z components."""
    z = tuple(z)
    if len(z) != expr.dim_z:
        raise ValueError(f"expected {expr.dim_z} z-components, got {len(z)}")
    return dsl.eval_expr(expr.ast, t, y, z)


def _lipschitz_on_grid(expr, domain, refine):
    t, y, zs = domain.axes(expr.dim_z)
    # refine y and z axes only; t is a parameter of the (y,z)-Lipschitz bound
    y = np.linspace(y[0], y[-1], (len(y) - 1) * refine + 1)
    zs = [np.linspace(z[0], z[-1], (len(z) - 1) * refine + 1) for z in zs]
    per_slice = len(y) * int(np.prod([len(z) for z in zs]))
    chunk = max(1, 2_000_000 // max(per_slice, 1))
    best = 0.0
    for start in range(0, len(t), chunk):
        vals = _grid_eval(expr, t[start:start + chunk], y, zs)
        # max adjacent difference quotient along each non-t coordinate; on a
        # 1-d section the max over all pairs equals the max over adjacent pairs
        for axis in range(1, vals.ndim):
            step = (y[1] - y[0]) if axis == 1 else (zs[axis - 2][1] - zs[axis - 2][0])
            diffs = np.abs(np.diff(vals, axis=axis)) / step
            best = max(best, float(diffs.max()))
    return best


def estimate_lipschitz(expr, domain=None, check_refinement=True):
    """Grid estimate of the Lipschitz constant in (y, z) under the sum norm.

    Takes the max over adjacent grid pairs along each coordinate of
    |dg| / (|dy| + |dz|). Warns with NonLipschitzWarning when one refinement
    step grows the estimate by more than a factor 1.5.
    """
    domain = domain or ValidationDomain()
    coarse = _lipschitz_on_grid(expr, domain, refine=1)
    if not check_refinement:
        return coarse
    fine = _lipschitz_on_grid(expr, domain, refine=2)
    if coarse > 0 and fine / coarse > 1.5:
        warnings.warn(
            f"Lipschitz estimate grows under refinement ({coarse:.3g} -> {fine:.3g}); "
            "the generator may not be globally Lipschitz",
            NonLipschitzWarning, stacklevel=2)
    return fine


def classify_generator(expr, domain=None):
    """Structure flags from exact evaluation on the validation grid."""
    domain = domain or ValidationDomain()
    t, y, zs = domain.axes(expr.dim_z)
    vals = _grid_eval(expr, t, y, zs)
    var_y = float((vals.max(axis=1) - vals.min(axis=1)).max())
    z_axes = tuple(range(2, vals.ndim))
    flat_z = vals.reshape(vals.shape[0], vals.shape[1], -1)
    var_z = float((flat_z.max(axis=2) - flat_z.min(axis=2)).max()) if z_axes else 0.0

    zeros = tuple(0.0 for _ in range(expr.dim_z))
    at_origin = np.abs(dsl.eval_expr(expr.ast, t, 0.0, zeros))
    on_axis = np.abs(dsl.eval_expr(expr.ast, t[:, None], y[None, :], zeros))
    zero_on_y_axis = bool(np.max(on_axis) <= TAU_CLASS)
    return {
        "independent_of_y": var_y <= TAU_CLASS,
        "independent_of_z": var_z <= TAU_CLASS,
        # zero on the whole y-axis implies zero at the origin
        "zero_at_origin": bool(np.max(at_origin) <= TAU_CLASS) or zero_on_y_axis,
        "zero_on_y_axis": zero_on_y_axis,
    }
