"""Candidate functions h(y): symbolic with exact derivatives, or tabulated."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import dsl
from .errors import DerivativeUnavailable, InterpolationOutOfRange


class ScalarFunction:
    """Common interface of symbolic and tabulated candidates."""

    smoothness = "continuous"
    is_tabulated = False

    def __call__(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class SymbolicFunction(ScalarFunction):
    """Expression over a single variable with exact symbolic derivatives."""

    ast: object
    var: str = "y"

    @classmethod
    def from_source(cls, source, var="y"):
        return cls(ast=dsl.parse_scalar(source, var), var=var)

    @property
    def source(self):
        return dsl.pretty_print(self.ast)

    @property
    def smoothness(self):
        return "continuous" if dsl.contains_kinked_op(self.ast) else "C2"

    @cached_property
    def _d1(self):
        return dsl.differentiate(self.ast, self.var)

    @cached_property
    def _d2(self):
        return dsl.differentiate(self._d1, self.var)

    def __call__(self, x):
        return dsl.eval_scalar(self.ast, x)

    def derivative(self, x):
        return dsl.eval_scalar(self._d1, x)

    def second_derivative(self, x):
        return dsl.eval_scalar(self._d2, x)

    def compose(self, inner):
        """Symbolic h(inner(.)); the result lives in the inner variable."""
        if not isinstance(inner, SymbolicFunction):
            raise TypeError("compose requires a symbolic inner function")
        return SymbolicFunction(ast=dsl.substitute(self.ast, self.var, inner.ast),
                                var=inner.var)

    def clamp_argument(self, lo, hi):
        """h(min(max(x, lo), hi)) as a new symbolic function."""
        clamped = dsl.Min(dsl.Max(dsl.Var(self.var), dsl.Num(float(lo))),
                          dsl.Num(float(hi)))
        return SymbolicFunction(ast=dsl.substitute(self.ast, self.var, clamped),
                                var=self.var)

    def tabulate(self, grid):
        grid = np.asarray(grid, dtype=float)
        return TabulatedFunction(grid=grid, values=np.asarray(self(grid), dtype=float))


@dataclass(frozen=True)
class TabulatedFunction(ScalarFunction):
    """Values on a uniform strictly increasing grid, linearly interpolated.

    Evaluation outside the grid continues the edge slopes (affine
    extrapolation), which is the natural extension for the convex
    candidates handled here.
    """

    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    is_tabulated = True
    smoothness = "continuous"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 3:
            raise ValueError("tabulation grid needs at least 3 points")
        if values.shape != grid.shape:
            raise ValueError("grid and values must have matching shapes")
        steps = np.diff(grid)
        if not np.all(steps > 0):
            raise ValueError("tabulation grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("tabulation grid must be uniform")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, func, grid):
        grid = np.asarray(grid, dtype=float)
        return cls(grid=grid, values=np.asarray([func(x) for x in grid], dtype=float)
                   if not _vectorizable(func, grid) else np.asarray(func(grid), dtype=float))

    @property
    def spacing(self):
        return float(self.grid[1] - self.grid[0])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        g, v = self.grid, self.values
        inner = np.interp(x, g, v)
        lo_slope = (v[1] - v[0]) / (g[1] - g[0])
        hi_slope = (v[-1] - v[-2]) / (g[-1] - g[-2])
        out = np.where(x < g[0], v[0] + lo_slope * (x - g[0]), inner)
        out = np.where(x > g[-1], v[-1] + hi_slope * (x - g[-1]), out)
        return out if out.ndim else float(out)

    def left_slopes(self):
        """(h_j - h_{j-1}) / dy at interior points j = 1..n-2."""
        return (self.values[1:-1] - self.values[:-2]) / self.spacing

    def right_slopes(self):
        return (self.values[2:] - self.values[1:-1]) / self.spacing

    def second_quotients(self):
        """Central second difference quotients at interior points."""
        v = self.values
        return (v[2:] - 2 * v[1:-1] + v[:-2]) / self.spacing**2

    def kink_mask(self, tau_kink=None):
        """Interior points where left/right slopes disagree beyond tau_kink."""
        if tau_kink is None:
            tau_kink = 100.0 * self.spacing
        return np.abs(self.right_slopes() - self.left_slopes()) > tau_kink

    def derivative(self, x):
        """Central difference quotient; refuses to answer at kinks."""
        j = int(np.argmin(np.abs(self.grid - x)))
        if j == 0 or j == len(self.grid) - 1:
            raise DerivativeUnavailable(f"{x} is at the table edge")
        if self.kink_mask()[j - 1]:
            raise DerivativeUnavailable(f"tabulated function has a kink near {x}")
        return float((self.values[j + 1] - self.values[j - 1]) / (2 * self.spacing))

    def restrict(self, lo, hi):
        sel = (self.grid >= lo - 1e-12) & (self.grid <= hi + 1e-12)
        if sel.sum() < 3:
            raise InterpolationOutOfRange(f"[{lo}, {hi}] leaves under 3 grid points")
        return TabulatedFunction(grid=self.grid[sel], values=self.values[sel])


@dataclass(frozen=True)
class ComposedFunction(ScalarFunction):
    """Evaluate-only composition outer(inner(.)); used for transformed
    payoffs where one side is tabulated."""

    outer: ScalarFunction
    inner: ScalarFunction

    smoothness = "continuous"

    def __call__(self, x):
        return self.outer(self.inner(x))


def compose(outer, inner):
    """outer(inner(.)): symbolic when both sides are, else evaluate-only."""
    if isinstance(outer, SymbolicFunction) and isinstance(inner, SymbolicFunction):
        return outer.compose(inner)
    return ComposedFunction(outer=outer, inner=inner)


def _vectorizable(func, grid):
    try:
        probe = func(grid[:2])
    except Exception:
        return False
    return np.shape(probe) == grid[:2].shape


def as_scalar_function(obj, var="y"):
    """Coerce a source string / ndarray pair / ScalarFunction."""
    if isinstance(obj, ScalarFunction):
        return obj
    if isinstance(obj, str):
        return SymbolicFunction.from_source(obj, var=var)
    raise TypeError(f"cannot interpret {obj!r} as a scalar function")


def identity(var="y"):
    return SymbolicFunction(ast=dsl.Var(var), var=var)
