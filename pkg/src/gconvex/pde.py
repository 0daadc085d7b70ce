"""Finite-difference solver for the g-expectation PDE.

The value function u(t, x) of E^g with Markovian terminal data phi(W_T)
solves the semilinear parabolic terminal-value problem

    u_t + 1/2 u_xx + g(t, u, u_x) = 0,   u(T, .) = phi,

on a driftless unit-volatility Brownian state. The scheme is explicit Euler
in time with central second/first differences in space and asymptotically
affine (zero second difference) boundary extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .errors import (
    DomainTooSmall,
    GrowthBoundViolated,
    InterpolationOutOfRange,
    StabilityViolation,
)
from .functions import ScalarFunction, SymbolicFunction, TabulatedFunction, as_scalar_function

#: stability relation of the explicit scheme: dt <= STABILITY_FACTOR * dx^2
STABILITY_FACTOR = 0.9

#: default time step as a fraction of dx^2; half the stability bound, so the
#: first-order time error stays inside the closed-form tolerances
DEFAULT_DT_SAFETY = 0.45


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform partition of [x_min, x_max] with n points."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("space grid needs at least 2 points")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def points(self):
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n - 1)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [t_start, t_end] with n_steps steps."""

    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("time grid needs at least 1 step")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @property
    def times(self):
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)

    @property
    def dt(self):
        return (self.t_end - self.t_start) / self.n_steps


@dataclass(frozen=True)
class SolverConfig:
    n_x: int = 401
    n_t: int | None = None  # None: auto from the stability relation
    half_width: float | None = None  # None: 6*sqrt(T) + mu_hat*T around center
    center: float = 0.0
    dt_safety: float = DEFAULT_DT_SAFETY
    boundary_probe: bool = True
    probe_tol: float = 1e-4


@dataclass(frozen=True)
class PayoffSpec:
    """Terminal payoff phi of the Brownian state x = W_T with a polynomial
    growth bound |phi(x)| <= C (1 + |x|^m)."""

    phi: ScalarFunction
    growth_bound: tuple[float, int] = None

    def __post_init__(self):
        if self.growth_bound is None:
            object.__setattr__(self, "growth_bound", _fit_growth_bound(self.phi))

    @classmethod
    def from_source(cls, source, growth_bound=None):
        return cls(phi=as_scalar_function(source, var="x"), growth_bound=growth_bound)

    def __call__(self, x):
        return self.phi(x)

    def verify_growth(self, x):
        c, m = self.growth_bound
        vals = np.broadcast_to(np.abs(np.asarray(self.phi(x), dtype=float)), x.shape)
        bound = c * (1.0 + np.abs(x) ** m)
        if np.any(vals > bound):
            j = int(np.argmax(vals - bound))
            raise GrowthBoundViolated(
                f"|phi({x[j]:.4g})| = {vals[j]:.4g} exceeds "
                f"{c:.4g}*(1+|x|^{m}) = {bound[j]:.4g}")


def _fit_growth_bound(phi, x_lim=12.0):
    x = np.linspace(-x_lim, x_lim, 481)
    vals = np.broadcast_to(np.abs(np.asarray(phi(x), dtype=float)), x.shape)
    # estimate the degree from log-log slopes on the outer quarter of the range
    outer = x >= 0.75 * x_lim
    xs, vs = x[outer], np.maximum(vals[outer], 1e-12)
    slopes = np.diff(np.log(vs)) / np.diff(np.log(xs))
    m = int(np.clip(math.ceil(slopes.max() - 1e-9), 0, 8))
    c = float(1.25 * np.max(vals / (1.0 + np.abs(x) ** m)))
    return (max(c, 1e-12), m)


def truncate_payoff(payoff, level, anchor=0.0):
    """Clamp the payoff argument to [anchor - level, anchor + level]."""
    if level <= 0:
        raise ValueError("truncation level must be positive")
    lo, hi = anchor - level, anchor + level
    phi = payoff.phi
    if isinstance(phi, SymbolicFunction):
        clamped = phi.clamp_argument(lo, hi)
    elif isinstance(phi, TabulatedFunction):
        clamped = TabulatedFunction(grid=phi.grid,
                                    values=phi(np.clip(phi.grid, lo, hi)))
    else:
        raise TypeError(f"cannot truncate a {type(phi).__name__}")
    return PayoffSpec(phi=clamped, growth_bound=payoff.growth_bound)


@dataclass(frozen=True)
class SolveResult:
    """Backward solve output: full value surface plus the Z extraction."""

    time: TimeGrid
    space: SpaceGrid
    surface: np.ndarray = field(repr=False)  # (n_steps+1, n_x), ascending t
    z_surface: np.ndarray = field(repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def y0(self):
        return self.value_at(self.time.t_start, self.diagnostics.get("center", 0.0))

    def row_at(self, t):
        """Value row at time t, linearly interpolated between time levels."""
        times = self.time.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise InterpolationOutOfRange(f"t={t} outside [{times[0]}, {times[-1]}]")
        pos = (t - times[0]) / self.time.dt
        i = int(np.clip(np.floor(pos), 0, self.time.n_steps - 1))
        w = pos - i
        return (1.0 - w) * self.surface[i] + w * self.surface[i + 1]

    def value_at(self, t, x):
        row = self.row_at(t)
        xs = self.space.points
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < xs[0] - 1e-12) or np.any(x_arr > xs[-1] + 1e-12):
            raise InterpolationOutOfRange(f"x={x} outside [{xs[0]}, {xs[-1]}]")
        out = np.interp(x_arr, xs, row)
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path):
        """Dump the surface as "t,x,u,z" rows (time-major, 17 significant digits)."""
        xs = self.space.points
        with open(path, "w") as fh:
            fh.write("t,x,u,z\n")
            for i, t in enumerate(self.time.times):
                for j, x in enumerate(xs):
                    fh.write(f"{t:.17g},{x:.17g},"
                             f"{self.surface[i, j]:.17g},{self.z_surface[i, j]:.17g}\n")


def default_space_grid(gen, T, config=SolverConfig()):
    half = config.half_width
    if half is None:
        # Gaussian spread plus maximal drift transport keeps boundary error small
        half = 6.0 * math.sqrt(T) + gen.mu_hat * T
    n_x = config.n_x if config.n_x % 2 == 1 else config.n_x + 1
    return SpaceGrid(config.center - half, config.center + half, n_x)


def _derivatives(v, dx):
    u_xx = np.zeros_like(v)
    u_xx[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx**2
    u_x = np.empty_like(v)
    u_x[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    u_x[0] = (v[1] - v[0]) / dx
    u_x[-1] = (v[-1] - v[-2]) / dx
    return u_xx, u_x


def _sweep(gen, terminal, time, space):
    """March the explicit scheme from t_end down to t_start.

    Returns the full surface, index 0 = t_start, last index = terminal data.
    """
    dt, dx = time.dt, space.dx
    times = time.times
    ast = gen.expr.ast
    surface = np.empty((time.n_steps + 1, space.n))
    surface[-1] = terminal
    v = np.array(terminal, dtype=float)
    for i in range(time.n_steps - 1, -1, -1):
        u_xx, u_x = _derivatives(v, dx)
        gvals = dsl.eval_expr(ast, times[i + 1], v, (u_x,))
        v = v + dt * (0.5 * u_xx + gvals)
        surface[i] = v
    return surface


def _check_stability(time, space):
    if time.dt > STABILITY_FACTOR * space.dx**2 + 1e-15:
        raise StabilityViolation(
            f"dt={time.dt:.3e} exceeds {STABILITY_FACTOR}*dx^2={STABILITY_FACTOR * space.dx**2:.3e}")


def _auto_time_grid(T, space, dt_safety, t_start=0.0):
    dt_target = dt_safety * space.dx**2
    n_steps = max(1, math.ceil((T - t_start) / dt_target))
    return TimeGrid(t_start, T, n_steps)


def solve_pde(gen, payoff, T, space=None, time=None, config=SolverConfig()):
    """Solve the g-expectation PDE for a Markovian terminal payoff.

    Returns a SolveResult whose surface row at t reads off E^g_{t,T}[phi(W_T)]
    as a function of the state x.
    """
    if gen.dim_z != 1:
        raise ValueError("the PDE solver is one-dimensional in z")
    if T <= 0:
        raise ValueError("horizon T must be positive")
    space = space or default_space_grid(gen, T, config)
    if time is None:
        time = (TimeGrid(0.0, T, config.n_t) if config.n_t
                else _auto_time_grid(T, space, config.dt_safety))
    _check_stability(time, space)

    xs = space.points
    payoff.verify_growth(xs)
    terminal = np.asarray(payoff(xs), dtype=float)
    if terminal.shape != xs.shape:
        terminal = np.full(xs.shape, float(terminal))
    surface = _sweep(gen, terminal, time, space)
    if not np.all(np.isfinite(surface)):
        raise StabilityViolation("solve produced non-finite values")

    if config.boundary_probe:
        scale = max(1.0, float(np.max(np.abs(terminal))))
        bumped = terminal.copy()
        bumped[0] += scale
        bumped[-1] += scale
        probe = _sweep(gen, bumped, time, space)
        center_idx = int(np.argmin(np.abs(xs - config.center)))
        leak = abs(probe[0, center_idx] - surface[0, center_idx])
        if leak > config.probe_tol * scale:
            raise DomainTooSmall(
                f"boundary sensitivity {leak:.3e} exceeds "
                f"{config.probe_tol:.1e} * {scale:.3g}; widen the domain")

    z_surface = np.empty_like(surface)
    for i in range(surface.shape[0]):
        _, u_x = _derivatives(surface[i], space.dx)
        z_surface[i] = u_x
    diagnostics = {
        "scheme": "explicit-euler/central",
        "dt": time.dt, "dx": space.dx,
        "boundary_mode": "asymptotically-affine",
        "center": config.center,
        "n_steps": time.n_steps, "n_x": space.n,
    }
    return SolveResult(time=time, space=space, surface=surface,
                       z_surface=z_surface, diagnostics=diagnostics)


def solve_terminal_values(gen, values, t_start, t_end, space, dt_safety=DEFAULT_DT_SAFETY):
    """Backward solve with raw terminal values on an existing grid.

    Used for chained/re-solve steps where the terminal data is a previously
    computed surface row rather than a payoff expression.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (space.n,):
        raise ValueError(f"terminal values must match the grid ({space.n} points)")
    time = _auto_time_grid(t_end, space, dt_safety, t_start=t_start)
    _check_stability(time, space)
    surface = _sweep(gen, values, time, space)
    if not np.all(np.isfinite(surface)):
        raise StabilityViolation("solve produced non-finite values")
    z_surface = np.empty_like(surface)
    for i in range(surface.shape[0]):
        _, u_x = _derivatives(surface[i], space.dx)
        z_surface[i] = u_x
    return SolveResult(time=time, space=space, surface=surface,
                       z_surface=z_surface,
                       diagnostics={"center": 0.5 * (space.x_min + space.x_max),
                                    "dt": time.dt, "dx": space.dx})


def g_expectation(gen, payoff, t, T, x=0.0, config=SolverConfig()):
    """E^g_{t,T}[phi(W_T)] evaluated at state x."""
    if not 0 <= t <= T:
        raise ValueError(f"need 0 <= t <= T, got t={t}, T={T}")
    if t == T:  # terminal consistency holds exactly, no interpolation
        return float(payoff(x))
    result = solve_pde(gen, payoff, T, config=config)
    return result.value_at(t, x)


@dataclass(frozen=True)
class ChainedSolve:
    """Piecewise solve through intermediate times, each segment re-using the
    next segment's surface as terminal data."""

    segments: tuple  # SolveResult per [t_k, t_{k+1}], ascending

    def value_at(self, t, x):
        for seg in self.segments:
            if seg.time.t_start - 1e-12 <= t <= seg.time.t_end + 1e-12:
                return seg.value_at(t, x)
        raise InterpolationOutOfRange(f"t={t} outside the chained range")

    @property
    def y0(self):
        return self.segments[0].y0


def conditional_g_expectation_path(gen, payoff, T, intermediate_times,
                                   space=None, config=SolverConfig()):
    """Chain solves through the given intermediate times (tower property).

    Segment k uses the surface of segment k+1 at its start time as terminal
    data; all segments share one spatial grid, so no resampling error enters.
    """
    times = sorted(set(float(t) for t in intermediate_times))
    if any(t <= 0 or t >= T for t in times):
        raise ValueError("intermediate times must lie strictly inside (0, T)")
    space = space or default_space_grid(gen, T, config)
    knots = [0.0] + times + [T]
    xs = space.points
    payoff.verify_growth(xs)
    terminal = np.asarray(payoff(xs), dtype=float)
    if terminal.shape != xs.shape:
        terminal = np.full(xs.shape, float(terminal))

    segments = []
    for t_lo, t_hi in zip(knots[-2::-1], knots[:0:-1]):
        time = _auto_time_grid(t_hi, space, config.dt_safety, t_start=t_lo)
        _check_stability(time, space)
        surface = _sweep(gen, terminal, time, space)
        z_surface = np.empty_like(surface)
        for i in range(surface.shape[0]):
            _, u_x = _derivatives(surface[i], space.dx)
            z_surface[i] = u_x
        seg = SolveResult(time=time, space=space, surface=surface,
                          z_surface=z_surface,
                          diagnostics={"center": config.center, "dt": time.dt,
                                       "dx": space.dx})
        segments.append(seg)
        terminal = surface[0]
    return ChainedSolve(segments=tuple(reversed(segments)))
