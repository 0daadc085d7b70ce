"""Least-squares Monte Carlo solver for the scalar BSDE.

Backward induction on simulated Brownian paths,

    Y_i = E[Y_{i+1} | W_i] + g(t_i, Y_i, Z_i) dt,
    Z_i = E[Y_{i+1} dW_i | W_i] / dt,

with conditional expectations by polynomial least-squares regression on W_i
and the implicit Y_i resolved by a fixed number of Picard iterations. The
counter-based Philox generator keyed by the seed makes runs bit-reproducible.

The standard error is a batch bootstrap: the paths are split into disjoint
batches, the full induction is re-run per batch, and the batch estimates are
resampled. This prices in regression noise, which dominates for strongly
z-coupled drivers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsl
from .errors import PicardDivergence, RegressionSingular

_COND_LIMIT = 1e12
_RIDGE = 1e-10
_PICARD_ITERS = 5
_BOOTSTRAP_BATCHES = 10
_BOOTSTRAP_RESAMPLES = 500


@dataclass(frozen=True)
class McResult:
    y0: float
    stderr: float
    diagnostics: dict

    def __iter__(self):  # allow y0, stderr = solve_mc(...)
        return iter((self.y0, self.stderr))


def _backward_induction(ast, terminal, w, dw, times, dt, basis_degree,
                        check_condition=False):
    """Run the regression scheme on the given path block; returns (y0, max_cond)."""
    steps = dw.shape[1]
    y_next = terminal
    max_cond = 0.0
    eye = np.eye(basis_degree + 1)
    for i in range(steps - 1, 0, -1):
        x = w[:, i]
        dwi = dw[:, i]
        basis = np.polynomial.polynomial.polyvander(x, basis_degree)
        gram = basis.T @ basis + _RIDGE * eye
        if check_condition:
            cond = float(np.linalg.cond(gram))
            max_cond = max(max_cond, cond)
            if cond > _COND_LIMIT:
                raise RegressionSingular(
                    f"normal matrix condition {cond:.3g} > {_COND_LIMIT:.0e} at "
                    f"step {i}; raise paths or lower basis_degree")
        coef_y = np.linalg.solve(gram, basis.T @ y_next)
        cond_y = basis @ coef_y
        # centering Y against its conditional mean is an exact control
        # variate for the Z target: E[E[Y|W] dW | W] = 0
        coef_z = np.linalg.solve(gram, basis.T @ ((y_next - cond_y) * dwi))
        z = (basis @ coef_z) / dt
        y = cond_y
        for _ in range(_PICARD_ITERS):
            y = cond_y + dsl.eval_expr(ast, times[i], y, (z,)) * dt
        y_next = y

    # W_0 = 0 is deterministic: conditional expectations are plain means
    mean_v = float(np.mean(y_next))
    z0 = float(np.mean((y_next - mean_v) * dw[:, 0]) / dt)
    y0 = mean_v
    for _ in range(_PICARD_ITERS):
        y0 = mean_v + float(dsl.eval_expr(ast, 0.0, y0, (z0,))) * dt
    return y0, max_cond


def solve_mc(gen, payoff, T, paths=20000, steps=160, basis_degree=4, seed=42):
    """Monte Carlo estimate of Y_0 = E^g_{0,T}[phi(W_T)] with bootstrap stderr."""
    if gen.dim_z != 1:
        raise ValueError("the MC solver is one-dimensional in z")
    if paths < 1000:
        raise ValueError(f"paths must be >= 1000, got {paths}")
    if steps < 10:
        raise ValueError(f"steps must be >= 10, got {steps}")
    if basis_degree < 2:
        raise ValueError(f"basis_degree must be >= 2, got {basis_degree}")
    dt = T / steps
    if gen.mu_hat * dt >= 1.0:
        raise PicardDivergence(
            f"mu_hat*dt = {gen.mu_hat * dt:.3g} >= 1; increase steps")

    rng = np.random.Generator(np.random.Philox(key=seed))
    dw = rng.standard_normal((paths, steps)) * np.sqrt(dt)
    w = np.hstack([np.zeros((paths, 1)), np.cumsum(dw, axis=1)])
    times = np.linspace(0.0, T, steps + 1)
    ast = gen.expr.ast
    terminal = np.broadcast_to(
        np.asarray(payoff(w[:, -1]), dtype=float), (paths,)).astype(float)

    y0, max_cond = _backward_induction(ast, terminal, w, dw, times, dt,
                                       basis_degree, check_condition=True)

    # disjoint path batches re-run end to end, then bootstrapped
    n_batch = _BOOTSTRAP_BATCHES
    block = paths // n_batch
    batch_y0 = np.empty(n_batch)
    for k in range(n_batch):
        sl = slice(k * block, (k + 1) * block)
        batch_y0[k], _ = _backward_induction(
            ast, terminal[sl], w[sl], dw[sl], times, dt, basis_degree)
    boot_rng = np.random.Generator(np.random.Philox(key=seed).jumped(1))
    idx = boot_rng.integers(0, n_batch, size=(_BOOTSTRAP_RESAMPLES, n_batch))
    boot_means = batch_y0[idx].mean(axis=1)
    stderr = float(np.std(boot_means, ddof=1))

    diagnostics = {
        "paths": paths, "steps": steps, "basis_degree": basis_degree,
        "seed": seed, "picard_iters": _PICARD_ITERS,
        "max_condition": max_cond, "batches": n_batch,
        "batch_spread": float(np.std(batch_y0, ddof=1)),
    }
    return McResult(y0=y0, stderr=stderr, diagnostics=diagnostics)
