"""The standard desk-scale scenario catalog and candidate batteries.

Closed-form values, where present, are the exact solutions of the associated
PDE (verified by substitution in the test oracles): c*exp(a(T-t)) for g = ay
with constant terminal data, exp(a(T-t))(x + b(T-t)) for g = ay + bz with
linear terminal data, and s*x + c + |s|(T-t) for g = |z|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .functions import SymbolicFunction
from .generators import GeneratorSpec
from .jensen import Scenario
from .pde import PayoffSpec, SolverConfig


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    gen: str
    payoff: str
    h: str
    T: float
    closed_form: float | None  # E^g_{0,T} at the origin, when known exactly
    jensen: str  # expected verify_jensen verdict: "holds" | "fails"


CATALOG = (
    CatalogEntry("classical-linear", "0", "x", "y*y", 1.0, 0.0, "holds"),
    CatalogEntry("classical-square", "0", "x*x", "y*y", 1.0, 1.0, "holds"),
    CatalogEntry("interest-const", "y", "1", "y*y", 1.0, math.e, "fails"),
    CatalogEntry("abs-linear", "abs(z1)", "x", "y*y", 1.0, 1.0, "holds"),
    CatalogEntry("abs-neg", "abs(z1)", "-x", "y*y", 1.0, 1.0, "holds"),
    CatalogEntry("drifted", "0.5*y + 2*z1", "x", "y*y", 1.0,
                 3.2974425414002564, "fails"),
    CatalogEntry("girsanov", "2*z1", "x*x", "2*y + 3", 1.0, 5.0, "holds"),
    CatalogEntry("discount", "-y", "1", "y*y", 1.0,
                 0.36787944117144233, "holds"),
    CatalogEntry("abs-square", "abs(z1)", "x*x", "y*y", 1.0, None, "holds"),
    CatalogEntry("identity-affine", "abs(z1)", "x", "y", 1.0, 1.0, "holds"),
)

#: six convex candidates exercised whenever the all-convex predictor is true;
#: the last two are tabulated before checking (non-smooth route)
CONVEX_BATTERY_SMOOTH = ("y*y", "(y - 1)*(y - 1)", "y*y*y*y", "2*y + 3")
CONVEX_BATTERY_TABULATED = ("abs(y)", "max(y, 0)")

PREDICTOR_TRUE = ("abs(z1)", "2*z1")
PREDICTOR_FALSE = ("y", "-abs(z1)")

AXIOM_GENERATORS = ("0", "y", "abs(z1)", "0.5*y + 2*z1")


@lru_cache(maxsize=None)
def generator(source, dim_z=1):
    """Cached GeneratorSpec construction (Lipschitz scan is the slow part)."""
    return GeneratorSpec.from_source(source, dim_z=dim_z)


def build_scenario(entry, config=None):
    return Scenario(
        name=entry.name,
        gen=generator(entry.gen),
        payoff=PayoffSpec.from_source(entry.payoff),
        h=SymbolicFunction.from_source(entry.h),
        T=entry.T,
        eval_times=(0.0, entry.T / 2),
        config=config or SolverConfig(),
    )


def entry_by_name(name):
    for entry in CATALOG:
        if entry.name == name:
            return entry
    raise KeyError(f"no catalog entry named {name!r}")
