"""Built-in problems shared by tests, the verify suite, and the CLI.

Two fixtures on the two-point space {0, 1} in one dimension with squared
distance cost: ``sym2`` puts weight (1/2, 1/2) on both sides, which makes
every closed form elementary and the first-order variance vanish; ``asym23``
keeps the uniform source but tilts the target to (0.3, 0.7), which turns
the first-order variance on.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from .measures import CostSpec, DiscreteMeasure, cost_matrix, make_discrete_measure
from .operators import BridgeOperators, build_operators
from .sinkhorn import GibbsKernel, SinkhornReport, solve_bridge

_FIXTURES = {
    "sym2": {
        "atoms0": [0.0, 1.0],
        "weights0": [0.5, 0.5],
        "atoms1": [0.0, 1.0],
        "weights1": [0.5, 0.5],
    },
    "asym23": {
        "atoms0": [0.0, 1.0],
        "weights0": [0.5, 0.5],
        "atoms1": [0.0, 1.0],
        "weights1": [0.3, 0.7],
    },
}


def fixture_names() -> list[str]:
    return sorted(_FIXTURES)


@dataclass(frozen=True)
class Problem:
    """A fully solved instance: measures, cost, kernel, and operators."""

    name: str
    rho0: DiscreteMeasure
    rho1: DiscreteMeasure
    cost: np.ndarray
    eps: float
    kernel: GibbsKernel
    ops: BridgeOperators
    report: SinkhornReport


def build_problem(
    name_or_measures: Union[str, tuple],
    eps: float = 1.0,
    tol: float = 1e-12,
    cost_spec: CostSpec = CostSpec(kind="squared-euclidean"),
) -> Problem:
    """Solve a fixture (by name) or an explicit (rho0, rho1) pair."""
    if isinstance(name_or_measures, str):
        try:
            raw = _FIXTURES[name_or_measures]
        except KeyError:
            raise ValueError(
                f"unknown fixture {name_or_measures!r}; choose from {fixture_names()}"
            )
        rho0 = make_discrete_measure(raw["atoms0"], raw["weights0"])
        rho1 = make_discrete_measure(raw["atoms1"], raw["weights1"])
        name = name_or_measures
    else:
        rho0, rho1 = name_or_measures
        name = "custom"
    cost = cost_matrix(cost_spec, rho0, rho1)
    kernel, report = solve_bridge(rho0, rho1, cost, eps, tol=tol)
    ops = build_operators(kernel)
    return Problem(
        name=name, rho0=rho0, rho1=rho1, cost=cost, eps=eps,
        kernel=kernel, ops=ops, report=report,
    )


def resolve_eta(choice, cost: np.ndarray) -> np.ndarray:
    """Turn an eta selector ("cost" or an explicit matrix) into a grid array."""
    if isinstance(choice, str):
        if choice != "cost":
            raise ValueError(f"eta selector must be 'cost' or a matrix, not {choice!r}")
        return cost.copy()
    eta = np.asarray(choice, dtype=float)
    if eta.shape != cost.shape:
        raise ValueError(f"eta shape {eta.shape} does not match the grid {cost.shape}")
    if not np.all(np.isfinite(eta)):
        raise ValueError("eta entries must be finite")
    return eta
