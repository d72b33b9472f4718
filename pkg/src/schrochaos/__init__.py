"""Exact entropic-transport statistics on finite state spaces.

The package solves the static entropic coupling between two finitely
supported measures, evaluates the induced permutation statistic exactly on
samples (by enumeration or by matrix permanents), derives the chaos
expansion of the statistic from the coupling's Markov operators, and runs
seeded Monte Carlo experiments against the resulting limit laws.
"""

__version__ = "0.1.0"

from .chaos import (
    FirstOrderChaos,
    SecondOrderChaos,
    first_chaos_value,
    first_order_kernels,
    gamma_coefficients,
    second_chaos_value,
    second_order_kernels,
    simulate_second_order_limit,
)
from .errors import SchroChaosError
from .estimator import (
    BridgeEstimate,
    likelihood_ratio,
    permanent,
    q_star,
    t_n_brute,
    t_n_permanent,
    t_n_value,
)
from .fixtures import Problem, build_problem, fixture_names, resolve_eta
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    ks_distance,
    ks_two_sample,
    run_experiment,
    run_identity_suite,
)
from .measures import (
    CostSpec,
    DiscreteMeasure,
    SampleBatch,
    cost_matrix,
    make_discrete_measure,
    sample_bridge,
    sample_product,
    stream,
)
from .operators import BridgeOperators, build_operators
from .sinkhorn import GibbsKernel, SinkhornReport, solve_bridge

__all__ = [
    "__version__",
    "BridgeEstimate",
    "BridgeOperators",
    "CostSpec",
    "DiscreteMeasure",
    "ExperimentConfig",
    "ExperimentResult",
    "FirstOrderChaos",
    "GibbsKernel",
    "Problem",
    "SampleBatch",
    "SchroChaosError",
    "SecondOrderChaos",
    "SinkhornReport",
    "build_operators",
    "build_problem",
    "cost_matrix",
    "first_chaos_value",
    "first_order_kernels",
    "fixture_names",
    "gamma_coefficients",
    "ks_distance",
    "ks_two_sample",
    "likelihood_ratio",
    "make_discrete_measure",
    "permanent",
    "q_star",
    "resolve_eta",
    "run_experiment",
    "run_identity_suite",
    "sample_bridge",
    "sample_product",
    "second_chaos_value",
    "second_order_kernels",
    "simulate_second_order_limit",
    "solve_bridge",
    "stream",
    "t_n_brute",
    "t_n_permanent",
    "t_n_value",
]
