"""Distributed AIMD multi-resource allocation toolkit.

What lives here: an event-driven simulator of the additive-increase /
multiplicative-decrease allocation protocol with probabilistic back-off, the
equivalent randomized matrix model (event matrices, window lifts, stacked
block updates) together with randomized verification of its norm properties,
the windowed Markov chain of running averages with ergodic and contraction
probes, and a projected-gradient oracle for the underlying social-cost
optimum.

The hot event loop has a compiled backend (``aimdalloc._kernel``) and a
bit-identical pure-Python twin; see :mod:`aimdalloc.backends`.
"""

__version__ = "0.1.0"

from .backends import HAVE_COMPILED, available_backends
from .model import (
    ConfigError,
    SystemConfig,
    validate_config,
    default_initial_allocation,
    CostFunction,
    QuadraticCost,
    ExponentialCost,
    check_gradient,
)
from .engine import (
    EventTrace,
    run_simulation,
    normalization_factors,
    full_backoff_gap,
    drop_probability,
    trace_violations,
)
from .matrices import (
    aimd_matrix,
    full_backoff_matrix,
    pattern_probability,
    sample_pattern,
    lift_window,
    event_block_matrix,
    block_max_l1,
    project_block_zero_sum,
    max_norm_ratio,
    property_suite,
)
from .chain import (
    WindowState,
    init_state,
    step_chain,
    run_chain,
    ergodic_average,
    uniqueness_probe,
    contraction_on_average,
)
from .oracle import (
    OptimalAllocation,
    project_capacity_simplex,
    solve_optimal,
    kkt_residual,
    brute_force_small,
    social_cost,
)
from .config import RunSetup, parse_config, load_config

__all__ = [name for name in dir() if not name.startswith("_")]
