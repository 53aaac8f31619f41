"""Delivery probabilities for slotted random access with K retransmissions over a noisy channel."""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    DomainError,
    FiniteModel,
    PoissonModel,
    StationaryDistribution,
    v_finite,
    v_finite_history,
    v_finite_incl_excl,
    v_finite_noiseless,
    v_infinite,
    v_infinite_incl_excl,
    w_finite,
    w_infinite,
)
from .exact import exact_v_enumerate  # noqa: E402
from .optimizer import (  # noqa: E402
    RegionGrid,
    RootSolveResult,
    optimal_k_finite,
    optimal_k_infinite,
    region_grid,
    solve_xstar,
)
from .simulator import DeliveryStats, SimConfig, compare_with_analytic, run, run_finite, run_poisson  # noqa: E402

__all__ = [
    "DeliveryStats", "DomainError", "FiniteModel", "PoissonModel", "RegionGrid", "RootSolveResult",
    "SimConfig", "StationaryDistribution", "compare_with_analytic", "exact_v_enumerate",
    "optimal_k_finite", "optimal_k_infinite", "region_grid", "run", "run_finite", "run_poisson",
    "solve_xstar", "v_finite", "v_finite_history", "v_finite_incl_excl", "v_finite_noiseless",
    "v_infinite", "v_infinite_incl_excl", "w_finite", "w_infinite",
]
