"""Coalescing random walks, voter models and path-space metrics."""
from .errors import BudgetError, GuardError, LawError
from .increments import (
    IncrementDistribution, LadderVariable, format_law, ladder_distribution, ladder_exact, make_increment,
    overshoot_limit, parse_law,
)
from .maps import (
    EquivalenceState, IndependentFamily, apply_f, apply_g, fg_distance, gaussian_family, lattice_family,
    sample_coalescing_bm,
)
from .paths import Path
from .pathspace import (
    CompactPoint, CountingQuery, TightnessProbe, compactify, count_paths, detect_tightness_event, hausdorff,
    path_distance, pointset_distance, rho,
)
from .voter import (
    CoupledRealization, InterfaceTrace, VoterState, boundary_paths, coupled_realization, dual_check,
    heaviside, interface_trace, step_voter,
)
from .walks import (
    CoalescingSystem, ScaledPathSet, SpaceTimeWindow, density, enumerate_exact, paths_of, rescale,
    simulate_continuous, simulate_discrete,
)

__all__ = [
    "BudgetError", "GuardError", "LawError", "IncrementDistribution", "LadderVariable", "format_law",
    "ladder_distribution", "ladder_exact", "make_increment", "overshoot_limit", "parse_law",
    "EquivalenceState", "IndependentFamily", "apply_f", "apply_g", "fg_distance", "gaussian_family",
    "lattice_family", "sample_coalescing_bm", "Path", "CompactPoint", "CountingQuery", "TightnessProbe",
    "compactify", "count_paths", "detect_tightness_event", "hausdorff", "path_distance", "pointset_distance",
    "rho", "CoupledRealization", "InterfaceTrace", "VoterState", "boundary_paths", "coupled_realization",
    "dual_check", "heaviside", "interface_trace", "step_voter", "CoalescingSystem", "ScaledPathSet",
    "SpaceTimeWindow", "density", "enumerate_exact", "paths_of", "rescale", "simulate_continuous",
    "simulate_discrete",
]
