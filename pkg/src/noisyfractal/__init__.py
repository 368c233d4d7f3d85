"""Self-similar fractal construction under stochastic and chaotic noise.

Simulates the noisy diameter recursion of generating sets, computes their
collapse distributions analytically (tri-valued and density noise) and checks
the truncation bounds for tent-map disturbances.
"""

__version__ = "0.1.0"

from .case1 import DistributionTable, classify_regime, distribution_case1, exact_enumeration, le_case1
from .case2 import convolve, distribution_case2, scale_density, tail_mass, truncate_renormalize
from .chaos import (
    check_generalized_conditions,
    compute_l,
    compute_n0,
    run_until_truncation,
    sweep_truncation,
    tent_step,
    verify_truncation_bound,
)
from .density import DensityGrid, build_density, sample_density
from .ifs import (
    Address,
    SystemDescriptor,
    emit_intervals,
    enumerate_addresses,
    moran_dimension,
    noiseless_diameter,
    validate_system,
)
from .noise import (
    DensityNoise,
    TentNoise,
    TriValuedNoise,
    sample_trivalued,
    tent_delta,
    validate_case1,
    validate_tent,
)
from .simulate import AddressPolicy, PathState, monte_carlo_distribution, run_path, run_tree, step
