"""Langevin Monte Carlo samplers of strong order 1 and 1.5: LMC, TELMC and the RKLMC family."""

from .potentials import (
    BlrDataset,
    CapabilityError,
    Potential,
    blr_synthesize,
    make_blr,
    make_eight_mode_gmm,
    make_quadratic,
    make_two_mode_gmm,
)
from .rng import IncrementPair, StreamKey, aggregate_coarse_pair, derive_stream, sample_increment_pair
from .schemes import (
    LMC,
    PRESETS,
    RKLMC_2G,
    RKLMC_3G_A,
    RKLMC_3G_B,
    TELMC,
    RkCoefficients,
    Scheme,
    check_order_conditions,
    compute_kappa1,
    one_step,
    rklmc,
    scheme_from_name,
    solve_two_gradient,
    stepsize_bound,
)
from .simulator import DivergenceError, SimulationSpec, run_coupled, run_ensemble, run_trajectory

__version__ = "0.1.0"
