"""foxli: non-Hermitean resonator modes and their quantum bookkeeping.

Computes Fox-Li eigenmodes of unstable optical resonators as matrix-free
eigenpairs of the paraxial round-trip operator, the biorthogonal overlap
algebra with its Petermann excess factors, brute-force Fock-space checks
of the mode operator commutation rules, and Petermann-enhanced
spontaneous decay of a two-level atom.
"""

from . import biortho, crossregion, decay, fields, fock, integrate, modes, optics
from .biortho import (
    ExternalMode,
    OverlapMatrices,
    SurfaceCouplings,
    completeness_residual,
    gauge_correction,
    hermite_gaussian_family,
    interrelation_residuals,
    magnetic_energy_matrix,
    overlap_matrices,
    petermann_factors,
    surface_integrals,
)
from .crossregion import CrossRegionToy, cross_region_check, make_narrowband_toy
from .decay import (
    CouplingSet,
    DecayResult,
    TwoLevelAtom,
    coupling_constants,
    evolve_amplitudes,
    fit_decay_rate,
    kernel_laplace,
    markov_rate,
    memory_kernel,
    synthetic_flat_comb,
)
from .fields import (
    ComplexField,
    TransverseGrid,
    hermite_gaussian,
    inner_product,
    norm,
    normalized,
    read_field,
    write_field,
)
from .fock import (
    FockRep,
    NhmOperatorSet,
    build_fock,
    build_hamiltonians,
    build_nhm_ops,
    check_commutators,
    check_eigenstates,
    field_commutator_check,
)
from .modes import (
    ModeBasis,
    NhmMode,
    assign_labels,
    biorthonormalize,
    load_basis,
    save_basis,
    solve_modes,
)
from .optics import (
    MirrorSpec,
    ResonatorSpec,
    RoundTripOperator,
    apply_mirror,
    closed_stable_strip,
    confocal_unstable_strip,
    dense_kernel,
    export_dense_kernel,
    fresnel_propagate,
    round_trip,
)
from .pipeline import RunReport, export_results, run_pipeline
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"
