"""Deformed-Lindblad dynamics of a disordered hard-core-boson gain-loss chain.

A jump fugacity zeta in [0, 1] reweights quantum-jump trajectories,
interpolating between no-jump non-Hermitian evolution (zeta = 0) and the full
Lindblad master equation (zeta = 1).  The package provides exact
diagonalization of the deformed Liouvillian and its weak-U(1) charge blocks,
complex spacing ratio statistics with Ginibre/Poisson references, RK4
propagation (nonlinear, linear, and jump-number-resolved) with full counting
statistics, MPDO-TEBD dynamics for large chains, and a CSV-emitting
experiment runner.
"""

__version__ = "0.1.0"

from .fock import FockBasis, build_basis, site_operator, assemble_operator
from .model import (
    DisorderRealization,
    ModelParams,
    build_hamiltonian,
    build_jumps,
    build_nonhermitian,
    sample_disorder,
)
from .superop import (
    Superoperator,
    build_zeta_liouvillian,
    charge_sectors,
    devectorize,
    symmetry_residual,
    vectorize,
)
from .spectra import (
    csr_density,
    csr_summary,
    eigenvalues,
    reference_ensemble,
    spacing_ratios,
)
from .dynamics import (
    JumpHierarchy,
    ObservableSeries,
    activity_rate,
    cdw_state,
    counting_stats,
    grand_canonical,
    jump_hierarchy,
    observables,
    propagate_linear,
    propagate_nonlinear,
    steady_state,
    steady_state_eig,
)
from .mpdo import (
    MPDO,
    apply_gate,
    bond_gates,
    canonicalize,
    mpdo_expectation,
    mpdo_trace,
    product_mpdo,
    tebd_run,
    tebd_step,
)
