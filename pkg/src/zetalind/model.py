"""Disordered gain-loss chain: parameters, disorder, Hamiltonian, jumps.

Model: hard-core bosons on an open chain,
    H = sum_i h_i n_i - J sum_i (b_i^+ b_{i+1} + h.c.) + U sum_i n_i n_{i+1},
with onsite jump operators O_i = sqrt(2*gamma) b_i^+ (odd i, gain) and
sqrt(2*gamma) b_i (even i, loss).  Odd/even refers to the 1-based site label.
"""

from dataclasses import dataclass
from math import isfinite

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis, SectorError, site_operator


@dataclass(frozen=True)
class ModelParams:
    """Couplings in units of the hopping J (defaults: U = 2J, gamma = 0.1J)."""

    L: int
    J: float = 1.0
    U: float | None = None
    gamma: float = 0.1
    h: float = 0.0

    def __post_init__(self):
        if self.U is None:
            object.__setattr__(self, "U", 2.0 * self.J)
        if self.L < 1:
            raise ValueError("L must be positive")
        if not self.J >= 0:
            raise ValueError("J must be nonnegative")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.h < 0:
            raise ValueError("disorder bound h must be nonnegative")
        if not isfinite(self.U):
            raise ValueError("U must be finite")


@dataclass(frozen=True)
class DisorderRealization:
    """Onsite fields h_i drawn uniformly from [-h, h], reproducible from seed."""

    fields: np.ndarray
    seed: int


def sample_disorder(params: ModelParams, seed: int) -> DisorderRealization:
    """L independent uniform draws on [-h, h] from a PCG64 stream keyed by seed."""
    rng = np.random.default_rng(seed)
    fields = rng.uniform(-params.h, params.h, size=params.L)
    return DisorderRealization(fields=fields, seed=seed)


def _occupation_matrix(basis: FockBasis) -> np.ndarray:
    return basis.occupations().astype(np.float64)


def build_hamiltonian(
    basis: FockBasis, params: ModelParams, dis: DisorderRealization
) -> sp.csr_matrix:
    """Assemble H on the given basis (works in a fixed-N sector as well)."""
    if basis.L != params.L or len(dis.fields) != params.L:
        raise ValueError("basis/params/disorder site counts disagree")
    occ = _occupation_matrix(basis)                       # (dim, L)
    diag = occ @ dis.fields
    if params.L > 1:
        diag = diag + params.U * np.einsum("ki,ki->k", occ[:, :-1], occ[:, 1:])
    rows = [np.arange(basis.dim)]
    cols = [np.arange(basis.dim)]
    vals = [diag.astype(np.complex128)]
    # hopping: flip pairs (i occupied, i+1 empty) and h.c.
    for i in range(params.L - 1):
        bit_a = np.uint64(1 << i)
        bit_b = np.uint64(1 << (i + 1))
        movable = ((basis.states & bit_a) != 0) & ((basis.states & bit_b) == 0)
        src = np.nonzero(movable)[0]
        if len(src) == 0:
            continue
        dest_patterns = (basis.states[src] & ~bit_a) | bit_b
        dest = np.asarray([basis.index_of(p) for p in dest_patterns])
        rows.append(dest)
        cols.append(src)
        vals.append(np.full(len(src), -params.J, dtype=np.complex128))
        rows.append(src)
        cols.append(dest)
        vals.append(np.full(len(src), -params.J, dtype=np.complex128))
    H = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim),
    )
    H.sum_duplicates()
    H.eliminate_zeros()
    return H


def build_jumps(basis: FockBasis, params: ModelParams) -> list[sp.csr_matrix]:
    """Jump operators O_i: sqrt(2g) b_i^+ on odd sites, sqrt(2g) b_i on even."""
    if basis.restricted:
        raise SectorError("jump operators change N; need an unrestricted basis")
    if basis.L != params.L:
        raise ValueError("basis/params site counts disagree")
    amp = np.sqrt(2.0 * params.gamma)
    jumps = []
    for i in range(1, params.L + 1):
        kind = "create" if i % 2 == 1 else "annihilate"
        jumps.append(amp * site_operator(basis, i, kind))
    return jumps


def staggered_number_op(basis: FockBasis) -> sp.csr_matrix:
    """I = sum_i (-1)^(i+1) n_i, the imbalance numerator operator."""
    occ = _occupation_matrix(basis)
    signs = np.array([1.0 if i % 2 == 1 else -1.0 for i in range(1, basis.L + 1)])
    return sp.diags((occ @ signs).astype(np.complex128), format="csr")


def total_number_op(basis: FockBasis) -> sp.csr_matrix:
    """N = sum_i n_i."""
    occ = _occupation_matrix(basis)
    return sp.diags(occ.sum(axis=1).astype(np.complex128), format="csr")


def bond_current_op(basis: FockBasis, params: ModelParams, i: int) -> sp.csr_matrix:
    """Current across bond (i, i+1): -iJ (b_i^+ b_{i+1} - b_{i+1}^+ b_i)."""
    if not 1 <= i <= basis.L - 1:
        raise ValueError(f"bond label {i} outside 1..{basis.L - 1}")
    from .fock import assemble_operator

    return assemble_operator(
        [
            (-1j * params.J, [("create", i), ("annihilate", i + 1)]),
            (1j * params.J, [("create", i + 1), ("annihilate", i)]),
        ],
        basis,
    )


def build_nonhermitian(
    basis: FockBasis,
    params: ModelParams,
    dis: DisorderRealization,
    include_decay_offset: bool = False,
) -> sp.csr_matrix:
    """Gain-loss non-Hermitian Hamiltonian H - i*gamma*sum_i (-1)^i n_i.

    With ``include_decay_offset`` the constant -i*gamma*(#odd sites) is added,
    which makes the result equal H - (i/2) sum_i O_i^+ O_i exactly.  The
    offset cancels in normalized observables but shifts log-norms.
    """
    H = build_hamiltonian(basis, params, dis)
    occ = _occupation_matrix(basis)
    signs = np.array([(-1.0) ** i for i in range(1, basis.L + 1)])
    diag = -1j * params.gamma * (occ @ signs)
    if include_decay_offset:
        n_odd = (basis.L + 1) // 2
        diag = diag - 1j * params.gamma * n_odd
    return (H + sp.diags(diag.astype(np.complex128), format="csr")).tocsr()
