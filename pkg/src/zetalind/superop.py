"""Vectorization and the jump-fugacity-deformed Liouvillian.

Column-stacking convention throughout: vec(rho)[i + D*j] = rho[i, j], so
A rho B maps to (B^T kron A) vec(rho).  The deformed Liouvillian is

    L_zeta = L_0 + zeta * L_J,
    L_0  = -i[H, .] - (1/2) sum_a {O_a^+ O_a, .}    (as a commutator-free sum)
    L_J  = sum_a O_a . O_a^+,

which interpolates between pure non-Hermitian no-jump evolution (zeta = 0)
and the trace-preserving Lindblad generator (zeta = 1).  The nonlinear trace
term of the deformed master equation is NOT part of this matrix; it lives in
the propagators (see dynamics).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis, _popcount


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack a D x D matrix into a length-D^2 vector."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def devectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of vectorize."""
    v = np.asarray(v)
    D = int(round(np.sqrt(v.size)))
    if D * D != v.size:
        raise ValueError(f"vector length {v.size} is not a perfect square")
    return v.reshape((D, D), order="F")


@dataclass
class Superoperator:
    """Deformed Liouvillian with the jump part kept separate.

    L0 and LJ are assembled once; matrices at any other fugacity are formed
    by linearity via :meth:`at_zeta` without re-assembly.
    """

    D: int
    zeta: float
    L0: sp.csr_matrix
    LJ: sp.csr_matrix
    _matrix: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.D * self.D

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            m = (self.L0 + self.zeta * self.LJ).tocsr()
            m.sum_duplicates()
            self._matrix = m
        return self._matrix

    def at_zeta(self, zeta: float) -> "Superoperator":
        return Superoperator(D=self.D, zeta=zeta, L0=self.L0, LJ=self.LJ)


def build_zeta_liouvillian(
    H: sp.spmatrix,
    jumps: list,
    zeta: float,
    allow_extrapolation: bool = False,
) -> Superoperator:
    """Assemble L_zeta in the column-stacking convention."""
    H = sp.csr_matrix(H)
    D = H.shape[0]
    if H.shape != (D, D):
        raise ValueError("H must be square")
    for O in jumps:
        if O.shape != (D, D):
            raise ValueError(f"jump operator shape {O.shape} != {(D, D)}")
    if not 0.0 <= zeta <= 1.0:
        if not allow_extrapolation:
            raise ValueError(f"zeta={zeta} outside [0, 1]")
        warnings.warn(f"extrapolating the deformed Liouvillian to zeta={zeta}")
    I = sp.identity(D, dtype=np.complex128, format="csr")
    L0 = -1j * (sp.kron(I, H, format="csr") - sp.kron(H.T, I, format="csr"))
    LJ = sp.csr_matrix((D * D, D * D), dtype=np.complex128)
    for O in jumps:
        O = sp.csr_matrix(O, dtype=np.complex128)
        OdO = (O.conj().T @ O).tocsr()
        LJ = LJ + sp.kron(O.conj(), O, format="csr")
        L0 = L0 - 0.5 * (
            sp.kron(I, OdO, format="csr") + sp.kron(OdO.T, I, format="csr")
        )
    L0 = L0.tocsr()
    L0.sum_duplicates()
    LJ = LJ.tocsr()
    LJ.sum_duplicates()
    return Superoperator(D=D, zeta=zeta, L0=L0, LJ=LJ)


@dataclass
class SectorBlock:
    """One weak-U(1) charge block: q = (ket particle number) - (bra)."""

    q: int
    indices: np.ndarray
    block: np.ndarray | sp.csr_matrix


def sector_charges(basis: FockBasis) -> np.ndarray:
    """Charge q of every vectorized index, in vec ordering."""
    pops = _popcount(basis.states, basis.L)
    grid = np.subtract.outer(pops, pops)          # grid[i, j] = N_ket - N_bra
    return grid.reshape(-1, order="F")


def sector_indices(basis: FockBasis, q: int) -> np.ndarray:
    """Vectorized positions belonging to charge sector q."""
    return np.nonzero(sector_charges(basis) == q)[0]


def charge_sectors(
    sup: Superoperator,
    basis: FockBasis,
    qs=None,
    dense: bool = True,
) -> list[SectorBlock]:
    """Partition L_zeta into its weak-U(1) charge blocks.

    ``qs`` restricts to the listed charges (default: all -L..L); ``dense``
    controls the block storage.  Index lists come from occupation bit counts,
    so the partition is exact.
    """
    if basis.restricted:
        raise ValueError("charge sectors are defined on the unrestricted basis")
    if basis.dim != sup.D:
        raise ValueError("basis dimension does not match the superoperator")
    charges = sector_charges(basis)
    if qs is None:
        qs = range(-basis.L, basis.L + 1)
    mat = sup.matrix
    blocks = []
    for q in qs:
        idx = np.nonzero(charges == q)[0]
        if len(idx) == 0:
            continue
        sub = mat[idx][:, idx]
        blocks.append(SectorBlock(q=q, indices=idx, block=sub.toarray() if dense else sub))
    return blocks


def number_superops(N: sp.spmatrix) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(N_minus, N_plus) acting as [N, .] and {N, .} on vectorized matrices."""
    N = sp.csr_matrix(N)
    I = sp.identity(N.shape[0], dtype=np.complex128, format="csr")
    left = sp.kron(I, N, format="csr")
    right = sp.kron(N.T, I, format="csr")
    return (left - right).tocsr(), (left + right).tocsr()


def symmetry_residual(
    sup: Superoperator,
    N: sp.spmatrix,
    which: str = "N_minus",
    max_dim: int = 4096,
) -> float:
    """Max-norm of [L_zeta, N_pm], with N the particle-number matrix."""
    if sup.dim > max_dim:
        raise ValueError(
            f"superoperator dim {sup.dim} exceeds commutator budget {max_dim}"
        )
    minus, plus = number_superops(N)
    gen = {"N_minus": minus, "N_plus": plus}[which]
    comm = (sup.matrix @ gen - gen @ sup.matrix).tocsr()
    comm.eliminate_zeros()
    if comm.nnz == 0:
        return 0.0
    return float(np.abs(comm.data).max())
