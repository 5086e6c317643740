"""Hard-core-boson Fock space and sparse site operators.

Conventions: site labels are 1-based, site i occupies bit i-1 of the state
integer, and basis states are enumerated ascending by that integer.  Hard-core
bosons commute between sites (no Jordan-Wigner strings): b_i^2 = 0,
{b_i, b_i^dagger} = 1 on site, [b_i, b_j^(dagger)] = 0 for i != j.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp


class SectorError(ValueError):
    """Operation would leave the particle-number sector of the basis."""


@dataclass(frozen=True)
class FockBasis:
    """Enumerated occupation basis, optionally restricted to N particles."""

    L: int
    n_particles: int | None
    states: np.ndarray                      # sorted uint64 bit patterns
    _lookup: dict = field(repr=False)       # pattern -> basis index

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def restricted(self) -> bool:
        return self.n_particles is not None

    def index_of(self, pattern: int) -> int:
        return self._lookup[int(pattern)]

    def occupations(self) -> np.ndarray:
        """(dim, L) array of site occupations, site i in column i-1."""
        shifts = np.arange(self.L, dtype=np.uint64)[None, :]
        bits = (self.states[:, None] >> shifts) & np.uint64(1)
        return bits.astype(np.int8)


def build_basis(L: int, n_particles: int | None = None) -> FockBasis:
    """Enumerate the 2^L (or C(L, N)) occupation patterns in ascending order."""
    if not 1 <= L <= 32:
        raise ValueError(f"site count L={L} outside supported range 1..32")
    if n_particles is None:
        states = np.arange(2**L, dtype=np.uint64)
    else:
        if not 0 <= n_particles <= L:
            raise ValueError(f"particle number N={n_particles} not in 0..{L}")
        allstates = np.arange(2**L, dtype=np.uint64)
        pops = _popcount(allstates, L)
        states = allstates[pops == n_particles]
        assert len(states) == comb(L, n_particles)
    lookup = {int(s): k for k, s in enumerate(states)}
    return FockBasis(L=L, n_particles=n_particles, states=states, _lookup=lookup)


def _popcount(states: np.ndarray, L: int) -> np.ndarray:
    bits = (states[:, None] >> np.arange(L, dtype=np.uint64)[None, :]) & np.uint64(1)
    return bits.sum(axis=1).astype(np.int64)


def site_operator(basis: FockBasis, i: int, kind: str) -> sp.csr_matrix:
    """Sparse b_i^dagger ("create"), b_i ("annihilate") or n_i ("number")."""
    if not 1 <= i <= basis.L:
        raise ValueError(f"site label {i} outside 1..{basis.L}")
    bit = np.uint64(1 << (i - 1))
    occ = (basis.states & bit).astype(bool)
    dim = basis.dim
    if kind == "number":
        diag = occ.astype(np.complex128)
        return sp.diags(diag, format="csr", dtype=np.complex128)
    if kind not in ("create", "annihilate"):
        raise ValueError(f"unknown operator kind {kind!r}")
    if basis.restricted:
        raise SectorError(
            "lone create/annihilate leaves a number-restricted basis; "
            "assemble number-conserving products instead"
        )
    if kind == "create":
        cols = np.nonzero(~occ)[0]
        rows = basis.states[cols] | bit          # unrestricted: index == state
    else:
        cols = np.nonzero(occ)[0]
        rows = basis.states[cols] & ~bit
    data = np.ones(len(cols), dtype=np.complex128)
    op = sp.csr_matrix((data, (rows.astype(np.int64), cols)), shape=(dim, dim))
    op.sum_duplicates()
    return op


def assemble_operator(terms, basis: FockBasis) -> sp.csr_matrix:
    """Linear combination of operator products.

    ``terms`` is a list of ``(coefficient, product)`` where ``product`` is a
    sequence of ``(kind, site)`` descriptors, leftmost factor applied last
    (usual operator-composition order).  Products are applied state-by-state
    with bit operations, so number-conserving products work directly inside a
    restricted basis; a product that leaves the basis raises SectorError.
    """
    dim = basis.dim
    rows, cols, vals = [], [], []
    for coeff, product in terms:
        for kind, site in product:
            if not 1 <= site <= basis.L:
                raise ValueError(f"site label {site} outside 1..{basis.L}")
        for col, pattern in enumerate(basis.states):
            pat = int(pattern)
            alive = True
            for kind, site in reversed(product):   # rightmost factor acts first
                bit = 1 << (site - 1)
                if kind == "number":
                    if not pat & bit:
                        alive = False
                        break
                elif kind == "create":
                    if pat & bit:
                        alive = False
                        break
                    pat |= bit
                elif kind == "annihilate":
                    if not pat & bit:
                        alive = False
                        break
                    pat &= ~bit
                else:
                    raise ValueError(f"unknown operator kind {kind!r}")
            if not alive:
                continue
            try:
                row = basis.index_of(pat)
            except KeyError:
                raise SectorError(
                    f"product {product} maps state {int(pattern):b} outside the basis"
                ) from None
            rows.append(row)
            cols.append(col)
            vals.append(coeff)
    op = sp.csr_matrix(
        (np.asarray(vals, dtype=np.complex128), (rows, cols)), shape=(dim, dim)
    )
    op.sum_duplicates()
    op.eliminate_zeros()
    return op
