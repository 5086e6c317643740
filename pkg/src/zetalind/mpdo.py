"""Matrix product density operators and TEBD for the deformed Liouvillian.

Site tensors have index layout (left bond, ket, bra, right bond).  The
linear L_zeta is propagated; the nonlinear trace term is handled by
normalizing observables with Tr rho.  Tensors are kept 2-norm normalized
(Tr[rho^+ rho] = 1 in canonical form) with the stripped scale accumulated in
``log_scale``; negativity of the evolved operator is monitored through the
imaginary parts of observables, not corrected.

Bond Liouvillians: the full generator is a sum of two-site terms; onsite
fields and dissipators are split half/half between the two adjacent bonds
(full weight at the chain ends), so the bond terms reconstruct L_zeta
exactly.  A second-order Trotter step applies odd-bond gates for dt/2, even
for dt, odd for dt/2, sweeping left-right / right-left / left-right with the
orthogonality center following the sweep (zip-up).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .dynamics import NumericalError, ObservableSeries
from .model import DisorderRealization, ModelParams
from .superop import build_zeta_liouvillian

_B = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128)   # annihilate
_BDAG = _B.T.conj()
_NUM = _BDAG @ _B
_I2 = np.eye(2, dtype=np.complex128)


@dataclass
class MPDO:
    """Density operator as a chain of (chiL, ket, bra, chiR) tensors."""

    tensors: list
    log_scale: float = 0.0
    center: int | None = None
    discarded_weight: float = 0.0

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list:
        return [t.shape[3] for t in self.tensors[:-1]]

    def clone(self) -> "MPDO":
        return MPDO(
            tensors=[t.copy() for t in self.tensors],
            log_scale=self.log_scale,
            center=self.center,
            discarded_weight=self.discarded_weight,
        )


def product_mpdo(occupations) -> MPDO:
    """Bond-dimension-1 MPDO for a Fock product state (trace exactly 1)."""
    occupations = list(occupations)
    if not occupations or any(o not in (0, 1) for o in occupations):
        raise ValueError("occupations must be a nonempty bit list")
    tensors = []
    for o in occupations:
        t = np.zeros((1, 2, 2, 1), dtype=np.complex128)
        t[0, o, o, 0] = 1.0
        tensors.append(t)
    return MPDO(tensors=tensors, log_scale=0.0, center=0)


def to_dense(mpdo: MPDO, max_sites: int = 10) -> np.ndarray:
    """Contract to the full 2^L x 2^L matrix (site 1 = least significant bit)."""
    L = mpdo.L
    if L > max_sites:
        raise ValueError(f"dense reconstruction capped at {max_sites} sites")
    T = np.ones((1, 1), dtype=np.complex128)  # (phys..., chi)
    for t in mpdo.tensors:
        T = np.tensordot(T, t, axes=([-1], [0]))
    T = T[..., 0][0]  # drop boundary bonds; axes now (k1, b1, ..., kL, bL)
    perm_kets = [2 * (L - 1 - i) for i in range(L)]       # kL ... k1
    perm_bras = [2 * (L - 1 - i) + 1 for i in range(L)]
    T = T.transpose(perm_kets + perm_bras)
    return T.reshape(2**L, 2**L) * np.exp(mpdo.log_scale)


def _qr_step_right(mpdo: MPDO, i: int):
    a, _, _, c = mpdo.tensors[i].shape
    M = mpdo.tensors[i].reshape(a * 4, c)
    Q, R = np.linalg.qr(M)
    mpdo.tensors[i] = Q.reshape(a, 2, 2, Q.shape[1])
    mpdo.tensors[i + 1] = np.tensordot(R, mpdo.tensors[i + 1], axes=([1], [0]))


def _qr_step_left(mpdo: MPDO, i: int):
    a, _, _, c = mpdo.tensors[i].shape
    M = mpdo.tensors[i].reshape(a, 4 * c)
    Q, R = np.linalg.qr(M.T)
    mpdo.tensors[i] = Q.T.reshape(Q.shape[1], 2, 2, c)
    mpdo.tensors[i - 1] = np.tensordot(mpdo.tensors[i - 1], R.T, axes=([3], [0]))


def _shift_center(mpdo: MPDO, to: int):
    if mpdo.center is None:
        raise ValueError("gauge unknown; canonicalize first")
    while mpdo.center < to:
        _qr_step_right(mpdo, mpdo.center)
        mpdo.center += 1
    while mpdo.center > to:
        _qr_step_left(mpdo, mpdo.center)
        mpdo.center -= 1


def canonicalize(mpdo: MPDO, form="right", center: int | None = None) -> MPDO:
    """QR-canonicalize; the contracted operator changes only by the recorded
    scale (center tensor normalized to unit Frobenius norm, log_scale updated).
    """
    out = mpdo.clone()
    L = out.L
    if form == "left":
        c = L - 1
    elif form == "right":
        c = 0
    elif form == "mixed":
        if center is None or not 0 <= center < L:
            raise ValueError("mixed form needs a valid center site")
        c = center
    else:
        raise ValueError(f"unknown canonical form {form!r}")
    for i in range(0, c):
        _qr_step_right(out, i)
    for i in range(L - 1, c, -1):
        _qr_step_left(out, i)
    norm = np.linalg.norm(out.tensors[c])
    if norm == 0.0:
        raise NumericalError("zero-norm tensor during canonicalization")
    out.tensors[c] = out.tensors[c] / norm
    out.log_scale += float(np.log(norm))
    out.center = c
    return out


def canonical_residual(mpdo: MPDO, form: str, center: int | None = None) -> float:
    """Max deviation of the orthonormality contractions for the given form."""
    L = mpdo.L
    c = {"left": L - 1, "right": 0, "mixed": center}[form]
    res = 0.0
    for i, t in enumerate(mpdo.tensors):
        a, _, _, d = t.shape
        if i < c:
            M = t.reshape(a * 4, d)
            res = max(res, np.abs(M.conj().T @ M - np.eye(d)).max())
        elif i > c:
            M = t.reshape(a, 4 * d)
            res = max(res, np.abs(M @ M.conj().T - np.eye(a)).max())
    return float(res)


# composite layout used by the gates: p = k1*8 + b1*4 + k2*2 + b2
# vec layout of the pair superoperator: v = (k1 + 2*k2) + 4*(b1 + 2*b2),
# site i being the fast bit of the pair (matching the global bit order).
def _gate_permutation() -> np.ndarray:
    perm = np.empty(16, dtype=np.int64)
    for k1 in (0, 1):
        for b1 in (0, 1):
            for k2 in (0, 1):
                for b2 in (0, 1):
                    p = k1 * 8 + b1 * 4 + k2 * 2 + b2
                    v = (k1 + 2 * k2) + 4 * (b1 + 2 * b2)
                    perm[p] = v
    return perm


_PERM = _gate_permutation()


def _onsite_weights(L: int, i: int) -> tuple[float, float]:
    # bond i couples sites (i, i+1), 1-based; interior sites split 1/2 - 1/2
    wl = 1.0 if i == 1 else 0.5
    wr = 1.0 if i + 1 == L else 0.5
    return wl, wr


def _pair_terms(params: ModelParams, dis: DisorderRealization, i: int):
    """Two-site Hamiltonian and (weight, jump) pairs of bond (i, i+1).

    Dissipator weights stay as exact scalar factors (0.5 or 1.0) on the
    superoperator terms so that the bond sum reconstructs L_zeta exactly.
    """
    wl, wr = _onsite_weights(params.L, i)
    nl = np.kron(_I2, _NUM)          # site i is the fast bit
    nr = np.kron(_NUM, _I2)
    hop = np.kron(_B, _BDAG) + np.kron(_BDAG, _B)
    h_pair = (
        wl * dis.fields[i - 1] * nl
        + wr * dis.fields[i] * nr
        - params.J * hop
        + params.U * nl @ nr
    )
    amp = np.sqrt(2.0 * params.gamma)
    o_left = amp * (_BDAG if i % 2 == 1 else _B)
    o_right = amp * (_BDAG if (i + 1) % 2 == 1 else _B)
    jumps = [
        (wl, np.kron(_I2, o_left)),
        (wr, np.kron(o_right, _I2)),
    ]
    return h_pair, jumps


def _dissipator_superop(O: np.ndarray, zeta: float) -> np.ndarray:
    OdO = O.conj().T @ O
    I = np.eye(O.shape[0], dtype=np.complex128)
    return zeta * np.kron(O.conj(), O) - 0.5 * (
        np.kron(I, OdO) + np.kron(OdO.T, I)
    )


def bond_superoperator(
    params: ModelParams, dis: DisorderRealization, zeta: float, i: int
) -> np.ndarray:
    """16x16 bond Liouvillian in the gate layout (k1, b1, k2, b2)."""
    h_pair, jumps = _pair_terms(params, dis, i)
    I4 = np.eye(4, dtype=np.complex128)
    S = -1j * (np.kron(I4, h_pair) - np.kron(h_pair.T, I4))
    for w, O in jumps:
        S = S + w * _dissipator_superop(O, zeta)
    return S[np.ix_(_PERM, _PERM)]


def embedded_bond_superop(
    params: ModelParams, dis: DisorderRealization, zeta: float, i: int
) -> sp.csr_matrix:
    """Bond Liouvillian embedded in the full D^2 x D^2 vectorized space.

    Summing over all bonds reconstructs the assembled L_zeta; used to verify
    the bond decomposition and to build dense Trotter references.
    """
    L = params.L
    h_pair, jumps = _pair_terms(params, dis, i)

    def embed(op4):
        hi = sp.identity(2 ** (L - i - 1), dtype=np.complex128, format="csr")
        lo = sp.identity(2 ** (i - 1), dtype=np.complex128, format="csr")
        return sp.kron(hi, sp.kron(sp.csr_matrix(op4), lo, format="csr"), format="csr")

    D = 2**L
    I = sp.identity(D, dtype=np.complex128, format="csr")
    Hp = embed(h_pair)
    S = -1j * (sp.kron(I, Hp, format="csr") - sp.kron(Hp.T, I, format="csr"))
    for w, O4 in jumps:
        O = embed(O4)
        OdO = (O.conj().T @ O).tocsr()
        S = S + w * (
            zeta * sp.kron(O.conj(), O, format="csr")
            - 0.5 * (sp.kron(I, OdO, format="csr") + sp.kron(OdO.T, I, format="csr"))
        )
    return S.tocsr()


@dataclass
class BondGate:
    """exp(tau * bond Liouvillian) on the vectorized two-site space."""

    bond: int
    tau: float
    matrix: np.ndarray
    generator: np.ndarray = field(repr=False, default=None)


def bond_gates(
    params: ModelParams,
    dis: DisorderRealization,
    zeta: float,
    dtau: float,
    bonds=None,
) -> list[BondGate]:
    """Gates e^{L_bond dtau} for the requested bonds (default: all)."""
    if dtau < 0:
        raise ValueError("dtau must be nonnegative")
    if params.L < 2:
        raise ValueError("bond gates need at least two sites")
    if bonds is None:
        bonds = range(1, params.L)
    gates = []
    for i in bonds:
        if not 1 <= i <= params.L - 1:
            raise ValueError(f"bond {i} outside 1..{params.L - 1}")
        S = bond_superoperator(params, dis, zeta, i)
        gates.append(BondGate(bond=i, tau=dtau, matrix=expm(S * dtau), generator=S))
    return gates


@dataclass
class TrotterGates:
    """Cached second-order gate set: odd bonds at dt/2, even bonds at dt."""

    dt: float
    odd: list
    even: list


def trotter_gates(
    params: ModelParams, dis: DisorderRealization, zeta: float, dt: float
) -> TrotterGates:
    odd = [i for i in range(1, params.L) if i % 2 == 1]
    even = [i for i in range(1, params.L) if i % 2 == 0]
    return TrotterGates(
        dt=dt,
        odd=bond_gates(params, dis, zeta, 0.5 * dt, odd),
        even=bond_gates(params, dis, zeta, dt, even),
    )


def apply_gate(
    mpdo: MPDO,
    gate: BondGate,
    chi_max: int,
    sv_tol: float = 1e-16,
    direction: str = "right",
) -> MPDO:
    """Contract a two-site gate, SVD-split, truncate, move the center.

    ``direction="right"`` leaves the left tensor orthonormal and the center on
    the right site (and vice versa).  The stripped 2-norm goes to log_scale,
    the relative discarded weight accumulates on the MPDO.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be at least 1")
    i = gate.bond - 1                       # 0-based left tensor
    if not 0 <= i < mpdo.L - 1:
        raise ValueError(f"bond {gate.bond} outside the chain")
    _shift_center(mpdo, i if direction == "right" else i + 1)
    left, right = mpdo.tensors[i], mpdo.tensors[i + 1]
    a = left.shape[0]
    d = right.shape[3]
    theta = np.tensordot(left, right, axes=([3], [0]))  # (a,k1,b1,k2,b2,d)
    theta = theta.reshape(a, 16, d)
    theta = np.tensordot(gate.matrix, theta, axes=([1], [1]))  # (p,a,d)
    theta = theta.transpose(1, 0, 2).reshape(a, 4, 4, d).reshape(a * 4, 4 * d)
    U, s, Vh = np.linalg.svd(theta, full_matrices=False)
    total = float(s @ s)
    if total == 0.0:
        raise NumericalError("zero-norm two-site tensor after gate application")
    keep = int(np.searchsorted(-s, -sv_tol * s[0]))
    keep = max(1, min(keep, chi_max))
    dropped = s[keep:]
    mpdo.discarded_weight += float(dropped @ dropped) / total
    s = s[:keep]
    snorm = float(np.linalg.norm(s))
    s = s / snorm
    mpdo.log_scale += float(np.log(snorm))
    U = U[:, :keep]
    Vh = Vh[:keep]
    if direction == "right":
        mpdo.tensors[i] = U.reshape(a, 2, 2, keep)
        mpdo.tensors[i + 1] = (s[:, None] * Vh).reshape(keep, 2, 2, d)
        mpdo.center = i + 1
    elif direction == "left":
        mpdo.tensors[i] = (U * s[None, :]).reshape(a, 2, 2, keep)
        mpdo.tensors[i + 1] = Vh.reshape(keep, 2, 2, d)
        mpdo.center = i
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return mpdo


def tebd_step(mpdo: MPDO, gates: TrotterGates, chi_max: int,
              sv_tol: float = 1e-16) -> MPDO:
    """One second-order step; the center is re-anchored at site 1 afterwards."""
    for g in gates.odd:
        apply_gate(mpdo, g, chi_max, sv_tol, direction="right")
    for g in reversed(gates.even):
        apply_gate(mpdo, g, chi_max, sv_tol, direction="left")
    for g in gates.odd:
        apply_gate(mpdo, g, chi_max, sv_tol, direction="right")
    _shift_center(mpdo, 0)
    norm = np.linalg.norm(mpdo.tensors[0])
    if norm == 0.0:
        raise NumericalError("zero-norm tensor after TEBD step")
    mpdo.tensors[0] = mpdo.tensors[0] / norm
    mpdo.log_scale += float(np.log(norm))
    return mpdo


def _transfer(tensor: np.ndarray, op: np.ndarray | None) -> np.ndarray:
    # Tr[rho O] contraction: sum_{k,b} O[b,k] sigma[:,k,b,:]
    if op is None:
        return tensor[:, 0, 0, :] + tensor[:, 1, 1, :]
    return np.einsum("bk,akbc->ac", op, tensor)


def mpdo_trace(mpdo: MPDO) -> complex:
    """Tr rho including the accumulated scale (may over/underflow; see
    mpdo_log_trace for the safe form)."""
    val, log = _trace_contraction(mpdo)
    return val * np.exp(log)


def mpdo_log_trace(mpdo: MPDO) -> tuple[float, complex]:
    """(log |Tr rho|, phase) without leaving log space."""
    val, log = _trace_contraction(mpdo)
    if val == 0.0:
        return -np.inf, 0.0 + 0.0j
    return float(np.log(abs(val)) + log), val / abs(val)


def _trace_contraction(mpdo: MPDO) -> tuple[complex, float]:
    env = np.ones((1, 1), dtype=np.complex128)
    for t in mpdo.tensors:
        env = env @ _transfer(t, None)
    return complex(env[0, 0]), mpdo.log_scale


def mpdo_expectation(mpdo: MPDO, ops: dict) -> complex:
    """<prod_i O_i> = Tr[rho prod O] / Tr[rho] for onsite operator strings."""
    if not ops:
        raise ValueError("empty operator string")
    for site in ops:
        if not 1 <= site <= mpdo.L:
            raise ValueError(f"site {site} outside 1..{mpdo.L}")
    num = np.ones((1, 1), dtype=np.complex128)
    den = np.ones((1, 1), dtype=np.complex128)
    for site, t in enumerate(mpdo.tensors, start=1):
        num = num @ _transfer(t, ops.get(site))
        den = den @ _transfer(t, None)
    tr = complex(den[0, 0])
    if tr == 0.0:
        raise NumericalError("vanishing trace in expectation value")
    return complex(num[0, 0]) / tr


def site_expectations(mpdo: MPDO, op: np.ndarray) -> np.ndarray:
    """<op_i> for every site in one O(L) pass (shared environments)."""
    L = mpdo.L
    transfers = [_transfer(t, None) for t in mpdo.tensors]
    lefts = [np.ones((1, 1), dtype=np.complex128)]
    for T in transfers[:-1]:
        lefts.append(lefts[-1] @ T)
    rights = [np.ones((1, 1), dtype=np.complex128)]
    for T in reversed(transfers[1:]):
        rights.append(T @ rights[-1])
    rights.reverse()
    tr = complex((lefts[-1] @ transfers[-1])[0, 0])
    if tr == 0.0:
        raise NumericalError("vanishing trace in expectation value")
    out = np.empty(L, dtype=np.complex128)
    for i in range(L):
        out[i] = (lefts[i] @ _transfer(mpdo.tensors[i], op) @ rights[i])[0, 0] / tr
    return out


def tebd_run(
    params: ModelParams,
    dis: DisorderRealization,
    zeta: float,
    chi_max: int,
    dt: float = 1e-2,
    t_max: float = 10.0,
    sv_tol: float = 1e-16,
    sample_every: float = 0.5,
    imag_tol: float = 1e-5,
    occupations=None,
) -> ObservableSeries:
    """TEBD trajectory of the linear deformed evolution from a product state.

    Records imbalance, populations and log Tr rho on the sampling grid plus
    convergence diagnostics (max bond dimension, cumulative discarded weight,
    max imaginary residue).  Imaginary residues beyond ``imag_tol`` abort:
    the algorithm does not preserve positivity, and the residue is the canary.
    """
    if dt > 1e-2 + 1e-12:
        raise ValueError("dt above 1e-2 is outside the validated step range")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        from contextlib import nullcontext

        def threadpool_limits(**_):
            return nullcontext()

    if occupations is None:
        occupations = [1 if i % 2 == 0 else 0 for i in range(params.L)]
    mpdo = product_mpdo(occupations)
    gates = trotter_gates(params, dis, zeta, dt)
    nsteps = int(round(t_max / dt))
    stride = max(1, int(round(sample_every / dt)))

    times, rows = [], []
    imag_max = 0.0

    def sample(step):
        nonlocal imag_max
        dens = site_expectations(mpdo, _NUM)
        resid = float(np.abs(dens.imag).max())
        imag_max = max(imag_max, resid)
        if resid > imag_tol:
            raise NumericalError(
                f"imaginary observable residue {resid:.3e} > {imag_tol:.1e} at "
                f"t={step * dt:.4g} (chi_max={chi_max}, dt={dt}); "
                "positivity loss detected"
            )
        n = dens.real
        signs = np.array([1.0 if i % 2 == 1 else -1.0
                          for i in range(1, params.L + 1)])
        log_tr, _ = mpdo_log_trace(mpdo)
        times.append(step * dt)
        rows.append({
            "I_num": float(n @ signs),
            "N": float(n.sum()),
            "imag_residue": resid,
            "log_trace": log_tr,
            "max_bond": max(mpdo.bond_dims) if mpdo.bond_dims else 1,
            "discarded_cum": mpdo.discarded_weight,
        })

    with threadpool_limits(limits=1):
        sample(0)
        for step in range(1, nsteps + 1):
            tebd_step(mpdo, gates, chi_max, sv_tol)
            if step % stride == 0 or step == nsteps:
                sample(step)

    channels = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    with np.errstate(divide="ignore", invalid="ignore"):
        channels["imbalance"] = np.where(
            channels["N"] != 0, channels["I_num"] / np.where(channels["N"] != 0, channels["N"], 1.0), np.nan
        )
    meta = {
        "zeta": zeta,
        "dt": dt,
        "chi_max": chi_max,
        "sv_tol": sv_tol,
        "max_bond_reached": int(channels["max_bond"].max()),
        "discarded_weight": float(mpdo.discarded_weight),
        "imag_residue_max": imag_max,
        "seed": dis.seed,
        "final_mpdo": mpdo,
    }
    return ObservableSeries(times=np.asarray(times), channels=channels, meta=meta)
