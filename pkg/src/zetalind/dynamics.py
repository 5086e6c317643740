"""Propagation of the deformed master equation and counting statistics.

Three routes to the same physics, used as mutual oracles:

* nonlinear propagation of d rho/dt = (L_zeta - Tr[L_zeta rho]) rho,
* linear propagation of e^{L_zeta t} rho(0) with per-step trace stripping
  into an accumulated log Z_zeta(t),
* the jump-number hierarchy d rho_n/dt = L_0 rho_n + L_J rho_{n-1},
  resummed with fugacity weights zeta^n.

All integrators are fixed-step classical RK4 (deterministic; step-halving
convergence is exercised in the test suite).  States are plain complex
ndarrays; normalization and log-norms are carried explicitly.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis
from .model import (
    ModelParams,
    bond_current_op,
    staggered_number_op,
    total_number_op,
)
from .superop import Superoperator, devectorize, sector_indices, vectorize


class NumericalError(RuntimeError):
    """Propagation failure: trace collapse, NaN, or imaginary residue blow-up."""


IMAG_RESIDUE_TOL = 1e-5


@dataclass
class ObservableSeries:
    times: np.ndarray
    channels: dict
    meta: dict = field(default_factory=dict)


@dataclass
class JumpHierarchy:
    """Unnormalized jump-number-resolved states rho_n(t), n = 0..n_max."""

    matrices: list
    t: float
    truncation_weight: float
    times: np.ndarray
    trace_history: np.ndarray       # (n_max+1, n_times), Tr rho_n(t)
    jump_rate_history: np.ndarray   # (n_max+1, n_times), Tr[L_J rho_n(t)]

    @property
    def n_max(self) -> int:
        return len(self.matrices) - 1


def check_density_matrix(rho, herm_tol=1e-10, trace_tol=1e-10, min_eig=-1e-8,
                         positivity=False) -> dict:
    """Validate Hermiticity / unit trace / positivity; raises on violation."""
    scale = max(np.abs(rho).max(), 1e-300)
    herm = np.abs(rho - rho.conj().T).max() / scale
    if herm > herm_tol:
        raise NumericalError(f"Hermiticity residual {herm:.3e} > {herm_tol:.1e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise NumericalError(f"trace {tr} deviates from 1 beyond {trace_tol:.1e}")
    out = {"herm_residual": float(herm), "trace": complex(tr)}
    if positivity:
        lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if lam < min_eig:
            raise NumericalError(f"min eigenvalue {lam:.3e} < {min_eig:.1e}")
        out["min_eig"] = float(lam)
    return out


def cdw_pattern(L: int) -> int:
    return sum(1 << i for i in range(0, L, 2))


def cdw_state(basis: FockBasis) -> np.ndarray:
    """Projector on |1,0,1,0,...>; imbalance exactly 1, <N> = L/2."""
    if basis.L % 2 != 0:
        raise ValueError("charge-density-wave initial state needs even L")
    idx = basis.index_of(cdw_pattern(basis.L))
    rho = np.zeros((basis.dim, basis.dim), dtype=np.complex128)
    rho[idx, idx] = 1.0
    return rho


class VectorSpace:
    """Vectorized density-matrix space, optionally one weak-U(1) charge block."""

    def __init__(self, basis: FockBasis | None, sector_q: int | None = None,
                 D: int | None = None):
        if basis is None and (D is None or sector_q is not None):
            raise ValueError("need a basis, or a bare dimension without sector")
        self.basis = basis
        self.D = basis.dim if basis is not None else D
        self.sector_q = sector_q
        if sector_q is None:
            self.indices = None
            self.dim = self.D * self.D
            self.diag_positions = np.arange(self.D) * (self.D + 1)
        else:
            idx = sector_indices(basis, sector_q)
            self.indices = idx
            self.dim = len(idx)
            diag_full = np.arange(self.D) * (self.D + 1)
            pos = np.searchsorted(idx, diag_full)
            hit = (pos < len(idx)) & (idx[np.minimum(pos, len(idx) - 1)] == diag_full)
            self.diag_positions = pos[hit]

    def restrict(self, v_full: np.ndarray) -> np.ndarray:
        if self.indices is None:
            return v_full
        out = v_full[self.indices]
        leak = np.abs(v_full).sum() - np.abs(out).sum()
        if leak > 1e-12 * max(np.abs(v_full).sum(), 1e-300):
            raise ValueError("state has weight outside the requested charge sector")
        return out

    def embed(self, v: np.ndarray) -> np.ndarray:
        if self.indices is None:
            return v
        out = np.zeros(self.D * self.D, dtype=np.complex128)
        out[self.indices] = v
        return out

    def restrict_matrix(self, mat: sp.spmatrix) -> sp.csr_matrix:
        if self.indices is None:
            return sp.csr_matrix(mat)
        return sp.csr_matrix(mat[self.indices][:, self.indices])

    def trace(self, v: np.ndarray) -> complex:
        return complex(v[self.diag_positions].sum())

    def to_matrix(self, v: np.ndarray) -> np.ndarray:
        return devectorize(self.embed(v))


def _weight_vector(A: sp.spmatrix) -> np.ndarray:
    # Tr[A rho] = vec(A^T) . vec(rho)
    return np.asarray(sp.csr_matrix(A).T.todense()).reshape(-1, order="F")


class ObservableContext:
    """Precomputed weight vectors for fast expectation values along a run."""

    def __init__(self, basis: FockBasis, params: ModelParams,
                 space: VectorSpace | None = None):
        self.basis = basis
        self.params = params
        self.space = space or VectorSpace(basis)
        I_op = staggered_number_op(basis)
        N_op = total_number_op(basis)
        ops = {
            "I_num": I_op,
            "N": N_op,
            "I2": (I_op @ I_op).tocsr(),
            "NI": (N_op @ I_op).tocsr(),
        }
        self.currents = [
            bond_current_op(basis, params, i) for i in range(1, basis.L)
        ]
        jump_sum = sp.csr_matrix((basis.dim, basis.dim), dtype=np.complex128)
        occ = basis.occupations().astype(np.float64)
        # sum_a O_a^+ O_a = 2 gamma [sum_odd (1 - n_i) + sum_even n_i]
        diag = np.zeros(basis.dim)
        for i in range(1, basis.L + 1):
            ni = occ[:, i - 1]
            diag += (1.0 - ni) if i % 2 == 1 else ni
        jump_sum = sp.diags(2.0 * params.gamma * diag.astype(np.complex128))
        ops["jump_rate"] = sp.csr_matrix(jump_sum)
        restrict = (lambda w: w[self.space.indices]) if self.space.indices is not None \
            else (lambda w: w)
        self.weights = {k: restrict(_weight_vector(A)) for k, A in ops.items()}
        self.current_weights = [restrict(_weight_vector(J)) for J in self.currents]

    def evaluate(self, v: np.ndarray) -> dict:
        out = {k: complex(w @ v) for k, w in self.weights.items()}
        out["currents"] = np.array([w @ v for w in self.current_weights])
        return out


def observables(rho: np.ndarray, basis: FockBasis, params: ModelParams):
    """(imbalance, <I>, <N>, bond currents) of a normalized state.

    Imaginary residues above 1e-5 raise; below, the real parts are returned.
    """
    ctx = ObservableContext(basis, params)
    vals = ctx.evaluate(vectorize(rho))
    resid = max(
        abs(vals["I_num"].imag), abs(vals["N"].imag),
        float(np.abs(vals["currents"].imag).max()) if basis.L > 1 else 0.0,
    )
    if resid > IMAG_RESIDUE_TOL:
        raise NumericalError(f"imaginary observable residue {resid:.3e}")
    N = vals["N"].real
    if N == 0.0:
        raise ValueError("imbalance undefined at <N> = 0")
    return vals["I_num"].real / N, vals["I_num"].real, N, vals["currents"].real


def _sample_steps(nsteps: int, stride: int) -> np.ndarray:
    ks = np.arange(0, nsteps + 1, stride)
    if ks[-1] != nsteps:
        ks = np.append(ks, nsteps)
    return ks


def _rk4_matvec(L: sp.csr_matrix, v: np.ndarray, dt: float) -> np.ndarray:
    k1 = L @ v
    k2 = L @ (v + 0.5 * dt * k1)
    k3 = L @ (v + 0.5 * dt * k2)
    k4 = L @ (v + dt * k3)
    return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate_nonlinear(
    rho0: np.ndarray,
    sup: Superoperator,
    dt: float,
    t_max: float,
    sample_every: float = 0.1,
    basis: FockBasis | None = None,
    params: ModelParams | None = None,
    sector_q: int | None = None,
    probe_positivity: bool = False,
) -> ObservableSeries:
    """Integrate the trace-preserving nonlinear equation with fixed-step RK4.

    The trace is renormalized to 1 after every step; the pre-renormalization
    drift is recorded in channel ``trace_drift``.  When ``basis``/``params``
    are given, imbalance, populations, correlators, bond currents and the
    jump expectation Tr[L_J rho] are sampled every ``sample_every``.
    """
    if dt > 1e-2 + 1e-12:
        raise ValueError("dt above 1e-2 is outside the validated step range")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    space = (VectorSpace(basis, sector_q) if basis is not None
             else VectorSpace(None, D=rho0.shape[0]))
    ctx = ObservableContext(basis, params, space) if basis is not None and params is not None else None

    Lmat = space.restrict_matrix(sup.matrix)
    v = space.restrict(vectorize(np.asarray(rho0, dtype=np.complex128)))
    tr0 = space.trace(v)
    if not (np.isfinite(tr0) and abs(tr0 - 1.0) <= 1e-8):
        raise ValueError(f"initial state not normalized: trace {tr0}")

    nsteps = int(round(t_max / dt))
    stride = max(1, int(round(sample_every / dt)))
    sample_at = set(_sample_steps(nsteps, stride).tolist())
    diag = space.diag_positions

    times, rows = [], []
    drift_max = 0.0

    def record(step, drift):
        t = step * dt
        times.append(t)
        row = {"trace_drift": drift}
        if ctx is not None:
            vals = ctx.evaluate(v)
            row.update(vals)
        if probe_positivity:
            rho = space.to_matrix(v)
            row["min_eig"] = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
            row["herm_residual"] = float(
                np.abs(rho - rho.conj().T).max() / max(np.abs(rho).max(), 1e-300)
            )
        rows.append(row)

    record(0, 0.0)
    for step in range(1, nsteps + 1):
        k1 = Lmat @ v
        f1 = k1 - k1[diag].sum() * v
        u = v + 0.5 * dt * f1
        k2 = Lmat @ u
        f2 = k2 - k2[diag].sum() * u
        u = v + 0.5 * dt * f2
        k3 = Lmat @ u
        f3 = k3 - k3[diag].sum() * u
        u = v + dt * f3
        k4 = Lmat @ u
        f4 = k4 - k4[diag].sum() * u
        v = v + (dt / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        tr = v[diag].sum()
        if not np.isfinite(tr):
            raise NumericalError(f"NaN/Inf at step {step} (t={step * dt:.4g})")
        if abs(tr) < 1e-12:
            raise NumericalError(f"trace collapse at step {step} (t={step * dt:.4g})")
        drift = abs(tr - 1.0)
        drift_max = max(drift_max, drift)
        v = v / tr
        if step in sample_at:
            record(step, drift)

    channels = _rows_to_channels(rows)
    channels["imbalance"] = _imbalance_channel(channels)
    meta = {
        "zeta": sup.zeta, "dt": dt, "t_max": t_max, "drift_max": drift_max,
        "sector_q": space.sector_q, "final_vec": v, "space": space,
    }
    return ObservableSeries(times=np.asarray(times), channels=channels, meta=meta)


def final_state(series: ObservableSeries) -> np.ndarray:
    """Normalized density matrix at the end of a nonlinear propagation."""
    return series.meta["space"].to_matrix(series.meta["final_vec"])


def _rows_to_channels(rows: list) -> dict:
    channels = {}
    if not rows:
        return channels
    for key in rows[0]:
        if key == "currents":
            arr = np.stack([r[key] for r in rows])
            channels["currents"] = arr.real
            channels["currents_imag_max"] = (
                np.abs(arr.imag).max(axis=1) if arr.shape[1] else np.zeros(len(rows))
            )
        elif isinstance(rows[0][key], complex):
            vals = np.array([r[key] for r in rows])
            channels[key] = vals.real
            channels[key + "_imag"] = vals.imag
        else:
            channels[key] = np.array([r[key] for r in rows])
    return channels


def _imbalance_channel(channels: dict) -> np.ndarray:
    if "I_num" not in channels:
        return np.array([])
    N = channels["N"]
    with np.errstate(divide="ignore", invalid="ignore"):
        imb = np.where(N != 0, channels["I_num"] / np.where(N != 0, N, 1.0), np.nan)
    return imb


def propagate_linear(
    rho0: np.ndarray,
    sup: Superoperator,
    dt: float,
    t_max: float,
    sample_every: float = 0.1,
    basis: FockBasis | None = None,
    params: ModelParams | None = None,
    sector_q: int | None = None,
):
    """Integrate d rho/dt = L_zeta rho, stripping the trace into log Z.

    Returns ``(rho_final_normalized, series)``; channel ``log_Z`` holds
    log Tr[e^{L_zeta t} rho(0)] on the sampling grid.
    """
    if dt > 1e-2 + 1e-12:
        raise ValueError("dt above 1e-2 is outside the validated step range")
    space = (VectorSpace(basis, sector_q) if basis is not None
             else VectorSpace(None, D=rho0.shape[0]))
    ctx = ObservableContext(basis, params, space) if basis is not None and params is not None else None
    Lmat = space.restrict_matrix(sup.matrix)
    v = space.restrict(vectorize(np.asarray(rho0, dtype=np.complex128)))
    diag = space.diag_positions

    nsteps = int(round(t_max / dt))
    stride = max(1, int(round(sample_every / dt)))
    sample_at = set(_sample_steps(nsteps, stride).tolist())

    log_Z = 0.0
    phase_residue = 0.0
    times, rows, logs = [], [], []

    def record(step):
        times.append(step * dt)
        logs.append(log_Z)
        row = {}
        if ctx is not None:
            row = ctx.evaluate(v)
        rows.append(row)

    tr = space.trace(v)
    if not (np.isfinite(tr) and abs(tr - 1.0) <= 1e-8):
        raise ValueError(f"initial state not normalized: trace {tr}")
    record(0)
    for step in range(1, nsteps + 1):
        v = _rk4_matvec(Lmat, v, dt)
        tr = v[diag].sum()
        if not np.isfinite(tr):
            raise NumericalError(f"NaN/Inf at step {step} (t={step * dt:.4g})")
        if abs(tr) < 1e-12:
            raise NumericalError(f"trace collapse at step {step} (t={step * dt:.4g})")
        log_Z += float(np.log(abs(tr)))
        phase_residue = max(phase_residue, abs(np.angle(tr)))
        v = v / tr
        if step in sample_at:
            record(step)

    channels = _rows_to_channels(rows)
    channels["log_Z"] = np.asarray(logs)
    if rows and rows[0]:
        channels["imbalance"] = _imbalance_channel(channels)
    meta = {
        "zeta": sup.zeta, "dt": dt, "t_max": t_max,
        "phase_residue": phase_residue, "sector_q": space.sector_q,
    }
    return space.to_matrix(v), ObservableSeries(np.asarray(times), channels, meta)


def jump_hierarchy(
    rho0: np.ndarray,
    H: sp.spmatrix,
    jumps: list,
    n_max: int | None = None,
    dt: float = 1e-2,
    t_max: float = 1.0,
    sample_every: float = 0.1,
    weight_bound: float = 1e-10,
    adapt_cap: int = 512,
) -> JumpHierarchy:
    """Co-integrate the triangular jump-number hierarchy with RK4.

    With ``n_max=None`` the depth doubles (from 8, up to ``adapt_cap``) until
    Tr rho_{n_max}(t_max) < ``weight_bound``.  With explicit ``n_max`` the
    bound is enforced and its violation raises NumericalError.
    """
    from .superop import build_zeta_liouvillian

    sup = build_zeta_liouvillian(H, jumps, 0.0)
    L0, LJ = sup.L0, sup.LJ
    D = sup.D
    diag = np.arange(D) * (D + 1)
    w_jump = None
    adaptive = n_max is None
    depth = 8 if adaptive else n_max
    if depth < 1:
        raise ValueError("n_max must be at least 1")

    jump_sum = sp.csr_matrix((D, D), dtype=np.complex128)
    for O in jumps:
        jump_sum = jump_sum + (O.conj().T @ O).tocsr()
    w_jump = _weight_vector(jump_sum)

    while True:
        result = _run_hierarchy(
            rho0, L0, LJ, depth, dt, t_max, sample_every, diag, w_jump
        )
        if result.truncation_weight < weight_bound:
            return result
        if adaptive and depth < adapt_cap:
            depth *= 2
            continue
        raise NumericalError(
            f"truncation weight {result.truncation_weight:.3e} at n_max={depth} "
            f"exceeds bound {weight_bound:.1e}; hierarchy too shallow"
        )


def _run_hierarchy(rho0, L0, LJ, depth, dt, t_max, sample_every, diag, w_jump):
    D2 = L0.shape[0]
    V = np.zeros((depth + 1, D2), dtype=np.complex128)
    V[0] = vectorize(np.asarray(rho0, dtype=np.complex128))

    def deriv(V):
        out = (L0 @ V.T).T
        out[1:] += (LJ @ V[:-1].T).T
        return out

    nsteps = int(round(t_max / dt))
    stride = max(1, int(round(sample_every / dt)))
    sample_at = set(_sample_steps(nsteps, stride).tolist())
    times, traces, rates = [], [], []

    def record(step):
        times.append(step * dt)
        traces.append(V[:, diag].sum(axis=1).real.copy())
        rates.append((V @ w_jump).real.copy())

    record(0)
    for step in range(1, nsteps + 1):
        k1 = deriv(V)
        k2 = deriv(V + 0.5 * dt * k1)
        k3 = deriv(V + 0.5 * dt * k2)
        k4 = deriv(V + dt * k3)
        V = V + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(V[:, diag].sum()):
            raise NumericalError(f"NaN/Inf in hierarchy at step {step}")
        if step in sample_at:
            record(step)

    mats = [devectorize(V[n]) for n in range(depth + 1)]
    trunc = float(np.trace(mats[-1]).real)
    return JumpHierarchy(
        matrices=mats,
        t=nsteps * dt,
        truncation_weight=trunc,
        times=np.asarray(times),
        trace_history=np.asarray(traces).T,
        jump_rate_history=np.asarray(rates).T,
    )


def grand_canonical(hier: JumpHierarchy, zeta: float):
    """rho_zeta = sum_n zeta^n rho_n / Z_zeta and the partition function."""
    n = hier.n_max
    w = np.asarray(zeta, dtype=np.float64) ** np.arange(n + 1)
    traces = np.array([np.trace(m).real for m in hier.matrices])
    Z = float(w @ traces)
    if Z < 1e-300:
        raise NumericalError(f"partition function underflow: Z = {Z:.3e}")
    rho = np.zeros_like(hier.matrices[0])
    for wn, m in zip(w, hier.matrices):
        if wn != 0.0:
            rho += wn * m
    return rho / Z, Z


def counting_stats(hier: JumpHierarchy, zeta: float):
    """(F = log Z, <n>_zeta, var(n)_zeta) at the hierarchy's final time.

    <n> and var(n) are normalized by Z_zeta, consistently with derivatives of
    F with respect to log zeta.
    """
    n = hier.n_max
    ns = np.arange(n + 1)
    w = np.asarray(zeta, dtype=np.float64) ** ns
    traces = np.array([np.trace(m).real for m in hier.matrices])
    Z = float(w @ traces)
    if Z < 1e-300:
        raise NumericalError(f"partition function underflow: Z = {Z:.3e}")
    n_mean = float((ns * w) @ traces) / Z
    n2 = float((ns**2 * w) @ traces) / Z
    return float(np.log(Z)), n_mean, n2 - n_mean**2


def hierarchy_jump_mean_series(hier: JumpHierarchy, zeta: float):
    """(times, <n(t)>_zeta, Z_zeta(t)) on the hierarchy's sampling grid."""
    ns = np.arange(hier.n_max + 1)
    w = np.asarray(zeta, dtype=np.float64) ** ns
    Z = w @ hier.trace_history
    n_mean = ((ns * w) @ hier.trace_history) / Z
    return hier.times, n_mean, Z


def activity_rate(obj, zeta: float) -> ObservableSeries:
    """Rate of dynamical activity (1/zeta) d<n>_zeta/dt.

    From a JumpHierarchy: centered finite differences of <n(t)>_zeta
    (channel ``activity_fd``) plus the single-time jump expectation
    Tr[L_J rho_zeta(t)] (channel ``activity_formula``), which equals the rate
    exactly at zeta = 1.  From a nonlinear ObservableSeries: only valid at
    zeta = 1, where the recorded jump expectation is the rate.
    """
    if zeta <= 0.0:
        raise ValueError("activity rate undefined at zeta = 0 (1/zeta scaling)")
    if isinstance(obj, JumpHierarchy):
        times, n_mean, Z = hierarchy_jump_mean_series(obj, zeta)
        fd = np.gradient(n_mean, times) / zeta
        w = np.asarray(zeta, dtype=np.float64) ** np.arange(obj.n_max + 1)
        formula = (w @ obj.jump_rate_history) / Z
        return ObservableSeries(
            times=times,
            channels={"activity_fd": fd, "activity_formula": formula},
            meta={"zeta": zeta, "source": "hierarchy"},
        )
    if isinstance(obj, ObservableSeries):
        if abs(zeta - 1.0) > 1e-12:
            raise ValueError(
                "single-time activity from a propagation series requires zeta = 1"
            )
        if "jump_rate" not in obj.channels:
            raise ValueError("series lacks the jump_rate channel")
        return ObservableSeries(
            times=obj.times,
            channels={"activity_formula": obj.channels["jump_rate"]},
            meta={"zeta": zeta, "source": "series"},
        )
    raise TypeError(f"cannot compute activity from {type(obj)!r}")


def eom_residual(series: ObservableSeries, params: ModelParams, zeta: float) -> float:
    """Max residual of the population/imbalance equations of motion.

    Checks d<I>/dt and d<N>/dt against
        2g(1-z)(<I^2>-<I>^2) + 2g z (L/2 - <I>) - 2 sum_i (-1)^(i+1) J_i
        2g(1-z)(<NI>-<N><I>) + 2g z (L/2 - <N>)
    with time derivatives taken by centered differences on the sampling grid.
    """
    t = series.times
    if len(t) < 5:
        raise ValueError("sampling grid too short for finite differences")
    dts = np.diff(t)
    if dts.max() > 1e-2 + 1e-12:
        raise ValueError("sampling grid too coarse for finite-difference EoM check")
    ch = series.channels
    g = params.gamma
    L = params.L
    I, N = ch["I_num"], ch["N"]
    I2, NI = ch["I2"], ch["NI"]
    JI = ch["currents"]
    signs = np.array([(-1.0) ** (i + 1) for i in range(1, L)])
    staggered_current = JI @ signs

    rhs_I = 2 * g * (1 - zeta) * (I2 - I**2) + 2 * g * zeta * (L / 2 - I) \
        - 2.0 * staggered_current
    rhs_N = 2 * g * (1 - zeta) * (NI - N * I) + 2 * g * zeta * (L / 2 - N)
    dI = np.gradient(I, t)
    dN = np.gradient(N, t)
    interior = slice(1, -1)
    return float(
        max(
            np.abs(dI - rhs_I)[interior].max(),
            np.abs(dN - rhs_N)[interior].max(),
        )
    )


def steady_state_eig(
    sup: Superoperator,
    basis: FockBasis | None = None,
    sector_q: int | None = None,
    max_dim: int = 4096,
):
    """Dominant eigenmatrix of L_zeta (Hermitized, unit trace) and the gap."""
    if sector_q is not None:
        if basis is None:
            raise ValueError("sector restriction needs the basis")
        space = VectorSpace(basis, sector_q)
        mat = space.restrict_matrix(sup.matrix).toarray()
    else:
        space = None
        if sup.dim > max_dim:
            raise ValueError(f"dense eigensolve of dim {sup.dim} exceeds {max_dim}")
        mat = sup.matrix.toarray()
    w, V = np.linalg.eig(mat)
    order = np.argsort(-w.real, kind="stable")
    lam1, lam2 = w[order[0]], w[order[1]]
    if abs(lam1.imag) > 1e-8 * max(1.0, abs(lam1.real)):
        raise NumericalError(
            f"dominant eigenvalue {lam1} not real within 1e-8; "
            "degenerate or sector-mixed steady state"
        )
    vec = V[:, order[0]]
    rho = devectorize(space.embed(vec)) if space is not None else devectorize(vec)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho)
    if abs(tr) < 1e-10:
        raise NumericalError("dominant eigenmatrix is traceless; not a steady state")
    rho = rho / tr
    gap = float(lam1.real - lam2.real)
    return rho, gap


def steady_state(
    rho0: np.ndarray,
    sup: Superoperator,
    dt: float,
    basis: FockBasis,
    params: ModelParams,
    sector_q: int | None = None,
    t_min: float = 20.0,
    t_cap: float = 2000.0,
    stat_tol: float = 1e-8,
    window: float = 1.0,
    gap: float | None = None,
):
    """Operational steady state: propagate until ||rho(t) - rho(t-w)||_max < tol.

    Returns ``(rho_ss, info)``; ``info`` reports t_reached, converged flag and
    the last stationarity measure.  A known Liouvillian gap extends the
    minimum horizon to 20/gap.
    """
    space = VectorSpace(basis, sector_q)
    Lmat = space.restrict_matrix(sup.matrix)
    v = space.restrict(vectorize(np.asarray(rho0, dtype=np.complex128)))
    diag = space.diag_positions
    t_floor = max(t_min, 20.0 / gap if gap else 0.0)
    wsteps = max(1, int(round(window / dt)))
    nmax = int(round(t_cap / dt))
    prev = v.copy()
    stat = np.inf
    step = 0
    while step < nmax:
        for _ in range(wsteps):
            step += 1
            k1 = Lmat @ v
            f1 = k1 - k1[diag].sum() * v
            u = v + 0.5 * dt * f1
            k2 = Lmat @ u
            f2 = k2 - k2[diag].sum() * u
            u = v + 0.5 * dt * f2
            k3 = Lmat @ u
            f3 = k3 - k3[diag].sum() * u
            u = v + dt * f3
            k4 = Lmat @ u
            f4 = k4 - k4[diag].sum() * u
            v = v + (dt / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
            tr = v[diag].sum()
            if not np.isfinite(tr):
                raise NumericalError(f"NaN/Inf at step {step}")
            if abs(tr) < 1e-12:
                raise NumericalError(f"trace collapse at step {step}")
            v = v / tr
        stat = float(np.abs(v - prev).max())
        prev = v.copy()
        t = step * dt
        if t >= t_floor and stat < stat_tol:
            break
    t_reached = step * dt
    converged = stat < stat_tol and t_reached >= t_floor
    rho = space.to_matrix(v)
    info = {
        "t_reached": t_reached,
        "converged": bool(converged),
        "stationarity": stat,
        "sector_q": sector_q,
    }
    return rho, info
