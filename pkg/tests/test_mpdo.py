import numpy as np
import pytest
from scipy.linalg import expm

from zetalind.fock import build_basis
from zetalind.model import ModelParams, build_hamiltonian, build_jumps, sample_disorder
from zetalind.superop import build_zeta_liouvillian, devectorize, vectorize
from zetalind import dynamics as dyn
from zetalind import mpdo as mp


def random_mpdo(L, chi, seed=0):
    rng = np.random.default_rng(seed)
    tensors = []
    left = 1
    for i in range(L):
        right = 1 if i == L - 1 else min(chi, 4 ** (i + 1), 4 ** (L - i - 1))
        t = rng.standard_normal((left, 2, 2, right)) \
            + 1j * rng.standard_normal((left, 2, 2, right))
        tensors.append(t)
        left = right
    return mp.MPDO(tensors=tensors)


def dense_mpdo_pair(rho):
    """Split a two-site density matrix into an exact 2-tensor MPDO."""
    T = rho.reshape(2, 2, 2, 2)        # (k2,k1,b2,b1): site 1 = LSB
    T = T.transpose(1, 3, 0, 2)        # (k1,b1,k2,b2)
    U, s, Vh = np.linalg.svd(T.reshape(4, 4), full_matrices=False)
    t1 = U.reshape(1, 2, 2, 4)
    t2 = (s[:, None] * Vh).reshape(4, 2, 2, 1)
    return mp.MPDO(tensors=[t1, t2], center=1)


def test_product_mpdo_basics():
    m = mp.product_mpdo([1, 0, 1, 0])
    assert m.bond_dims == [1, 1, 1]
    assert mp.mpdo_trace(m) == 1.0
    dense = mp.to_dense(m)
    assert np.array_equal(dense, dyn.cdw_state(build_basis(4)))
    dens = mp.site_expectations(m, np.diag([0.0, 1.0]).astype(complex))
    assert np.allclose(dens, [1, 0, 1, 0], atol=0)
    with pytest.raises(ValueError):
        mp.product_mpdo([])
    with pytest.raises(ValueError):
        mp.product_mpdo([2, 0])


def test_canonicalize_invariance_and_orthonormality():
    m = random_mpdo(4, 4, seed=3)
    dense0 = mp.to_dense(m)
    for form, center in (("left", None), ("right", None), ("mixed", 2)):
        mc = mp.canonicalize(m, form, center=center)
        assert mp.canonical_residual(mc, form, center) < 1e-12
        dense1 = mp.to_dense(mc)
        assert np.abs(dense1 - dense0).max() < 1e-12 * np.abs(dense0).max()
        # 2-norm normalization: Tr[rho^+ rho] = 1 up to the recorded scale
        bare = dense1 / np.exp(mc.log_scale)
        assert abs(np.linalg.norm(bare) - 1.0) < 1e-12


def test_canonicalize_idempotent():
    m = random_mpdo(5, 6, seed=8)
    m1 = mp.canonicalize(m, "mixed", center=2)
    m2 = mp.canonicalize(m1, "mixed", center=2)
    assert abs(m2.log_scale - m1.log_scale) < 1e-13
    for a, b in zip(m1.tensors, m2.tensors):
        assert np.abs(a - b).max() < 1e-13


def test_bond_gate_identity_and_semigroup():
    p = ModelParams(L=4, h=2.0)
    d = sample_disorder(p, 7)
    g0 = mp.bond_gates(p, d, 0.5, 0.0)
    for g in g0:
        assert np.abs(g.matrix - np.eye(16)).max() == 0.0
    g1 = mp.bond_gates(p, d, 0.5, 0.007)
    g2 = mp.bond_gates(p, d, 0.5, 0.004)
    g3 = mp.bond_gates(p, d, 0.5, 0.011)
    for a, b, c in zip(g1, g2, g3):
        assert np.abs(a.matrix @ b.matrix - c.matrix).max() < 1e-12


def test_bond_generator_is_gate_derivative():
    p = ModelParams(L=3, h=1.0)
    d = sample_disorder(p, 2)
    eps = 1e-6
    for g in mp.bond_gates(p, d, 0.8, eps):
        fd = (g.matrix - np.eye(16)) / eps
        assert np.abs(fd - g.generator).max() < 1e-4


def test_bond_superops_reconstruct_liouvillian():
    zeta = 0.5
    for h, seed, tol in ((0.0, 1, 2e-16), (5.0, 3, 1e-13)):
        p = ModelParams(L=4, h=h)
        d = sample_disorder(p, seed)
        b = build_basis(4)
        full = build_zeta_liouvillian(
            build_hamiltonian(b, p, d), build_jumps(b, p), zeta
        ).matrix.toarray()
        acc = np.zeros_like(full)
        for i in range(1, 4):
            acc = acc + mp.embedded_bond_superop(p, d, zeta, i).toarray()
        scale = max(np.abs(full).max(), 1.0)
        assert np.abs(acc - full).max() <= tol * scale


def test_apply_gate_identity_and_product_state():
    p = ModelParams(L=2, h=1.0)
    d = sample_disorder(p, 4)
    gate = mp.bond_gates(p, d, 1.0, 0.0)[0]
    m = mp.product_mpdo([1, 0])
    before = mp.to_dense(m)
    mp.apply_gate(m, gate, chi_max=4, sv_tol=1e-16)
    assert m.bond_dims == [1]
    assert np.abs(mp.to_dense(m) - before).max() < 1e-13
    with pytest.raises(ValueError):
        mp.apply_gate(m, gate, chi_max=0)


def test_apply_gate_matches_dense_exponential():
    p = ModelParams(L=2, h=3.0)
    d = sample_disorder(p, 5)
    b = build_basis(2)
    zeta, tau = 0.7, 0.013
    gate = mp.bond_gates(p, d, zeta, tau)[0]
    Lfull = build_zeta_liouvillian(
        build_hamiltonian(b, p, d), build_jumps(b, p), zeta
    ).matrix.toarray()
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    rho = A @ A.conj().T
    rho /= np.trace(rho)
    m = dense_mpdo_pair(rho)
    mp.apply_gate(m, gate, chi_max=16, sv_tol=0.0, direction="left")
    ref = devectorize(expm(Lfull * tau) @ vectorize(rho))
    assert np.abs(mp.to_dense(m) - ref).max() < 1e-12


def test_tebd_step_trivial_generator():
    p = ModelParams(L=4, J=0.0, U=0.0, gamma=0.0, h=0.0)
    d = sample_disorder(p, 0)
    m = mp.product_mpdo([1, 0, 1, 0])
    gates = mp.trotter_gates(p, d, 1.0, 1e-2)
    before = mp.to_dense(m)
    for _ in range(5):
        mp.tebd_step(m, gates, chi_max=8)
    assert np.abs(mp.to_dense(m) - before).max() < 1e-13


def test_tebd_matches_dense_trotter_unbounded_chi():
    # same gate sequence applied densely: isolates truncation from Trotter
    for L in (4, 5):
        p = ModelParams(L=L, h=5.0)
        d = sample_disorder(p, 11)
        zeta, dt = 0.5, 1e-2
        odd = [i for i in range(1, L) if i % 2 == 1]
        even = [i for i in range(1, L) if i % 2 == 0]
        D2 = 4**L
        G_half = np.eye(D2, dtype=complex)
        for i in odd:
            G_half = G_half @ expm(mp.embedded_bond_superop(p, d, zeta, i).toarray() * dt / 2)
        G_even = np.eye(D2, dtype=complex)
        for i in even:
            G_even = G_even @ expm(mp.embedded_bond_superop(p, d, zeta, i).toarray() * dt)
        step = G_half @ G_even @ G_half
        occ = [1 if i % 2 == 0 else 0 for i in range(L)]
        v = vectorize(mp.to_dense(mp.product_mpdo(occ)))
        m = mp.product_mpdo(occ)
        gates = mp.trotter_gates(p, d, zeta, dt)
        for _ in range(60):
            v = step @ v
            mp.tebd_step(m, gates, chi_max=10**9, sv_tol=0.0)
        rho_ref = devectorize(v)
        rho_ref /= np.trace(rho_ref)
        rho_tebd = mp.to_dense(m)
        rho_tebd /= np.trace(rho_tebd)
        assert np.abs(rho_tebd - rho_ref).max() < 1e-10


def test_bond_dimension_bounds():
    p = ModelParams(L=6, h=1.0)
    d = sample_disorder(p, 6)
    m = mp.product_mpdo([1, 0, 1, 0, 1, 0])
    gates = mp.trotter_gates(p, d, 1.0, 1e-2)
    chi_max = 12
    for _ in range(20):
        mp.tebd_step(m, gates, chi_max=chi_max)
    for i, D in enumerate(m.bond_dims, start=1):
        assert D <= min(chi_max, 4**i, 4 ** (m.L - i))
    assert m.discarded_weight >= 0.0


def test_trace_and_expectation_against_dense():
    m = random_mpdo(6, 3, seed=21)
    dense = mp.to_dense(m)
    tr = np.trace(dense)
    assert abs(mp.mpdo_trace(m) - tr) < 1e-10 * abs(tr)
    n_op = np.diag([0.0, 1.0]).astype(complex)
    occ_dense = []
    b6 = build_basis(6)
    occ_bits = b6.occupations()
    for i in range(1, 7):
        occ_dense.append(np.trace(np.diag(occ_bits[:, i - 1]) @ dense) / tr)
    vals = mp.site_expectations(m, n_op)
    assert np.abs(vals - np.asarray(occ_dense)).max() < 1e-10
    # operator strings: n_2 n_5
    ops = {2: n_op, 5: n_op}
    ref = np.trace(
        np.diag(occ_bits[:, 1] * occ_bits[:, 4]) @ dense) / tr
    assert abs(mp.mpdo_expectation(m, ops) - ref) < 1e-10
    with pytest.raises(ValueError):
        mp.mpdo_expectation(m, {})
    with pytest.raises(ValueError):
        mp.mpdo_expectation(m, {9: n_op})


def test_tebd_run_pinned_cdw_without_hopping():
    p = ModelParams(L=6, J=0.0, U=2.0, h=8.0)
    d = sample_disorder(p, 1)
    ser = mp.tebd_run(p, d, zeta=1.0, chi_max=8, dt=1e-2, t_max=2.0,
                      sample_every=0.5)
    assert np.abs(ser.channels["imbalance"] - 1.0).max() < 1e-12
    assert ser.meta["max_bond_reached"] == 1
    assert ser.meta["discarded_weight"] < 1e-14


def test_tebd_run_against_exact_small_system():
    p = ModelParams(L=4, h=5.0)
    d = sample_disorder(p, 11)
    b = build_basis(4)
    sup = build_zeta_liouvillian(build_hamiltonian(b, p, d), build_jumps(b, p), 0.5)
    rk = dyn.propagate_nonlinear(dyn.cdw_state(b), sup, 1e-2, 5.0,
                                 sample_every=0.5, basis=b, params=p)
    te = mp.tebd_run(p, d, 0.5, chi_max=64, dt=1e-2, t_max=5.0, sample_every=0.5)
    assert np.abs(rk.channels["imbalance"] - te.channels["imbalance"]).max() < 1e-4
    assert te.meta["imag_residue_max"] < 1e-5
    assert np.array_equal(rk.times, te.times)


def test_tebd_run_aborts_on_imaginary_residue():
    # starving the bond dimension at weak disorder destroys positivity
    p = ModelParams(L=6, h=1.0)
    d = sample_disorder(p, 3)
    with pytest.raises(dyn.NumericalError):
        mp.tebd_run(p, d, zeta=1.0, chi_max=2, dt=1e-2, t_max=10.0,
                    sample_every=0.1, imag_tol=1e-9)
