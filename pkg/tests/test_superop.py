import numpy as np
import pytest
from math import comb

from zetalind.fock import build_basis
from zetalind.model import (
    ModelParams,
    build_hamiltonian,
    build_jumps,
    build_nonhermitian,
    sample_disorder,
    total_number_op,
)
from zetalind.superop import (
    build_zeta_liouvillian,
    charge_sectors,
    devectorize,
    sector_charges,
    sector_indices,
    symmetry_residual,
    vectorize,
)


def make_system(L, h=2.0, seed=0):
    b = build_basis(L)
    p = ModelParams(L=L, h=h)
    d = sample_disorder(p, seed)
    H = build_hamiltonian(b, p, d)
    jumps = build_jumps(b, p)
    return b, p, d, H, jumps


def test_vectorize_identity_and_roundtrip():
    assert np.array_equal(vectorize(np.eye(2)), np.array([1, 0, 0, 1]))
    rng = np.random.default_rng(4)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.array_equal(devectorize(vectorize(m)), m)
    with pytest.raises(ValueError):
        vectorize(np.ones((2, 3)))
    with pytest.raises(ValueError):
        devectorize(np.ones(5))


def test_vectorize_kron_convention():
    # (B^T kron A) vec(rho) = vec(A rho B) for the column-stacking convention
    rng = np.random.default_rng(11)
    for _ in range(5):
        A, B, rho = (
            rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            for _ in range(3)
        )
        lhs = np.kron(B.T, A) @ vectorize(rho)
        assert np.allclose(lhs, vectorize(A @ rho @ B), atol=1e-14)


def test_trace_preservation_at_unit_fugacity():
    # the identity row annihilates L_1; zero up to float summation order
    b, p, d, H, jumps = make_system(3)
    sup = build_zeta_liouvillian(H, jumps, 1.0)
    left = vectorize(np.eye(b.dim)) @ sup.matrix
    left = left.toarray() if hasattr(left, "toarray") else np.asarray(left)
    assert np.abs(left).max() < 1e-14


def test_zeta_zero_matches_nonhermitian_action():
    b, p, d, H, jumps = make_system(2, h=1.5, seed=9)
    sup = build_zeta_liouvillian(H, jumps, 0.0)
    Ht = build_nonhermitian(b, p, d, include_decay_offset=True).toarray()
    rng = np.random.default_rng(1)
    rho = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    lhs = devectorize(sup.matrix @ vectorize(rho))
    rhs = -1j * (Ht @ rho - rho @ Ht.conj().T)
    assert np.allclose(lhs, rhs, atol=1e-14)


def test_linearity_in_zeta():
    b, p, d, H, jumps = make_system(2)
    sup = build_zeta_liouvillian(H, jumps, 0.5)
    half = 0.5 * (sup.at_zeta(0.0).matrix + sup.at_zeta(1.0).matrix)
    assert np.abs((sup.matrix - half)).max() == 0.0


def test_zeta_range_guard():
    b, p, d, H, jumps = make_system(2)
    with pytest.raises(ValueError):
        build_zeta_liouvillian(H, jumps, 1.5)
    with pytest.warns(UserWarning):
        build_zeta_liouvillian(H, jumps, 1.5, allow_extrapolation=True)


def test_sector_dimensions():
    b, p, d, H, jumps = make_system(2)
    sup = build_zeta_liouvillian(H, jumps, 1.0)
    blocks = charge_sectors(sup, b)
    dims = {bl.q: len(bl.indices) for bl in blocks}
    assert dims[0] == 6                      # sum_N C(2,N)^2 = C(4,2)
    assert sum(dims.values()) == 4**2
    assert set(dims) == {-2, -1, 0, 1, 2}
    # q=0 dimension formula at larger L without building the superoperator
    for L in (4, 6, 8):
        q = sector_charges(build_basis(L))
        assert int((q == 0).sum()) == comb(2 * L, L)


def test_sector_closure_under_application():
    b, p, d, H, jumps = make_system(3, h=1.0, seed=2)
    sup = build_zeta_liouvillian(H, jumps, 0.7)
    charges = sector_charges(b)
    rng = np.random.default_rng(0)
    for q in (-1, 0, 2):
        idx = sector_indices(b, q)
        for _ in range(20):
            v = np.zeros(sup.dim, dtype=complex)
            v[idx] = rng.standard_normal(len(idx)) + 1j * rng.standard_normal(len(idx))
            out = sup.matrix @ v
            assert np.abs(out[charges != q]).max() == 0.0


def test_offblock_entries_exactly_zero():
    b, p, d, H, jumps = make_system(2, h=0.5, seed=5)
    sup = build_zeta_liouvillian(H, jumps, 0.3)
    charges = sector_charges(b)
    M = sup.matrix.toarray()
    mask = charges[:, None] != charges[None, :]
    assert np.abs(M[mask]).max() == 0.0


def multiset_close(a, b, tol):
    # greedy nearest matching; lexicographic complex sort scrambles
    # near-degenerate values between two independent eigensolves
    a = list(a)
    b = np.asarray(b, dtype=complex)
    used = np.zeros(len(b), dtype=bool)
    worst = 0.0
    for x in a:
        d = np.abs(b - x)
        d[used] = np.inf
        k = int(np.argmin(d))
        used[k] = True
        worst = max(worst, d[k])
    return worst <= tol


def test_spectrum_equals_union_of_sector_spectra():
    for L in (2, 3):
        b, p, d, H, jumps = make_system(L, h=1.0, seed=L)
        sup = build_zeta_liouvillian(H, jumps, 0.6)
        full = np.linalg.eigvals(sup.matrix.toarray())
        pieces = [np.linalg.eigvals(bl.block) for bl in charge_sectors(sup, b)]
        union = np.concatenate(pieces)
        assert len(full) == len(union)
        assert multiset_close(full, union, 1e-8)


def test_sector_spectra_conjugate_pairs():
    # L(rho^+) = (L rho)^+ maps sector q to -q: their spectra are conjugate
    b, p, d, H, jumps = make_system(3, h=2.0, seed=13)
    sup = build_zeta_liouvillian(H, jumps, 0.8)
    blocks = {bl.q: bl.block for bl in charge_sectors(sup, b)}
    for q in (1, 2, 3):
        wq = np.linalg.eigvals(blocks[q])
        wmq = np.conj(np.linalg.eigvals(blocks[-q]))
        assert multiset_close(wq, wmq, 1e-8)


def test_symmetry_residuals():
    b, p, d, H, jumps = make_system(2, h=1.0, seed=3)
    N = total_number_op(b)
    for zeta in (0.0, 0.5, 1.0):
        sup = build_zeta_liouvillian(H, jumps, zeta)
        assert symmetry_residual(sup, N, "N_minus") == 0.0
    assert symmetry_residual(build_zeta_liouvillian(H, jumps, 0.0), N, "N_plus") == 0.0
    assert symmetry_residual(build_zeta_liouvillian(H, jumps, 1.0), N, "N_plus") > 0.0


def test_symmetry_residual_budget():
    b, p, d, H, jumps = make_system(3)
    sup = build_zeta_liouvillian(H, jumps, 1.0)
    with pytest.raises(ValueError):
        symmetry_residual(sup, total_number_op(b), "N_minus", max_dim=32)
