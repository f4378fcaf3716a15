import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agsim.errors import NotSymplectic
from agsim.fock import WorkingSpace
from agsim.gaussian import (
    GaussianUnitary,
    adjoint,
    beamsplitter,
    compose,
    compose_bloch_messiah,
    conjugate_phase_shifter,
    decompose_bloch_messiah,
    interferometer,
    phase_shifter,
    push_displacement,
    squeezer,
)
from agsim.linalg import is_unitary, numerical_rank, takagi
from helpers import haar, random_gaussian


def test_identity_transform():
    G = compose_bloch_messiah(np.eye(2), [0, 0], np.eye(2))
    np.testing.assert_allclose(G.A, np.eye(2))
    np.testing.assert_allclose(G.B, 0)


def test_single_mode_squeezer_transform():
    s = 0.37
    G = compose_bloch_messiah(np.eye(1), [s], np.eye(1))
    np.testing.assert_allclose(G.A, [[np.cosh(s)]])
    np.testing.assert_allclose(G.B, [[-np.sinh(s)]])


def test_transform_matches_componentwise_sums():
    U, V = haar(3, 1), haar(3, 2)
    r = np.array([0.3, 0, 0])
    G = compose_bloch_messiah(U, r, V)
    A = np.einsum("ji,j,kj->ik", V.conj(), np.cosh(r), U.conj())
    B = -np.einsum("ji,j,kj->ik", V.conj(), np.sinh(r), U)
    np.testing.assert_allclose(G.A, A, atol=1e-10)
    np.testing.assert_allclose(G.B, B, atol=1e-10)
    G.check()
    assert numerical_rank(G.B) == 1


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_roundtrip(seed, M):
    G = random_gaussian(M, seed, squeeze=0.5, n_squeezers=M)
    H = decompose_bloch_messiah(G.A, G.B)
    np.testing.assert_allclose(H.A, G.A, atol=1e-8)
    np.testing.assert_allclose(H.B, G.B, atol=1e-8)
    assert is_unitary(H.U) and is_unitary(H.V)
    assert np.all(H.r >= 0)


def test_decompose_identity_and_squeezer():
    G = decompose_bloch_messiah(np.eye(2), np.zeros((2, 2)))
    assert np.all(G.r == 0)
    np.testing.assert_allclose(G.U @ G.V, np.eye(2), atol=1e-12)
    s = 0.4
    H = decompose_bloch_messiah([[np.cosh(s)]], [[-np.sinh(s)]])
    assert H.r[0] == pytest.approx(s)


def test_non_symplectic_rejected():
    with pytest.raises(NotSymplectic):
        decompose_bloch_messiah(2 * np.eye(2), np.zeros((2, 2)))


def test_compose_and_adjoint():
    G = random_gaussian(3, 4)
    I = compose(G, adjoint(G))
    np.testing.assert_allclose(I.A, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(I.B, 0, atol=1e-10)


def test_push_identity():
    a = np.array([0.3 + 0.1j, -0.2j])
    np.testing.assert_allclose(push_displacement(GaussianUnitary.identity(2), a), a)


def test_push_phase_shifter():
    phi = 0.9
    out = push_displacement(phase_shifter(1, [phi]), np.array([1.0]))
    assert out[0] == pytest.approx(np.exp(-1j * phi))


@pytest.mark.parametrize("G", [squeezer(2, 0, 0.4), random_gaussian(2, 9)])
def test_push_matches_fock_conjugation(G):
    # G^dag D(alpha) G = D(alpha') checked on the vacuum
    alpha = np.array([0.4 - 0.2j, 0.1j])
    ap = push_displacement(G, alpha)
    ws = WorkingSpace(2, 40)
    vac = np.zeros(ws.dim, complex)
    vac[0] = 1
    lhs = ws.apply_gaussian(adjoint(G), ws.apply_displacement(alpha, ws.apply_gaussian(G, vac)))
    rhs = ws.apply_displacement(ap, vac)
    assert abs(np.vdot(rhs, lhs) - 1) < 1e-9


def test_conjugate_zero_phases_is_identity():
    G0 = random_gaussian(3, 5)
    Gh, c = conjugate_phase_shifter(G0, np.zeros(3))
    assert np.all(c.W == 0) and np.all(c.Z == 0)
    np.testing.assert_allclose(Gh.A, np.eye(3), atol=1e-10)


def test_conjugate_passive_has_no_z():
    G0 = interferometer(haar(3, 8))
    _, c = conjugate_phase_shifter(G0, np.array([0.7, 0, 0]))
    np.testing.assert_allclose(c.Z, 0, atol=1e-12)
    assert numerical_rank(c.W) <= 2


@given(st.integers(0, 10_000), st.integers(1, 2))
def test_conjugation_rank_bound(seed, L):
    M = 4
    G0 = random_gaussian(M, seed)
    phases = np.zeros(M)
    phases[:L] = np.random.default_rng(seed).uniform(0.1, 3, L)
    Gh, c = conjugate_phase_shifter(G0, phases)
    for X in (c.W, c.Z):
        sv = np.linalg.svd(X, compute_uv=False)
        assert np.all(sv[2 * L :] < 1e-10)
    assert np.count_nonzero(Gh.r > 1e-12) <= 2 * L
    np.testing.assert_allclose(c.C, c.C.T, atol=1e-10)


def test_conjugated_unitary_equals_product():
    G0 = random_gaussian(3, 12)
    phases = np.array([0.5, 0, 0])
    Gh, _ = conjugate_phase_shifter(G0, phases)
    ref = compose(adjoint(G0), phase_shifter(3, phases), G0)
    np.testing.assert_allclose(Gh.A, ref.A, atol=1e-10)
    np.testing.assert_allclose(Gh.B, ref.B, atol=1e-10)


@given(st.integers(0, 10_000))
def test_takagi_reconstructs(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    S = X + X.T
    U, s = takagi(S)
    np.testing.assert_allclose(U @ np.diag(s) @ U.T, S, atol=1e-10)


def test_beamsplitter_is_unitary():
    G = beamsplitter(3, 0, 2, 0.3, 0.8)
    assert G.is_passive and is_unitary(G.interferometer)
