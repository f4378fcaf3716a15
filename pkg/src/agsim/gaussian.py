"""Gaussian unitaries in Bloch-Messiah form and their mode transformations.

Conventions (see docs/conventions.md):

* a linear-optical unitary with matrix U acts as  U^dag a_i U = sum_j U_ij a_j
* a squeezer acts as  S(s)^dag a S(s) = cosh(s) a + sinh(s) a^dag
* G = U S(r) V  and  G a_i G^dag = sum_k (A_ik a_k + B_ik a_k^dag) with
  A = V^dag cosh(r) U^dag,  B = -V^dag sinh(r) U^T
* push_displacement returns alpha' = A alpha + B conj(alpha), which satisfies
  G^dag D(alpha) G = D(alpha')
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonUnitaryInput, NotSymplectic
from .linalg import is_unitary, takagi
from .tolerances import ROUNDTRIP, SQUEEZE_FLUSH, STRUCTURAL


def _mat(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonUnitaryInput(f"{name} has non-finite entries")
    return X


@dataclass(frozen=True)
class GaussianUnitary:
    """M-mode Gaussian unitary G = U S(r) V with its (A, B) transformation."""

    modes: int
    left_unitary: np.ndarray
    squeeze: np.ndarray
    right_unitary: np.ndarray
    transformA: np.ndarray
    transformB: np.ndarray = field(repr=False)

    @property
    def U(self) -> np.ndarray:
        return self.left_unitary

    @property
    def V(self) -> np.ndarray:
        return self.right_unitary

    @property
    def r(self) -> np.ndarray:
        return self.squeeze

    @property
    def A(self) -> np.ndarray:
        return self.transformA

    @property
    def B(self) -> np.ndarray:
        return self.transformB

    @property
    def n_squeezers(self) -> int:
        return int(np.count_nonzero(self.squeeze))

    @property
    def is_passive(self) -> bool:
        return self.n_squeezers == 0

    @property
    def interferometer(self) -> np.ndarray:
        """Matrix W with G^dag a G = W a when G is passive."""
        return self.transformA.conj().T

    def check(self, tol: float = STRUCTURAL) -> None:
        A, B = self.transformA, self.transformB
        I = np.eye(self.modes)
        if np.max(np.abs(A @ A.conj().T - B @ B.conj().T - I), initial=0) > tol:
            raise NotSymplectic("AA^dag - BB^dag != I")
        if np.max(np.abs(A @ B.T - B @ A.T), initial=0) > tol:
            raise NotSymplectic("AB^T != BA^T")

    def fingerprint(self) -> str:
        data = np.round(np.concatenate([self.transformA.ravel(), self.transformB.ravel()]), 12)
        return format(hash(data.tobytes()) & 0xFFFFFFFFFFFF, "012x")

    @classmethod
    def identity(cls, modes: int) -> "GaussianUnitary":
        I = np.eye(modes, dtype=complex)
        return compose_bloch_messiah(I, np.zeros(modes), I)


def compose_bloch_messiah(U, r, V) -> GaussianUnitary:
    """Build (A, B) from the factored form U S(r) V."""
    U = _mat(U, "U")
    V = _mat(V, "V")
    r = np.asarray(r, dtype=float).reshape(-1)
    M = U.shape[0]
    if V.shape[0] != M or r.shape[0] != M:
        raise DimensionMismatch(f"U is {M}x{M}, V is {V.shape}, r has length {r.shape[0]}")
    if not is_unitary(U):
        raise NonUnitaryInput("U is not unitary to 1e-10")
    if not is_unitary(V):
        raise NonUnitaryInput("V is not unitary to 1e-10")
    r = np.where(np.abs(r) < SQUEEZE_FLUSH, 0.0, r)
    Vd = V.conj().T
    A = (Vd * np.cosh(r)[None, :]) @ U.conj().T
    B = -(Vd * np.sinh(r)[None, :]) @ U.T
    return GaussianUnitary(M, U, r, V, A, B)


def decompose_bloch_messiah(A, B) -> GaussianUnitary:
    """Recover U, r, V from (A, B).

    Q = -A^{-1} B is complex symmetric with Takagi form U tanh(r) U^T; then
    V = cosh(r)^{-1} U^dag A^dag.  Squeezing comes out nonnegative and sorted
    descending, and the phase freedom is absorbed into V.
    """
    A = _mat(A, "A")
    B = _mat(B, "B")
    M = A.shape[0]
    if B.shape[0] != M:
        raise DimensionMismatch("A and B must have the same size")
    I = np.eye(M)
    e1 = np.max(np.abs(A @ A.conj().T - B @ B.conj().T - I), initial=0)
    e2 = np.max(np.abs(A @ B.T - B @ A.T), initial=0)
    if e1 > ROUNDTRIP or e2 > ROUNDTRIP:
        raise NotSymplectic(f"symplectic residuals {e1:.2e}, {e2:.2e} exceed {ROUNDTRIP}")
    Q = -np.linalg.solve(A, B)
    U, t = takagi(0.5 * (Q + Q.T), rank_tol=1e-14)
    t = np.clip(t, 0.0, 1.0 - 1e-16)
    r = np.arctanh(t)
    r = np.where(r < SQUEEZE_FLUSH, 0.0, r)
    V = (U.conj().T @ A.conj().T) / np.cosh(r)[:, None]
    # re-orthonormalize against rounding; the correction is at machine precision
    Uv, _, Wv = np.linalg.svd(V)
    V = Uv @ Wv
    return compose_bloch_messiah(U, r, V)


def from_transform(A, B) -> GaussianUnitary:
    return decompose_bloch_messiah(A, B)


def push_displacement(G: GaussianUnitary, alpha) -> np.ndarray:
    """alpha' = A alpha + B conj(alpha), so that D^dag(alpha') = G^dag D^dag(alpha) G."""
    alpha = np.asarray(alpha, dtype=complex)
    if alpha.shape[-1] != G.modes:
        raise DimensionMismatch(f"displacement has {alpha.shape[-1]} entries for {G.modes} modes")
    return alpha @ G.transformA.T + alpha.conj() @ G.transformB.T


def compose(*gates: GaussianUnitary) -> GaussianUnitary:
    """Operator product gates[0] @ gates[1] @ ... (rightmost acts first)."""
    if not gates:
        raise ValueError("compose needs at least one gate")
    M = gates[0].modes
    if any(g.modes != M for g in gates):
        raise DimensionMismatch("all gates must act on the same number of modes")
    # (G2 G1) a (G2 G1)^dag = A1 (A2 a + B2 a^dag) + B1 (A2* a^dag + B2* a)
    acc_A, acc_B = gates[-1].transformA, gates[-1].transformB
    for g in reversed(gates[:-1]):
        A2, B2 = g.transformA, g.transformB
        acc_A, acc_B = acc_A @ A2 + acc_B @ B2.conj(), acc_A @ B2 + acc_B @ A2.conj()
    return decompose_bloch_messiah(acc_A, acc_B)


def adjoint(G: GaussianUnitary) -> GaussianUnitary:
    """G^dag, whose action is G^dag a G = A^dag a - B^T a^dag."""
    return decompose_bloch_messiah(G.transformA.conj().T, -G.transformB.T)


# gate constructors ------------------------------------------------------------


def interferometer(W) -> GaussianUnitary:
    """Passive unitary with W^dag a W = W a (the matrix convention above)."""
    W = _mat(W, "W")
    return compose_bloch_messiah(W, np.zeros(W.shape[0]), np.eye(W.shape[0]))


def squeezer(modes: int, mode: int, r: float) -> GaussianUnitary:
    rv = np.zeros(modes)
    rv[mode] = r
    I = np.eye(modes, dtype=complex)
    if r < 0:
        # S(-r) = R(pi/2) S(r) R(-pi/2) up to the phase convention; keep r >= 0 in the factored form
        P = np.eye(modes, dtype=complex)
        P[mode, mode] = 1j
        rv[mode] = -r
        return compose_bloch_messiah(P, rv, P.conj().T)
    return compose_bloch_messiah(I, rv, I)


def beamsplitter_matrix(modes: int, i: int, j: int, theta: float, phi: float = 0.0) -> np.ndarray:
    W = np.eye(modes, dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    W[i, i] = c
    W[i, j] = -np.exp(-1j * phi) * s
    W[j, i] = np.exp(1j * phi) * s
    W[j, j] = c
    return W


def phase_matrix(modes: int, i: int, phi: float) -> np.ndarray:
    W = np.eye(modes, dtype=complex)
    W[i, i] = np.exp(1j * phi)
    return W


def beamsplitter(modes: int, i: int, j: int, theta: float, phi: float = 0.0) -> GaussianUnitary:
    return interferometer(beamsplitter_matrix(modes, i, j, theta, phi))


def phase_shifter(modes: int, phases) -> GaussianUnitary:
    """P(phi) = exp(i phi . n), i.e. P^dag a_j P = exp(i phi_j) a_j."""
    phases = np.asarray(phases, dtype=float).reshape(modes)
    return interferometer(np.diag(np.exp(1j * phases)))


# conjugated phase shifters -----------------------------------------------------


@dataclass(frozen=True)
class LowRankConjugation:
    """Low-rank data of G0^dag P(phi) G0.

    The conjugated unitary acts as  a -> (I + W) a + Z a^dag  with
    W = sum_j u^(j) v^(j)^T and Z = sum_j w^(j) z^(j)^T (columns of the factor
    arrays), and C = Z^T + W Z^T.
    """

    W: np.ndarray
    Z: np.ndarray
    rank_bound: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    z: np.ndarray
    C: np.ndarray
    phases: np.ndarray
    vacuum_amplitude: complex


def vacuum_expectation_of_conjugated(G: GaussianUnitary, s) -> complex:
    """<0| G^dag s^n G |0> for a diagonal s^n with |s_j| <= 1.

    With G|0> proportional to exp(a^dag Q a^dag / 2)|0>, Q = -A^{-1}B, this is
    sqrt(det(I - Q^dag Q)) * det(I - conj(Q) S Q S)^(-1/2), where the square
    root follows the principal branch eigenvalue by eigenvalue (all |lambda| < 1).
    """
    s = np.asarray(s, dtype=complex).reshape(G.modes)
    Q = -np.linalg.solve(G.transformA, G.transformB)
    norm2 = np.prod(np.sqrt(np.clip(1.0 - np.tanh(G.squeeze) ** 2, 0.0, None)))
    lam = np.linalg.eigvals(Q.conj() @ (s[:, None] * Q * s[None, :]))
    return complex(norm2 * np.prod(1.0 / np.sqrt(1.0 - lam)))


def conjugate_phase_shifter(G0: GaussianUnitary, phases) -> tuple[GaussianUnitary, LowRankConjugation]:
    """G_hat = G0^dag P(phi) G0 together with its rank-2L W/Z structure."""
    phases = np.asarray(phases, dtype=float).reshape(-1)
    if phases.shape[0] != G0.modes:
        raise DimensionMismatch(f"{phases.shape[0]} phases for {G0.modes} modes")
    A, B = G0.transformA, G0.transformB
    idx = np.flatnonzero(phases)
    ep = np.exp(1j * phases[idx]) - 1.0
    em = np.exp(-1j * phases[idx]) - 1.0
    Aj, Bj = A[:, idx], B[:, idx]
    u = np.hstack([Aj * ep[None, :], -Bj * em[None, :]])
    v = np.hstack([Aj.conj(), Bj.conj()])
    w = np.hstack([-Aj * ep[None, :], Bj * em[None, :]])
    z = np.hstack([Bj, Aj])
    M = G0.modes
    W = u @ v.T if idx.size else np.zeros((M, M), complex)
    Z = w @ z.T if idx.size else np.zeros((M, M), complex)
    C = Z.T + W @ Z.T
    # G_hat a G_hat^dag = A_hat a + B_hat a^dag with A_hat = (I + W)^dag, B_hat = -Z^T
    Ghat = decompose_bloch_messiah((np.eye(M) + W).conj().T, -Z.T)
    vac = vacuum_expectation_of_conjugated(G0, np.exp(1j * phases))
    conj = LowRankConjugation(W, Z, 2 * int(idx.size), u, v, w, z, C, phases.copy(), vac)
    return Ghat, conj
