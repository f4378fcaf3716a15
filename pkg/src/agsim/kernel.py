"""Bargmann kernels of Gaussian-type operators and their overlaps with product states.

For an operator X built from a Gaussian unitary, diagonal phase/vacuum filters
and displacements, the matrix element between unnormalized coherent states
|w) = exp(w . a^dag)|0> is

    (z| X |w) = exp(c + bz . z* + bw . w + v^T K v / 2),   v = (z*, w).

Splitting K = K0 + Delta with K0 = [[0, I], [I, 0]] and factoring the
low-rank part Delta = F F^T turns the Gaussian factor exp(v^T Delta v / 2)
into an average over a standard normal vector y, so <phi|X|psi> becomes
E_y prod_i Q_i(g_i(y), h_i(y)) with per-mode polynomials Q_i.  The expectation
is taken exactly, either by (e-1)!! extraction on the polynomial expansion
or by Gauss-Hermite quadrature of sufficient order.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb, factorial

import numpy as np

from .errors import CapOverflow, DimensionMismatch, RankTooLarge
from .gaussian import GaussianUnitary, vacuum_expectation_of_conjugated
from .linalg import symmetric_lowrank_factor
from .poly import SparsePoly, extract_matched_degree_sum, linear_powers, poly_mul_truncated
from .states import ProductState
from .tolerances import RANK_CUT

MAX_RANK = 16
QUAD_NODE_GUARD = 20_000_000


@dataclass(frozen=True)
class GaussianKernel:
    """Coefficients (c, bz, bw, K11, K12, K22) of a Bargmann kernel.

    ``logc``, ``bz`` and ``bw`` may carry a leading batch axis; the quadratic
    part is shared.
    """

    modes: int
    logc: np.ndarray
    bz: np.ndarray
    bw: np.ndarray
    K11: np.ndarray
    K12: np.ndarray
    K22: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return np.block([[self.K11, self.K12], [self.K12.T, self.K22]])

    @property
    def batched(self) -> bool:
        return np.ndim(self.logc) > 0

    def displaced(self, left=None, right=None) -> "GaussianKernel":
        """Kernel of D(left) X D(right); either argument may be batched (S, M)."""
        logc, bz, bw = np.asarray(self.logc, complex), np.asarray(self.bz, complex), np.asarray(self.bw, complex)
        if right is not None:
            eta = np.asarray(right, dtype=complex)
            logc = (
                logc
                + np.sum(bw * eta, axis=-1)
                + 0.5 * np.einsum("...i,ij,...j->...", eta, self.K22, eta)
                - 0.5 * np.sum(np.abs(eta) ** 2, axis=-1)
            )
            bz = bz + eta @ self.K12.T
            bw = bw + eta @ self.K22.T - eta.conj()
        if left is not None:
            gc = np.conj(np.asarray(left, dtype=complex))
            logc = (
                logc
                - np.sum(bz * gc, axis=-1)
                + 0.5 * np.einsum("...i,ij,...j->...", gc, self.K11, gc)
                - 0.5 * np.sum(np.abs(gc) ** 2, axis=-1)
            )
            bz = bz + gc.conj() - gc @ self.K11.T
            bw = bw - gc @ self.K12
        return replace(self, logc=logc, bz=bz, bw=bw)

    def scaled(self, factor: complex) -> "GaussianKernel":
        return replace(self, logc=np.asarray(self.logc, complex) + np.log(complex(factor)))

    def lowrank_factor(self, rank_tol: float = RANK_CUT) -> np.ndarray:
        M = self.modes
        I = np.eye(M)
        delta = np.block([[self.K11, self.K12 - I], [self.K12.T - I, self.K22]])
        if np.max(np.abs(delta), initial=0) == 0:
            return np.zeros((2 * M, 0), complex)
        return symmetric_lowrank_factor(delta, rank_tol)

    def element(self, n, m) -> complex:
        """<n|X|m> for Fock patterns n, m (unbatched kernels; small patterns only)."""
        phi = ProductState.fock(n, max(max(n), 0))
        psi = ProductState.fock(m, max(max(m), 0))
        return overlap(self, phi, psi)


def identity_kernel(modes: int) -> GaussianKernel:
    Z = np.zeros((modes, modes), complex)
    return GaussianKernel(modes, np.asarray(0j), np.zeros(modes, complex), np.zeros(modes, complex), Z, np.eye(modes, dtype=complex), Z)


def unitary_kernel(G: GaussianUnitary, vacuum_amplitude: complex) -> GaussianKernel:
    """Kernel of G itself, given the phase-carrying amplitude <0|G|0>."""
    A, B = G.transformA, G.transformB
    Ainv = np.linalg.inv(A)
    K11 = -Ainv @ B
    K22 = B.conj() @ Ainv
    M = G.modes
    return GaussianKernel(
        M,
        np.asarray(np.log(complex(vacuum_amplitude))),
        np.zeros(M, complex),
        np.zeros(M, complex),
        0.5 * (K11 + K11.T),
        Ainv,
        0.5 * (K22 + K22.T),
    )


def conjugated_kernel(G: GaussianUnitary, s) -> GaussianKernel:
    """Kernel of X = G^dag s^n G for a diagonal filter s (|s_j| <= 1).

    s_j = exp(i phi_j) gives a conjugated phase shifter, s_j = 0 the vacuum
    projector on mode j, s_j = 1 leaves mode j alone.  The quadratic part
    follows from the intertwining relations a~_j X = s_j X a~_j and
    X a~_j^dag = s_j a~_j^dag X with a~ = G^dag a G.
    """
    M = G.modes
    s = np.asarray(s, dtype=complex).reshape(M)
    A, B = G.transformA, G.transformB
    S = np.diag(s)
    Ad, At, Bd, Bt = A.conj().T, A.T, B.conj().T, B.T
    N = np.block([[Ad, S @ Bt], [S @ Bd, At]])
    left = np.linalg.solve(N, np.vstack([Bt, S @ At]))
    right = np.linalg.solve(N, np.vstack([S @ Ad, Bd]))
    K11, K12, K22 = left[:M], right[:M], right[M:]
    vac = vacuum_expectation_of_conjugated(G, s)
    return GaussianKernel(
        M,
        np.asarray(np.log(vac)),
        np.zeros(M, complex),
        np.zeros(M, complex),
        0.5 * (K11 + K11.T),
        K12,
        0.5 * (K22 + K22.T),
    )


# per-mode polynomials -------------------------------------------------------------


def mode_table(phi_vec: np.ndarray, psi_vec: np.ndarray) -> np.ndarray:
    """q[p, q] = sum_l conj(phi_{p+l}) psi_{q+l} sqrt((p+l)!(q+l)!) / (l! p! q!).

    Q(g, h) = sum_{p,q} q[p, q] g^p h^q is the contribution of one mode to
    <phi|X|psi> once the kernel is written as exp(g z* + h w + z* w).
    """
    dp = _degree(phi_vec)
    dq = _degree(psi_vec)
    out = np.zeros((dp + 1, dq + 1), dtype=complex)
    for p in range(dp + 1):
        for q in range(dq + 1):
            acc = 0j
            for l in range(min(dp - p, dq - q) + 1):
                n, m = p + l, q + l
                acc += (
                    np.conj(phi_vec[n]) * psi_vec[m] * np.sqrt(float(factorial(n) * factorial(m)))
                    / (factorial(l) * factorial(p) * factorial(q))
                )
            out[p, q] = acc
    return out


def _degree(v: np.ndarray) -> int:
    nz = np.flatnonzero(np.asarray(v))
    return int(nz[-1]) if nz.size else 0


def _tables(phi: ProductState, psi: ProductState) -> list:
    if phi.modes != psi.modes:
        raise DimensionMismatch("bra and ket states disagree on the mode count")
    return [mode_table(phi.coeffs[i], psi.coeffs[i]) for i in range(phi.modes)]


# overlap evaluation ---------------------------------------------------------------


def overlap(kernel: GaussianKernel, phi: ProductState, psi: ProductState, method: str = "auto", F=None):
    """<phi|X|psi> for the operator X described by ``kernel``."""
    if kernel.modes != psi.modes:
        raise DimensionMismatch("kernel and states disagree on the mode count")
    tables = _tables(phi, psi)
    if F is None:
        F = kernel.lowrank_factor()
    r = F.shape[1]
    if r > MAX_RANK:
        raise RankTooLarge(f"kernel rank {r} exceeds {MAX_RANK}")
    if kernel.batched:
        return OverlapEvaluator(kernel, phi, psi, F=F).evaluate(kernel.logc, kernel.bz, kernel.bw)
    if method == "auto":
        D = sum(t.shape[0] + t.shape[1] - 2 for t in tables)
        method = "poly" if (D + 1) ** r <= 2**20 else "quadrature"
    if method == "poly":
        val = _overlap_poly(kernel, tables, F)
    elif method == "quadrature":
        val = _overlap_quadrature(kernel, tables, F)
    else:
        raise ValueError(f"unknown overlap method {method!r}")
    return complex(np.exp(complex(kernel.logc)) * val)


def _overlap_poly(kernel, tables, F) -> complex:
    M, r = kernel.modes, F.shape[1]
    D = sum(t.shape[0] + t.shape[1] - 2 for t in tables)
    if r == 0:
        return complex(np.prod([_eval_table(t, kernel.bz[i], kernel.bw[i]) for i, t in enumerate(tables)]))
    caps = (D,) * r
    total = SparsePoly.constant(caps, 1.0)
    for i, t in enumerate(tables):
        f = mode_polynomial(caps, t, F[i], kernel.bz[i], F[M + i], kernel.bw[i])
        total = poly_mul_truncated(total, f)
    return extract_matched_degree_sum(total, range(r), (), "double_factorial")


def mode_polynomial(caps, table: np.ndarray, g_coeffs, g_const, h_coeffs, h_const) -> SparsePoly:
    """Q(g, h) = sum_{p,q} table[p, q] g^p h^q for linear forms g and h in the indeterminates."""
    g = SparsePoly.linear(caps, g_coeffs, g_const)
    h = SparsePoly.linear(caps, h_coeffs, h_const)
    gp = linear_powers(g, table.shape[0] - 1)
    hp = linear_powers(h, table.shape[1] - 1)
    f = SparsePoly.zero(caps)
    for p in range(table.shape[0]):
        for q in range(table.shape[1]):
            if table[p, q] != 0:
                f = f + poly_mul_truncated(gp[p], hp[q]).scale(table[p, q])
    return f


def _eval_table(t: np.ndarray, g, h):
    g = np.asarray(g)
    h = np.asarray(h)
    gp = g[..., None] ** np.arange(t.shape[0])
    hp = h[..., None] ** np.arange(t.shape[1])
    return np.einsum("...p,pq,...q->...", gp, t, hp)


def _gh_nodes(r: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite rule for N(0, I_r), exact up to total ``degree``."""
    nq = degree // 2 + 1
    if nq**r > QUAD_NODE_GUARD:
        raise CapOverflow(f"{nq}^{r} quadrature nodes exceed the guard")
    x, w = np.polynomial.hermite_e.hermegauss(nq)
    w = w / np.sqrt(2 * np.pi)
    grids = np.meshgrid(*([x] * r), indexing="ij")
    wgrid = np.meshgrid(*([w] * r), indexing="ij")
    Y = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    return Y, W


def _overlap_quadrature(kernel, tables, F) -> complex:
    M, r = kernel.modes, F.shape[1]
    D = sum(t.shape[0] + t.shape[1] - 2 for t in tables)
    Y, W = _gh_nodes(r, D)
    vals = np.ones(Y.shape[0], dtype=complex)
    for i, t in enumerate(tables):
        g = kernel.bz[i] + Y @ F[i]
        h = kernel.bw[i] + Y @ F[M + i]
        vals *= _eval_table(t, g, h)
    return complex(np.sum(W * vals))


class OverlapEvaluator:
    """Batched <phi|X_s|psi> for kernels that share K and differ in (c, bz, bw).

    The Gaussian average over y is carried out once, leaving a polynomial in
    the linear coefficients (bz_i, bw_i) with degree at most deg(phi_i) and
    deg(psi_i) in each; evaluating it per sample costs one tensor contraction.
    """

    def __init__(self, kernel: GaussianKernel, phi: ProductState, psi: ProductState, F=None):
        self.modes = kernel.modes
        self.tables = _tables(phi, psi)
        F = kernel.lowrank_factor() if F is None else F
        self.rank = F.shape[1]
        M = self.modes
        D = sum(t.shape[0] + t.shape[1] - 2 for t in self.tables)
        shape = tuple(d for t in self.tables for d in t.shape)
        if int(np.prod(shape)) * max(1, (D // 2 + 1) ** self.rank) > 4 * QUAD_NODE_GUARD:
            raise CapOverflow("batched overlap precomputation exceeds its guard")
        Y, W = _gh_nodes(self.rank, D) if self.rank else (np.zeros((1, 0)), np.ones(1))
        factors = []
        for i, t in enumerate(self.tables):
            ay = Y @ F[i] if self.rank else np.zeros(1, complex)
            cy = Y @ F[M + i] if self.rank else np.zeros(1, complex)
            factors.append(_shifted_table(t, ay, cy))
        letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
        subs = [f"z{letters[2 * i]}{letters[2 * i + 1]}" for i in range(M)]
        expr = "z," + ",".join(subs) + "->" + "".join(letters[: 2 * M])
        self.coeffs = np.einsum(expr, W.astype(complex), *factors, optimize="greedy")

    def evaluate(self, logc, bz, bw) -> np.ndarray:
        bz = np.atleast_2d(np.asarray(bz, complex))
        bw = np.atleast_2d(np.asarray(bw, complex))
        S = bz.shape[0]
        shape = self.coeffs.shape
        # coefficient axes run (z_0, w_0, z_1, w_1, ...); contract from the last one
        vars_ = [v for i in range(self.modes) for v in (bz[:, i], bw[:, i])]
        d = shape[-1]
        # largest contraction as one matmul, the shrinking rest by batched Horner
        X = (self.coeffs.reshape(-1, d) @ (vars_[-1][:, None] ** np.arange(d)).T).T
        for k in range(len(shape) - 2, -1, -1):
            X = X.reshape(S, -1, shape[k])
            x = vars_[k][:, None]
            Y = X[..., -1]
            for j in range(shape[k] - 2, -1, -1):
                Y = Y * x + X[..., j]
            X = Y
        return np.exp(np.asarray(logc, complex)) * X.reshape(S)


def _shifted_table(t: np.ndarray, ay: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """R[n, p', q'] = sum_{p>=p', q>=q'} t[p,q] C(p,p') C(q,q') ay^(p-p') cy^(q-q')."""
    P, Q = t.shape
    Cp = np.array([[comb(p, pp) for p in range(P)] for pp in range(P)], dtype=float)
    Cq = np.array([[comb(q, qq) for q in range(Q)] for qq in range(Q)], dtype=float)
    # powers[n, pp, p] = ay^(p-pp) for p >= pp
    dp = np.arange(P)[None, :] - np.arange(P)[:, None]
    dq = np.arange(Q)[None, :] - np.arange(Q)[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        Pa = np.where(dp >= 0, ay[:, None, None] ** np.maximum(dp, 0), 0) * Cp
        Pc = np.where(dq >= 0, cy[:, None, None] ** np.maximum(dq, 0), 0) * Cq
    return np.einsum("nap,pq,nbq->nab", Pa, t, Pc)
