"""Permanents and (loop) hafnians: exact enumeration plus low-rank algorithms."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NotSquare, OddSize, RankTooLarge, TooLarge
from .linalg import symmetric_lowrank_factor
from .poly import SparsePoly, extract_matched_degree_sum, poly_mul_truncated

RYSER_MAX_N = 24
ENUM_MAX_N = 12
LOWRANK_MAX_R = 8
GURVITS_SPACE_GUARD = 2**26

# Gray-code inner block: the low columns are expanded in one vectorized table.
_RYSER_BLOCK = 10


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {A.shape}")
    return A


def _subset_sums(cols: np.ndarray) -> np.ndarray:
    """Row sums for every subset of the given columns, indexed by bitmask."""
    n_rows, k = cols.shape
    out = np.zeros((1 << k, n_rows), dtype=complex)
    for j in range(k):
        step = 1 << j
        out[step : 2 * step] = out[:step] + cols[:, j][None, :]
    return out


def permanent_ryser(A) -> complex:
    """Ryser's formula with Gray-code subset iteration, O(2^n n).

    The lowest columns are tabulated once and the remaining ones walked in
    Gray-code order, so each outer step is a single vectorized update.
    """
    A = _square(A)
    n = A.shape[0]
    if n > RYSER_MAX_N:
        raise TooLarge(f"Ryser guard: n={n} > {RYSER_MAX_N}")
    if n == 0:
        return 1.0 + 0j
    k = min(n, _RYSER_BLOCK)
    low = _subset_sums(A[:, :k])
    low_pop = np.array([bin(m).count("1") for m in range(1 << k)])
    high = A[:, k:]
    h = n - k
    row = np.zeros(n, dtype=complex)
    total = 0j
    gray_prev = 0
    high_pop = 0
    for t in range(1 << h):
        g = t ^ (t >> 1)
        if t:
            flip = (g ^ gray_prev).bit_length() - 1
            if g & (1 << flip):
                row += high[:, flip]
                high_pop += 1
            else:
                row -= high[:, flip]
                high_pop -= 1
        gray_prev = g
        prods = np.prod(low + row[None, :], axis=1)
        signs = np.where((low_pop + high_pop) % 2 == 0, 1.0, -1.0)
        total += np.sum(signs * prods)
    return complex((-1) ** n * total)


def permanent_lowrank_plus_identity(u, v, guard: int = GURVITS_SPACE_GUARD) -> complex:
    """Per(I + sum_s u^(s) v^(s)^T) by matched-degree extraction.

    ``u`` and ``v`` are N x L.  Each row contributes the factor
    1 + (sum_s a_u^(s) u_i^(s)) (sum_s a_v^(s) v_i^(s)); the permanent is the
    factorial-weighted sum over monomials whose a_u and a_v degrees agree.
    """
    u = np.atleast_2d(np.asarray(u, dtype=complex))
    v = np.atleast_2d(np.asarray(v, dtype=complex))
    if u.shape != v.shape:
        raise NotSquare("u and v factors must have the same shape")
    N, L = u.shape
    if L == 0 or N == 0:
        return 1.0 + 0j
    if (N + 1) ** (2 * L) > guard:
        raise RankTooLarge(f"(N+1)^(2L) = {(N + 1) ** (2 * L)} exceeds the allocation guard")
    caps = (N,) * (2 * L)
    poly = SparsePoly.constant(caps, 1.0)
    for i in range(N):
        terms = {(0,) * (2 * L): 1.0}
        for s in range(L):
            for t in range(L):
                e = [0] * (2 * L)
                e[s] += 1
                e[L + t] += 1
                terms[tuple(e)] = terms.get(tuple(e), 0) + u[i, s] * v[i, t]
        poly = poly_mul_truncated(poly, SparsePoly.from_terms(caps, terms))
    return extract_matched_degree_sum(poly, range(L), range(L, 2 * L), "factorial")


def _matching_sum(A: np.ndarray, loops: bool) -> complex:
    n = A.shape[0]
    full = (1 << n) - 1

    @lru_cache(maxsize=None)
    def rec(mask: int) -> complex:
        if mask == 0:
            return 1.0 + 0j
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        acc = A[i, i] * rec(rest) if loops else 0j
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            acc += A[i, j] * rec(rest & ~(1 << j))
        return acc

    return complex(rec(full))


def loop_hafnian_enum(A) -> complex:
    """Sum over matchings including self-loops; reads the upper triangle only."""
    A = _square(A)
    n = A.shape[0]
    if n > ENUM_MAX_N:
        raise TooLarge(f"enumeration guard: n={n} > {ENUM_MAX_N}")
    return _matching_sum(np.triu(A) + np.triu(A, 1).T, loops=True)


def hafnian_enum(A) -> complex:
    """Perfect-matching sum without loops."""
    A = _square(A)
    n = A.shape[0]
    if n % 2:
        raise OddSize(f"hafnian needs an even dimension, got {n}")
    if n > ENUM_MAX_N:
        raise TooLarge(f"enumeration guard: n={n} > {ENUM_MAX_N}")
    return _matching_sum(np.triu(A) + np.triu(A, 1).T, loops=False)


@dataclass(frozen=True)
class LowRankSymmetric:
    """Symmetric Sigma = G G^T whose diagonal is replaced by ``diag``."""

    n: int
    G: np.ndarray
    diag: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=complex).reshape(self.n, -1)
        d = np.asarray(self.diag, dtype=complex).reshape(self.n)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "diag", d)

    @property
    def rank(self) -> int:
        return self.G.shape[1]

    @classmethod
    def from_matrix(cls, sigma, diag, rank_tol: float | None = None) -> "LowRankSymmetric":
        sigma = _square(sigma)
        F = symmetric_lowrank_factor(0.5 * (sigma + sigma.T), rank_tol)
        return cls(sigma.shape[0], F, np.asarray(diag, dtype=complex))

    def dense(self) -> np.ndarray:
        S = self.G @ self.G.T
        np.fill_diagonal(S, self.diag)
        return S


def loop_hafnian_lowrank(S: LowRankSymmetric, max_rank: int = LOWRANK_MAX_R) -> complex:
    """lhaf via prod_i (sum_j G_ij y_j + mu_i) and (e-1)!! extraction over even degrees."""
    n, r = S.n, S.rank
    if r > max_rank:
        raise RankTooLarge(f"rank {r} exceeds guard {max_rank}")
    if r == 0:
        return complex(np.prod(S.diag))
    caps = (n,) * r
    poly = SparsePoly.constant(caps, 1.0)
    for i in range(n):
        poly = poly_mul_truncated(poly, SparsePoly.linear(caps, S.G[i], S.diag[i]))
    return extract_matched_degree_sum(poly, range(r), (), "double_factorial")
