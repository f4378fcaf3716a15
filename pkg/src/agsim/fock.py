"""Brute-force truncated Fock-space oracle.

States are evolved in a working space spanned by all patterns with total photon
number at most ``total``.  Every Gaussian gate is applied by exponentiating its
quadratic generator (scipy's expm_multiply), so the oracle never touches the
permanent or hafnian formulas it is used to validate.  Passive gates preserve
photon number and are exact; squeezers and displacements are exact up to the
weight that reaches the top shell, which is reported as ``boundary_weight``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
from scipy.special import eval_genlaguerre, gammaln

from .circuit import AdaptiveCircuit
from .errors import (
    CutoffExceeded,
    DimensionMismatch,
    LeakageAboveTolerance,
    SpecError,
    TooLarge,
)
from .gaussian import GaussianUnitary
from .linalg import unitary_log_generator
from .states import DenseState, PhotonPattern, ProductObservable, ProductState
from .tolerances import LEAKAGE

ORACLE_MAX_MODES = 5
ORACLE_MAX_CUTOFF = 6
DIM_GUARD = 300_000
MAX_TOTAL = 120


def _guard(modes: int, cutoff: int) -> None:
    if modes > ORACLE_MAX_MODES or cutoff > ORACLE_MAX_CUTOFF:
        raise TooLarge(f"oracle guard: M={modes} (max {ORACLE_MAX_MODES}), n_max={cutoff} (max {ORACLE_MAX_CUTOFF})")


@lru_cache(maxsize=64)
def _patterns(modes: int, total: int) -> np.ndarray:
    if modes == 0:
        return np.zeros((1, 0), dtype=np.int64)
    if modes == 1:
        return np.arange(total + 1, dtype=np.int64)[:, None]
    blocks = []
    for n0 in range(total + 1):
        rest = _patterns(modes - 1, total - n0)
        blocks.append(np.hstack([np.full((rest.shape[0], 1), n0, dtype=np.int64), rest]))
    return np.vstack(blocks)


def space_dimension(modes: int, total: int) -> int:
    return comb(total + modes, modes)


def auto_total(modes: int, cutoff: int, squeeze: float = 0.0, displacement: float = 0.0) -> int:
    """Working-space photon budget.

    Passive circuits keep the photon number, so M*n_max is exact.  Otherwise
    the top-shell weight decays roughly like tanh(r)^N for squeezing r and like
    a Poisson tail for a displacement; the budget aims at weight 1e-18 and is
    capped by MAX_TOTAL and DIM_GUARD.
    """
    base = modes * cutoff
    extra = 0
    if squeeze > 0:
        extra += int(np.ceil(np.log(1e-18) / np.log(np.tanh(squeeze)))) + 4
    if displacement > 0:
        extra += int(np.ceil(displacement**2 + 10 * displacement + 10))
    N = min(base + extra, MAX_TOTAL)
    while N > base and space_dimension(modes, N) > DIM_GUARD:
        N -= 1
    return N


def _max_squeeze(*gates) -> float:
    return float(sum(np.max(g.squeeze, initial=0.0) for g in gates if g is not None))


class WorkingSpace:
    """Fock patterns with total photon number <= ``total``."""

    def __init__(self, modes: int, total: int):
        if space_dimension(modes, total) > DIM_GUARD:
            raise TooLarge(f"working space dimension {space_dimension(modes, total)} exceeds {DIM_GUARD}")
        self.modes = modes
        self.total = total
        self.patterns = _patterns(modes, total)
        self.dim = self.patterns.shape[0]
        self._radix = (total + 1) ** np.arange(modes - 1, -1, -1, dtype=np.int64)
        self._keys = self.patterns @ self._radix
        self._lower = [self._lowering(k) for k in range(modes)]
        self._photons = self.patterns.sum(axis=1)
        # set once a photon-number-changing gate ran; before that the top shell is exact
        self.truncates = False

    def index(self, pats: np.ndarray) -> np.ndarray:
        pats = np.atleast_2d(np.asarray(pats, dtype=np.int64))
        keys = pats @ self._radix
        idx = np.searchsorted(self._keys, keys)
        idx = np.minimum(idx, self.dim - 1)
        if np.any(self._keys[idx] != keys) or np.any(pats.sum(axis=1) > self.total):
            raise DimensionMismatch("pattern outside the working space")
        return idx

    def _lowering(self, k: int) -> sp.csr_matrix:
        cols = np.flatnonzero(self.patterns[:, k] > 0)
        src = self.patterns[cols].copy()
        vals = np.sqrt(src[:, k].astype(float))
        src[:, k] -= 1
        rows = self.index(src) if cols.size else np.zeros(0, dtype=np.int64)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def lowering(self, k: int) -> sp.csr_matrix:
        return self._lower[k]

    # state conversion

    def embed(self, state) -> np.ndarray:
        if isinstance(state, ProductState):
            state = state.dense()
        if state.modes != self.modes:
            raise DimensionMismatch("state and working space disagree on the mode count")
        t = state.tensor()
        nz = np.argwhere(t != 0)
        v = np.zeros(self.dim, dtype=complex)
        if nz.size:
            if np.any(nz.sum(axis=1) > self.total):
                raise CutoffExceeded("state has support beyond the working-space photon budget")
            v[self.index(nz)] = t[tuple(nz.T)]
        return v

    def to_cutoff(self, v: np.ndarray, cutoff: int) -> tuple[DenseState, float]:
        inside = np.all(self.patterns <= cutoff, axis=1)
        t = np.zeros((cutoff + 1,) * self.modes, dtype=complex)
        t[tuple(self.patterns[inside].T)] = v[inside]
        leakage = float(np.sum(np.abs(v[~inside]) ** 2))
        return DenseState.from_tensor(t), leakage

    def boundary_weight(self, v: np.ndarray) -> float:
        if not self.truncates:
            return 0.0
        return float(np.sum(np.abs(v[self._photons == self.total]) ** 2))

    # gates

    def passive_generator(self, W: np.ndarray) -> sp.csr_matrix:
        h = unitary_log_generator(W)
        H = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for k in range(self.modes):
            for l in range(self.modes):
                if abs(h[k, l]) > 0:
                    H = H + h[k, l] * (self._lower[k].T @ self._lower[l])
        return 1j * H

    def apply_passive(self, W: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Unitary with U^dag a U = W a."""
        W = np.asarray(W, dtype=complex)
        if np.allclose(W, np.eye(self.modes), atol=1e-15):
            return v
        if np.allclose(W, np.diag(np.diag(W)), atol=1e-15):
            return self.apply_phase(np.angle(np.diag(W)), v)
        return expm_multiply(self.passive_generator(W), v)

    def apply_phase(self, phases, v: np.ndarray) -> np.ndarray:
        ph = np.exp(1j * (self.patterns @ np.asarray(phases, dtype=float)))
        return v * (ph if v.ndim == 1 else ph[:, None])

    def apply_squeeze(self, r, v: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if not np.any(r):
            return v
        self.truncates = True
        H = sp.csr_matrix((self.dim, self.dim), dtype=float)
        for k in np.flatnonzero(r):
            a2 = self._lower[k] @ self._lower[k]
            H = H + 0.5 * r[k] * (a2.T - a2)
        return expm_multiply(H, v)

    def apply_gaussian(self, G: GaussianUnitary, v: np.ndarray) -> np.ndarray:
        if G.modes != self.modes:
            raise DimensionMismatch("gate and working space disagree on the mode count")
        v = self.apply_passive(G.right_unitary, v)
        v = self.apply_squeeze(G.squeeze, v)
        return self.apply_passive(G.left_unitary, v)

    def apply_displacement(self, alpha, v: np.ndarray) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=complex).reshape(self.modes)
        if not np.any(alpha):
            return v
        self.truncates = True
        H = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for k in np.flatnonzero(alpha):
            a = self._lower[k]
            H = H + alpha[k] * a.T - np.conj(alpha[k]) * a
        return expm_multiply(H, v)

    def observable_operator(self, O: ProductObservable) -> sp.csr_matrix:
        S = list(O.support)
        d = O.cutoff + 1
        ok = np.all(self.patterns[:, S] <= O.cutoff, axis=1) if S else np.ones(self.dim, bool)
        cols = np.flatnonzero(ok)
        rows_all, cols_all, vals_all = [], [], []
        src = self.patterns[cols]
        for q in itertools.product(range(d), repeat=len(S)):
            coef = np.ones(cols.size, dtype=complex)
            for pos, mode in enumerate(S):
                coef = coef * O.ops[mode][q[pos], src[:, mode]]
            tgt = src.copy()
            tgt[:, S] = q
            keep = (coef != 0) & (tgt.sum(axis=1) <= self.total)
            if not np.any(keep):
                continue
            rows_all.append(self.index(tgt[keep]))
            cols_all.append(cols[keep])
            vals_all.append(coef[keep])
        if not rows_all:
            return sp.csr_matrix((self.dim, self.dim), dtype=complex)
        return sp.csr_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(self.dim, self.dim),
        )

    def expectation(self, v: np.ndarray, O: ProductObservable) -> complex:
        return complex(np.vdot(v, self.observable_operator(O) @ v))


# oracle operations ------------------------------------------------------------


def _space_for(modes: int, cutoff: int, gates=(), total: int | None = None, displacement: float = 0.0) -> WorkingSpace:
    _guard(modes, cutoff)
    if total is None:
        total = auto_total(modes, cutoff, _max_squeeze(*gates), displacement)
    return WorkingSpace(modes, total)


def apply_gaussian_dense(
    G: GaussianUnitary,
    psi: DenseState,
    strict: bool = False,
    leakage_tol: float = LEAKAGE,
    total: int | None = None,
) -> tuple[DenseState, float]:
    """G|psi> truncated to the cutoff, together with the norm lost to truncation."""
    if G.modes != psi.modes:
        raise DimensionMismatch("gate and state disagree on the mode count")
    ws = _space_for(psi.modes, psi.cutoff, (G,), total)
    v = ws.apply_gaussian(G, ws.embed(psi))
    out, leakage = ws.to_cutoff(v, psi.cutoff)
    leakage += ws.boundary_weight(v)
    if strict and leakage > leakage_tol:
        raise LeakageAboveTolerance(f"truncation leakage {leakage:.3e} above {leakage_tol:.1e}")
    return out, leakage


def oracle_amplitude(phi: ProductState, G: GaussianUnitary, psi: ProductState, total: int | None = None) -> complex:
    """<phi|G|psi> by dense evolution."""
    if not (phi.modes == psi.modes == G.modes):
        raise DimensionMismatch("states and gate disagree on the mode count")
    cutoff = max(phi.cutoff, psi.cutoff)
    ws = _space_for(psi.modes, cutoff, (G,), total)
    return complex(np.vdot(ws.embed(phi), ws.apply_gaussian(G, ws.embed(psi))))


def oracle_marginal(
    phi: ProductState,
    G: GaussianUnitary,
    prefix,
    psi: ProductState,
    modes=None,
    fold: bool = False,
    total: int | None = None,
) -> complex:
    """<phi|G^dag (|n><n| on the measured modes) G|psi>.

    With ``fold=True`` the projector is replaced by the sum over all patterns
    whose weighted count sum_k n_{modes[k]} b^k agrees with the prefix modulo
    b^L, b = n_max + 1.  That is exactly the quantity a discrete Fourier
    inversion over b^L phases returns.
    """
    prefix = PhotonPattern(tuple(prefix))
    table = oracle_marginal_table(phi, G, psi, len(prefix), modes=modes, fold=fold, total=total)
    prefix.check(max(phi.cutoff, psi.cutoff))
    return table[prefix.counts]


def oracle_marginal_table(
    phi: ProductState,
    G: GaussianUnitary,
    psi: ProductState,
    L: int,
    modes=None,
    fold: bool = False,
    total: int | None = None,
) -> dict:
    """oracle_marginal for every prefix in {0..n_max}^L from a single evolution."""
    measured = list(range(L)) if modes is None else [int(m) for m in modes]
    if len(measured) != L:
        raise DimensionMismatch("prefix length and measured-mode list disagree")
    if not (phi.modes == psi.modes == G.modes):
        raise DimensionMismatch("states and gate disagree on the mode count")
    cutoff = max(phi.cutoff, psi.cutoff)
    ws = _space_for(psi.modes, cutoff, (G,), total)
    both = ws.apply_gaussian(G, np.stack([ws.embed(psi), ws.embed(phi)], axis=1))
    terms = np.conj(both[:, 1]) * both[:, 0]
    b = cutoff + 1
    pats = ws.patterns[:, measured]
    w = b ** np.arange(L, dtype=np.int64)
    key = pats @ w
    if fold:
        key = key % b**L
        inside = np.ones(ws.dim, bool)
    else:
        inside = np.all(pats <= cutoff, axis=1)
    sums = np.zeros(b**L, complex)
    np.add.at(sums, key[inside], terms[inside])
    return {tuple(int(d) for d in np.unravel_index(k, (b,) * L, order="F")): complex(sums[k]) for k in range(b**L)}


def oracle_purity(psi: ProductState, G: GaussianUnitary, support, total: int | None = None) -> float:
    """Tr[rho_A^2] of the reduced output state on the modes in ``support``."""
    ws = _space_for(psi.modes, psi.cutoff, (G,), total)
    v = ws.apply_gaussian(G, ws.embed(psi.normalized()))
    return reduced_purity(ws, v, support)


def _purity_index(ws: WorkingSpace, support) -> tuple[np.ndarray, np.ndarray]:
    key = tuple(sorted(int(a) for a in support))
    cache = ws.__dict__.setdefault("_purity_cache", {})
    if key not in cache:
        B = [k for k in range(ws.modes) if k not in key]
        _, ia = np.unique(ws.patterns[:, list(key)], axis=0, return_inverse=True)
        if B:
            _, ib = np.unique(ws.patterns[:, B], axis=0, return_inverse=True)
        else:
            ib = np.zeros(ws.dim, int)
        cache[key] = (ia.ravel(), ib.ravel())
    return cache[key]


def reduced_purity(ws: WorkingSpace, v: np.ndarray, support) -> float:
    """Tr[rho_A^2] for the normalized reduced state of ``v`` on ``support``."""
    if len(support) == 0:
        return 1.0
    ia, ib = _purity_index(ws, support)
    psi_ab = sp.csr_matrix((v, (ia, ib)))
    small = psi_ab @ psi_ab.conj().T if psi_ab.shape[0] <= psi_ab.shape[1] else psi_ab.conj().T @ psi_ab
    small = small.toarray()
    norm = np.trace(small).real
    if norm == 0:
        return 0.0
    return float(np.sum(np.abs(small) ** 2) / norm**2)


@dataclass
class OracleMeanValue:
    value: complex
    deficit: float = 0.0
    boundary_weight: float = 0.0
    branch_probabilities: dict = field(default_factory=dict)
    quadrature_error: float | None = None
    nodes: int = 0
    purity: float | None = None

    def __complex__(self) -> complex:
        return complex(self.value)


def oracle_mean_value(
    psi: ProductState,
    circuit: AdaptiveCircuit,
    O: ProductObservable,
    total: int | None = None,
    quad_nodes: int = 24,
    quad_center=None,
    quad_scale: float | None = None,
    check_quadrature: bool = False,
) -> OracleMeanValue:
    """Exact mean value over all measurement branches.

    Photon feedforward enumerates every outcome in {0..n_max}^L and reports the
    probability deficit left to outcomes above the cutoff.  Gaussian feedforward
    integrates the POVM outcome on a Gauss-Hermite grid whose weights are
    renormalized to total probability one.
    """
    if psi.modes != circuit.modes or O.modes != circuit.modes:
        raise DimensionMismatch("inputs disagree on the mode count")
    if set(O.support) & set(circuit.measured_modes):
        raise SpecError("observable support overlaps measured modes")
    psi = psi.normalized()
    cutoff = psi.cutoff
    if circuit.kind == "none":
        ws = _space_for(psi.modes, cutoff, (circuit.initial,), total)
        v = ws.apply_gaussian(circuit.initial, ws.embed(psi))
        pur = reduced_purity(ws, v, O.support)
        return OracleMeanValue(ws.expectation(v, O), 0.0, ws.boundary_weight(v), purity=pur)
    if circuit.kind == "photon":
        return _oracle_photon(psi, circuit, O, total)
    if circuit.kind == "gaussian":
        res = _oracle_gaussian(psi, circuit, O, total, quad_nodes, quad_center, quad_scale)
        if check_quadrature:
            fine = _oracle_gaussian(psi, circuit, O, total, 2 * quad_nodes, quad_center, quad_scale)
            res.quadrature_error = abs(fine.value - res.value)
        return res
    raise SpecError(f"unknown circuit kind {circuit.kind!r}")


def _oracle_photon(psi, circuit, O, total) -> OracleMeanValue:
    cutoff, L = psi.cutoff, circuit.L
    branches = {n: circuit.branch_unitary(n) for n in itertools.product(range(cutoff + 1), repeat=L)}
    r = max(_max_squeeze(G) for G in branches.values())
    ws = _space_for(psi.modes, cutoff, (), total) if r == 0 else WorkingSpace(psi.modes, total or auto_total(psi.modes, cutoff, r))
    v0 = ws.embed(psi)
    Op = ws.observable_operator(O)
    meas = ws.patterns[:, list(circuit.measured_modes)]
    value, probs, bw, pur = 0j, {}, 0.0, 0.0
    for n, G in branches.items():
        v = ws.apply_gaussian(G, v0)
        bw = max(bw, ws.boundary_weight(v))
        v = np.where(np.all(meas == np.asarray(n), axis=1), v, 0)
        probs[n] = float(np.vdot(v, v).real)
        value += np.vdot(v, Op @ v)
        pur += probs[n] * reduced_purity(ws, v, O.support)
    total_p = sum(probs.values())
    return OracleMeanValue(complex(value), 1.0 - total_p, bw, probs, purity=pur / total_p)


def _oracle_gaussian(psi, circuit, O, total, nodes, center, scale) -> OracleMeanValue:
    M, cutoff = psi.modes, psi.cutoff
    measured = list(circuit.measured_modes)
    m = len(measured)
    if center is None:
        center = np.zeros(m, complex)
    center = np.asarray(center, complex).reshape(m)
    x, w = np.polynomial.hermite.hermgauss(nodes)
    if total is None:
        ws0 = _space_for(M, cutoff, (circuit.initial,))
        v0 = ws0.apply_gaussian(circuit.initial, ws0.embed(psi))
        nbar0 = sum(float(np.vdot(v0, ws0.lowering(k).T @ (ws0.lowering(k) @ v0)).real) for k in measured)
        reach = np.max(np.abs(center)) + 3.0 * (scale or np.sqrt(1.0 + nbar0))
        gamma_norm = (np.abs(circuit.gamma1).sum(axis=1) + np.abs(circuit.gamma2).sum(axis=1)).max() * reach
        gates = (circuit.initial, circuit.final, circuit.seed)
        total = auto_total(M, cutoff, _max_squeeze(*gates), float(max(gamma_norm, reach)))
    _guard(M, cutoff)
    ws = WorkingSpace(M, total)
    wsm = WorkingSpace(m, ws.total)
    v1 = ws.apply_gaussian(circuit.initial, ws.embed(psi))
    seed0 = np.zeros(wsm.dim, complex)
    seed0[0] = 1.0
    seed0 = wsm.apply_gaussian(circuit.seed, seed0)
    idx_m = wsm.index(ws.patterns[:, measured])
    tgt = ws.patterns.copy()
    tgt[:, measured] = 0
    idx_u = ws.index(tgt)
    Op = ws.observable_operator(O)

    if scale is None:
        nbar = sum(float(np.vdot(v1, (ws.lowering(k).T @ (ws.lowering(k) @ v1))).real) for k in measured)
        scale = float(np.sqrt(1.0 + nbar))
    grid1 = [(xi, yi, wi * wj * np.exp(xi**2 + yi**2)) for xi, wi in zip(x, w) for yi, wj in zip(x, w)]
    num, den, bw, pur = 0j, 0.0, 0.0, 0.0
    for combo in itertools.product(grid1, repeat=m):
        beta = center + scale * np.array([c[0] + 1j * c[1] for c in combo])
        weight = np.prod([c[2] for c in combo]) * scale ** (2 * m)
        seed_b = wsm.apply_displacement(beta, seed0)
        chi = np.zeros(ws.dim, complex)
        np.add.at(chi, idx_u, np.conj(seed_b[idx_m]) * v1)
        prob = float(np.vdot(chi, chi).real) / np.pi**m
        if circuit.callback is not None:
            G2, gamma = circuit.callback(beta)
        else:
            G2, gamma = circuit.final, circuit.displacement_for(beta)
        chi = ws.apply_displacement(gamma, chi)
        chi = ws.apply_gaussian(G2, chi)
        bw += weight * ws.boundary_weight(chi) / np.pi**m
        num += weight * np.vdot(chi, Op @ chi) / np.pi**m
        den += weight * prob
        pur += weight * prob * reduced_purity(ws, chi, O.support)
    res = OracleMeanValue(complex(num / den), 1.0 - den, bw / den, nodes=nodes, purity=pur / den)
    res.branch_probabilities = {"raw_normalization": den}
    return res


# single-mode displacement matrix elements ---------------------------------------


def displacement_matrix(alpha, cutoff: int) -> np.ndarray:
    """<m|D(alpha)|n> for m, n <= cutoff; broadcasts over the shape of ``alpha``."""
    alpha = np.asarray(alpha, dtype=complex)
    d = cutoff + 1
    m = np.arange(d)[:, None]
    n = np.arange(d)[None, :]
    lo = np.minimum(m, n)
    k = np.abs(m - n)
    x = np.abs(alpha) ** 2
    a = alpha[..., None, None]
    xb = x[..., None, None]
    lag = eval_genlaguerre(lo, k, xb)
    pref = np.exp(0.5 * (gammaln(lo + 1) - gammaln(lo + k + 1)))
    base = np.where(m >= n, a, -np.conj(a))
    with np.errstate(invalid="ignore"):
        powk = np.where(k == 0, 1.0 + 0j, base ** k)
    return pref * powk * np.exp(-0.5 * xb) * lag


# antinormal ordering --------------------------------------------------------------


@dataclass
class AntinormalCheck:
    direct: np.ndarray
    expansion: np.ndarray
    n_terms: int
    columns: np.ndarray


def _matchings(edges: list) -> list:
    """All matchings (sets of vertex-disjoint edges) including the empty one."""
    out = [[]]

    def rec(start, used, current):
        for t in range(start, len(edges)):
            i, j = edges[t]
            if ("a", i) in used or ("b", j) in used:
                continue
            nxt = current + [edges[t]]
            out.append(nxt)
            rec(t + 1, used | {("a", i), ("b", j)}, nxt)

    rec(0, frozenset(), [])
    return out


def oracle_expand_antinormal(N: int, C, cutoff: int | None = None) -> AntinormalCheck:
    """Compare prod_i (A_i + B_i^dag) with its antinormally ordered matching expansion.

    A_i = a_i and B_j^dag = sum_k C_kj a_k^dag on N modes, so [A_i, B_j^dag] = C_ij.
    The product is ordered with i = 1 leftmost.  Each term of the expansion picks
    a set Y of A-positions and a matching of pairs (i in Y, j not in Y, j < i),
    contributing (-1)^|matching| prod C_ij (prod of unmatched A)(prod of unmatched B^dag).
    Both sides are evaluated on basis columns with every mode at most cutoff - N,
    where the truncated ladder operators act exactly.
    """
    if N > 6:
        raise TooLarge(f"antinormal oracle guard: N={N} > 6")
    C = np.asarray(C, dtype=complex)
    if C.shape != (N, N):
        raise DimensionMismatch(f"C must be {N}x{N}")
    cutoff = N + 1 if cutoff is None else cutoff
    if cutoff < N:
        raise SpecError("cutoff must be at least N")
    d = cutoff + 1
    a1 = sp.csr_matrix(np.diag(np.sqrt(np.arange(1, d)), 1))
    I1 = sp.identity(d, format="csr")
    lows = []
    for k in range(N):
        op = sp.identity(1, format="csr")
        for j in range(N):
            op = sp.kron(op, a1 if j == k else I1, format="csr")
        lows.append(op)
    A = lows
    Bd = [sum((C[k, j] * lows[k].T for k in range(N)), sp.csr_matrix((d**N, d**N))) for j in range(N)]
    pats = np.array(list(itertools.product(range(d), repeat=N)))
    cols = np.flatnonzero(np.all(pats <= cutoff - N, axis=1))
    X0 = np.zeros((d**N, cols.size), complex)
    X0[cols, np.arange(cols.size)] = 1.0

    direct = X0
    for i in reversed(range(N)):
        direct = (A[i] + Bd[i]) @ direct

    expansion = np.zeros_like(X0)
    n_terms = 0
    for mask in range(1 << N):
        Y = [i for i in range(N) if mask >> i & 1]
        notY = [j for j in range(N) if not mask >> j & 1]
        edges = [(i, j) for i in Y for j in notY if j < i]
        for match in _matchings(edges):
            coef = (-1) ** len(match) * np.prod([C[i, j] for i, j in match]) if match else 1.0
            mi = {i for i, _ in match}
            mj = {j for _, j in match}
            term = X0
            for j in reversed([j for j in notY if j not in mj]):
                term = Bd[j] @ term
            for i in reversed([i for i in Y if i not in mi]):
                term = A[i] @ term
            expansion = expansion + coef * term
            n_terms += 1
    return AntinormalCheck(direct, expansion, n_terms, cols)
