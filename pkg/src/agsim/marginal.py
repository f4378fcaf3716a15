"""Generating functions, Fourier inversion to photon-number marginals, chain-rule sampling.

The marginal over L measured modes is read off from

    G~(k) = <phi| G0^dag exp(-i k theta n.omega) G0 |psi>,   k = 0 .. b^L - 1,

with b = n_max + 1, omega_{modes[j]} = b^j and theta = 2 pi / b^L, through
q(Omega) = b^{-L} sum_k G~(k) exp(i k theta Omega).  The inversion returns the
sum over every pattern n with n.omega = Omega (mod b^L); it coincides with the
photon-number marginal whenever the measured modes carry at most n_max photons.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import CapOverflow, CutoffExceeded, DimensionMismatch, GuardExceeded, NonUnitaryInput, NormalizationFailure
from .gaussian import GaussianUnitary, LowRankConjugation, conjugate_phase_shifter
from .kernel import mode_polynomial, mode_table, overlap, unitary_kernel
from .linalg import is_unitary
from .poly import SparsePoly, extract_matched_degree_sum, linear_powers, poly_mul_truncated
from .states import PhotonPattern, ProductState

GAUSSIAN_PATH_MAX_L = 2
LINEAR_PATH_MAX_L = 4
ALLOCATION_GUARD = 2**26
NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class FrequencyVector:
    modes: int
    cutoff: int
    measured: tuple
    radix: int = 0

    @property
    def base(self) -> int:
        """Digit base of Omega; defaults to n_max + 1, larger to resolve counts above the cutoff."""
        return max(self.radix, self.cutoff + 1)

    @property
    def L(self) -> int:
        return len(self.measured)

    @property
    def omega(self) -> np.ndarray:
        w = np.zeros(self.modes)
        for j, m in enumerate(self.measured):
            w[m] = float(self.base**j)
        return w

    @property
    def omega_max(self) -> int:
        return self.base**self.L - 1

    @property
    def theta(self) -> float:
        return 2 * np.pi / (self.omega_max + 1)

    def index(self, prefix) -> int:
        prefix = PhotonPattern(tuple(prefix)).check(self.base - 1)
        if len(prefix) != self.L:
            raise DimensionMismatch(f"prefix of length {len(prefix)} for {self.L} measured modes")
        return int(sum(n * self.base**j for j, n in enumerate(prefix.counts)))

    def prefix(self, omega_index: int) -> tuple:
        out = []
        for _ in range(self.L):
            omega_index, n = divmod(omega_index, self.base)
            out.append(n)
        return tuple(out)

    def prefixes(self):
        return [self.prefix(k) for k in range(self.omega_max + 1)]


@dataclass(frozen=True)
class GeneratingFunctionTable:
    values: np.ndarray
    freq: FrequencyVector
    circuit_hash: str = ""
    path: str = ""

    @property
    def modes(self) -> int:
        return self.freq.modes

    @property
    def L(self) -> int:
        return self.freq.L

    @property
    def cutoff(self) -> int:
        return self.freq.cutoff

    def invert(self) -> np.ndarray:
        """q(Omega) = b^{-L} sum_k G~(k) exp(i k theta Omega) for every Omega."""
        return np.fft.ifft(self.values)

    def marginal(self, prefix) -> complex:
        k = np.arange(self.freq.omega_max + 1)
        Omega = self.freq.index(prefix)
        return complex(np.sum(self.values * np.exp(1j * k * self.freq.theta * Omega)) / k.size)

    def table(self) -> dict:
        q = self.invert()
        return {self.freq.prefix(i): complex(q[i]) for i in range(q.size)}


# low-mode amplitude -----------------------------------------------------------------


def amplitude_low_mode(U, psi: ProductState, phi: ProductState) -> complex:
    """<phi|U|psi> when phi lives on the first L modes (vacuum elsewhere).

    U is the passive unitary with U^dag a U = U a.  Every input photon is
    created along column i of U; only the components on the first L modes can
    reach <phi|, so the amplitude is the coefficient extraction
    sum_n conj(phi_n) sqrt(n!) [x^n] prod_i sum_m psi_{i,m} (sum_{j<L} U_ji x_j)^m / sqrt(m!).
    """
    U = np.asarray(U, dtype=complex)
    M = psi.modes
    if U.shape != (M, M):
        raise DimensionMismatch(f"U must be {M}x{M}")
    if not is_unitary(U):
        raise NonUnitaryInput("U is not unitary to 1e-10")
    L = phi.modes
    if L > M:
        raise DimensionMismatch("phi has more modes than the circuit")
    if L == 0:
        return complex(np.prod([c[0] for c in psi.coeffs]))
    caps = tuple(int(np.flatnonzero(c)[-1]) if np.any(c) else 0 for c in phi.coeffs)
    size = int(np.prod([c + 1 for c in caps]))
    if size > ALLOCATION_GUARD:
        raise CapOverflow(f"low-mode polynomial needs {size} coefficients")
    total = SparsePoly.constant(caps, 1.0)
    for i in range(M):
        a = psi.coeffs[i]
        deg = int(np.flatnonzero(a)[-1]) if np.any(a) else 0
        powers = linear_powers(SparsePoly.linear(caps, U[:L, i]), deg)
        f = SparsePoly.zero(caps)
        for m in range(deg + 1):
            if a[m] != 0:
                f = f + powers[m].scale(a[m] / np.sqrt(float(factorial(m))))
        total = poly_mul_truncated(total, f)
    exps, coef = total.exponents_and_coefficients()
    acc = 0j
    for e, c in zip(exps, coef):
        amp = np.prod([phi.coeffs[j][e[j]] for j in range(L)])
        if amp != 0:
            acc += np.conj(amp) * np.sqrt(float(np.prod([factorial(int(x)) for x in e]))) * c
    return complex(acc)


# generating functions ---------------------------------------------------------------


def generating_function_linear(u, v, psi: ProductState, phi: ProductState) -> complex:
    """<phi|V|psi> for the passive unitary with V^dag a V = (I + u v^T) a.

    Uses the indeterminates a_u^(s), a_v^(s): mode i contributes
    Q_i(sum_s a_u^(s) u_is, sum_s a_v^(s) v_is) and the amplitude is the
    factorial-weighted sum over monomials with matched a_u / a_v degrees.
    """
    u = np.atleast_2d(np.asarray(u, dtype=complex))
    v = np.atleast_2d(np.asarray(v, dtype=complex))
    M = psi.modes
    if u.shape[0] != M and u.shape[1] == M:
        u, v = u.T, v.T
    if u.shape != v.shape or u.shape[0] != M:
        raise DimensionMismatch("factor matrices must be M x L")
    L = u.shape[1]
    tables = [mode_table(phi.coeffs[i], psi.coeffs[i]) for i in range(M)]
    if L == 0:
        return complex(np.prod([t[0, 0] for t in tables]))
    cap_u = sum(t.shape[0] - 1 for t in tables)
    cap_v = sum(t.shape[1] - 1 for t in tables)
    caps = (cap_u,) * L + (cap_v,) * L
    if (cap_u + 1) ** L * (cap_v + 1) ** L > ALLOCATION_GUARD:
        raise CapOverflow(f"(Mn_max+1)^(2L) = {(cap_u + 1) ** L * (cap_v + 1) ** L} exceeds the allocation guard")
    zero = np.zeros(L, complex)
    total = SparsePoly.constant(caps, 1.0)
    for i, t in enumerate(tables):
        f = mode_polynomial(caps, t, np.concatenate([u[i], zero]), 0.0, np.concatenate([zero, v[i]]), 0.0)
        total = poly_mul_truncated(total, f)
    return extract_matched_degree_sum(total, range(L), range(L, 2 * L), "factorial")


def generating_function_gaussian(
    conj: LowRankConjugation, Ghat: GaussianUnitary, psi: ProductState, phi: ProductState, method: str = "auto"
) -> complex:
    """<phi|Ghat|psi> for Ghat = G0^dag P(phi) G0 through its Bargmann kernel."""
    if Ghat.modes != psi.modes:
        raise DimensionMismatch("conjugated unitary and states disagree on the mode count")
    return overlap(unitary_kernel(Ghat, conj.vacuum_amplitude), phi, psi, method=method)


def phase_factors_linear(U0: np.ndarray, phases: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """u, v with U0^dag E U0 = I + u v^T for E = diag(exp(i phases)); one column per nonzero phase."""
    idx = np.flatnonzero(phases)
    u = U0.conj().T[:, idx] * (np.exp(1j * phases[idx]) - 1.0)[None, :]
    v = U0.T[:, idx]
    return u, v


def _resolve_path(G0: GaussianUnitary, L: int, path: str, force: bool) -> str:
    if path == "auto":
        path = "linear" if G0.is_passive else "gaussian"
    if path == "linear" and not G0.is_passive:
        raise DimensionMismatch("the linear path needs a circuit without squeezing")
    limit = LINEAR_PATH_MAX_L if path == "linear" else GAUSSIAN_PATH_MAX_L
    if L > limit and not force:
        raise GuardExceeded(f"L={L} exceeds the {path}-path guard {limit}; pass force=True to override")
    return path


def generating_function_table(
    G0: GaussianUnitary,
    psi: ProductState,
    phi: ProductState | None = None,
    modes=None,
    L: int | None = None,
    path: str = "auto",
    force: bool = False,
    workers: int = 1,
    radix: int = 0,
) -> GeneratingFunctionTable:
    """G~(k) for k = 0 .. b^L - 1 on the measured modes (default: the first L).

    ``radix`` > n_max + 1 widens the Fourier grid so that counts up to radix - 1
    are resolved instead of folded onto lower ones.
    """
    phi = psi if phi is None else phi
    if not (G0.modes == psi.modes == phi.modes):
        raise DimensionMismatch("circuit and states disagree on the mode count")
    cutoff = max(psi.cutoff, phi.cutoff)
    measured = tuple(range(L)) if modes is None else tuple(int(m) for m in modes)
    freq = FrequencyVector(G0.modes, cutoff, measured, radix)
    path = _resolve_path(G0, freq.L, path, force)
    U0 = G0.interferometer

    def entry(k: int) -> complex:
        phases = -k * freq.theta * freq.omega
        if k == 0:
            return complex(np.prod([np.vdot(a, b) for a, b in zip(phi.coeffs, psi.coeffs)]))
        if path == "linear":
            u, v = phase_factors_linear(U0, phases)
            return generating_function_linear(u, v, psi, phi)
        Ghat, conj = conjugate_phase_shifter(G0, phases)
        return generating_function_gaussian(conj, Ghat, psi, phi)

    ks = range(freq.omega_max + 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            vals = list(pool.map(entry, ks))
    else:
        vals = [entry(k) for k in ks]
    return GeneratingFunctionTable(np.asarray(vals, dtype=complex), freq, G0.fingerprint(), path)


def marginal_probability(
    G0: GaussianUnitary,
    psi: ProductState,
    phi: ProductState | None,
    prefix,
    modes=None,
    path: str = "auto",
    force: bool = False,
) -> complex:
    """q(n_1..n_L) = <phi|G0^dag (|n><n| on the measured modes) G0|psi> by Fourier inversion."""
    prefix = PhotonPattern(tuple(prefix))
    cutoff = max(psi.cutoff, (phi or psi).cutoff)
    prefix.check(cutoff)
    table = generating_function_table(G0, psi, phi, modes=modes, L=len(prefix), path=path, force=force)
    return table.marginal(prefix.counts)


def marginal_table(G0, psi, phi=None, modes=None, L=None, path="auto", force=False) -> dict:
    return generating_function_table(G0, psi, phi, modes=modes, L=L, path=path, force=force).table()


# chain-rule sampling ----------------------------------------------------------------


@dataclass
class ChainRuleSampler:
    """Sequential conditional sampling of photon patterns on the measured modes.

    Marginal tables for every depth are computed once and reused across draws.
    """

    G0: GaussianUnitary
    psi: ProductState
    modes: tuple
    path: str = "auto"
    force: bool = False
    tables: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.modes = tuple(self.modes)
        self.tables = []
        for j in range(1, len(self.modes) + 1):
            gf = generating_function_table(self.G0, self.psi, modes=self.modes[:j], path=self.path, force=self.force)
            self.tables.append(gf.invert())

    @property
    def cutoff(self) -> int:
        return self.psi.cutoff

    def conditional(self, prefix: tuple) -> np.ndarray:
        """p(x | prefix) over x = 0..n_max, checked against the parent marginal."""
        b = self.cutoff + 1
        j = len(prefix)
        base = sum(n * b**i for i, n in enumerate(prefix))
        q = self.tables[j][base + b**j * np.arange(b)]
        parent = 1.0 if j == 0 else self.tables[j - 1][base]
        if np.max(np.abs(q.imag), initial=0) > NORMALIZATION_TOL or np.min(q.real) < -NORMALIZATION_TOL:
            raise NormalizationFailure(f"conditional weights at prefix {prefix} are not a probability vector")
        mass = float(np.sum(q.real))
        norm = float(self.psi.norm**2) if j == 0 else float(np.real(parent))
        if abs(mass - norm) > NORMALIZATION_TOL:
            raise NormalizationFailure(f"conditional mass {mass:.3e} differs from parent marginal {norm:.3e}")
        p = np.clip(q.real, 0.0, None)
        return p / p.sum()

    def sample(self, rng: np.random.Generator) -> PhotonPattern:
        prefix: tuple = ()
        for _ in range(len(self.modes)):
            p = self.conditional(prefix)
            prefix = prefix + (int(rng.choice(p.size, p=p)),)
        return PhotonPattern(prefix)

    def sample_many(self, rng: np.random.Generator, count: int) -> list:
        return [self.sample(rng) for _ in range(count)]


def chain_rule_sample(G0: GaussianUnitary, psi: ProductState, L: int, rng: np.random.Generator, modes=None, **kw) -> PhotonPattern:
    """One pattern from p(n_1..n_L) via the chain rule of conditional probabilities."""
    modes = tuple(range(L)) if modes is None else tuple(modes)
    if psi.norm == 0:
        raise CutoffExceeded("input state has zero norm")
    return ChainRuleSampler(G0, psi, modes, **kw).sample(rng)


def all_prefixes(cutoff: int, L: int):
    return list(itertools.product(range(cutoff + 1), repeat=L))
