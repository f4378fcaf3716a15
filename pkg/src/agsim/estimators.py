"""Mean-value estimators built on characteristic-function importance sampling.

For a product observable O on modes A and an output state rho, the random
variable

    X(alpha) = conj(chi_rho(alpha)) * ||O||_2^2 / conj(chi_O(alpha)),
    alpha ~ p(alpha) = |chi_O(alpha)|^2 / (pi^|A| ||O||_2^2)

has mean Tr[rho O] and second moment ||O||_2^2 Tr[rho_A^2].  The three
pipelines differ only in how chi_rho is evaluated: by pushing alpha through
the circuit (no feedforward), through branch-resolved generating functions
(photon feedforward) or through a vacuum-projected Gaussian kernel (Gaussian
feedforward).  Samples are aggregated with a median of means.

For Hermitian O, X(-alpha) = conj(X(alpha)) and p is symmetric, so Re X is the
antithetic average of the pair and is used in place of X.
"""
from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .circuit import AdaptiveCircuit, acts_trivially_on
from .errors import (
    BadGrouping,
    DimensionMismatch,
    EmptyInput,
    EnvelopeViolation,
    GuardExceeded,
    NormalizationFailure,
    NumericalError,
    SamplerFailure,
    SpecError,
)
from .fock import displacement_matrix, oracle_mean_value
from .gaussian import GaussianUnitary, adjoint, compose, from_transform, push_displacement
from .kernel import OverlapEvaluator, conjugated_kernel, overlap
from .marginal import NORMALIZATION_TOL, generating_function_table
from .states import ProductObservable, ProductState

SIZING_CONSTANT = 544
PROPOSAL_VARIANCE = 1.25
CANDIDATE_VARIANCES = (1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
GRID_RADIUS = 6.0
GRID_POINTS = 101
ENVELOPE_INFLATION = 1.2
PROBE_RADIUS = 12.0
FEEDFORWARD_MAX_L = 2


# characteristic functions -----------------------------------------------------------


def char_function(O, alpha):
    """Tr[D(alpha) O] from truncated-Fock displacement matrix elements."""
    O = np.asarray(O, dtype=complex)
    D = displacement_matrix(alpha, O.shape[0] - 1)
    return np.einsum("...mn,nm->...", D, O)


def char_coefficients(O) -> np.ndarray:
    """c with Tr[D(alpha) O] = exp(-|alpha|^2/2) sum_jk c[j, k] alpha^j conj(alpha)^k.

    Exact for an operator on the cutoff space; obtained by expanding the
    Laguerre form of <m|D(alpha)|n>.
    """
    O = np.asarray(O, dtype=complex)
    d = O.shape[0]
    c = np.zeros((d, d), dtype=complex)
    for m in range(d):
        for n in range(d):
            o = O[n, m]
            if o == 0:
                continue
            if m >= n:
                k = m - n
                pref = math.sqrt(factorial(n) / factorial(m))
                for i in range(n + 1):
                    c[k + i, i] += o * pref * (-1) ** i * comb(m, n - i) / factorial(i)
            else:
                k = n - m
                pref = math.sqrt(factorial(m) / factorial(n)) * (-1) ** k
                for i in range(m + 1):
                    c[i, k + i] += o * pref * (-1) ** i * comb(n, m - i) / factorial(i)
    return c


def _powers(z: np.ndarray, d: int) -> np.ndarray:
    out = np.empty(z.shape + (d,), dtype=complex)
    out[..., 0] = 1.0
    for k in range(1, d):
        out[..., k] = out[..., k - 1] * z
    return out


def eval_char(c: np.ndarray, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=complex)
    x = alpha.real**2 + alpha.imag**2
    diag = np.diagonal(c)
    if not np.any(c - np.diag(diag)):
        # diagonal operators have radial characteristic functions
        if not np.any(diag.imag):
            return np.exp(-0.5 * x) * np.polyval(diag.real[::-1], x)
        return np.exp(-0.5 * x) * np.polyval(diag[::-1], x)
    d = c.shape[0]
    poly = np.sum(_powers(alpha, d) * (_powers(np.conj(alpha), d) @ c.T), axis=-1)
    return np.exp(-0.5 * x) * poly


# rejection sampler ------------------------------------------------------------------


@dataclass
class ModeSampler:
    """Rejection sampler for |chi_O(alpha)|^2 / (pi ||O||^2) with a complex-Gaussian proposal."""

    op: np.ndarray
    coeffs: np.ndarray
    norm_sq: float
    variance: float
    envelope: float

    @property
    def acceptance(self) -> float:
        return 1.0 / self.envelope

    def density(self, alpha) -> np.ndarray:
        return np.abs(eval_char(self.coeffs, alpha)) ** 2 / (np.pi * self.norm_sq)

    def proposal(self, alpha) -> np.ndarray:
        s2 = self.variance
        return np.exp(-np.abs(alpha) ** 2 / s2) / (np.pi * s2)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        out = []
        need = count
        tries = 0
        while need > 0:
            k = int(need * self.envelope * 1.1) + 32
            z = rng.standard_normal((k, 2)) * math.sqrt(self.variance / 2)
            a = z[:, 0] + 1j * z[:, 1]
            ratio = self.density(a) / (self.envelope * self.proposal(a))
            if np.any(ratio > 1.0):
                raise EnvelopeViolation(f"density exceeds the envelope by {ratio.max():.3f}")
            acc = a[rng.random(k) < ratio][:need]
            out.append(acc)
            need -= acc.size
            tries += 1
            if tries > 10_000:
                raise SamplerFailure("rejection sampler made no progress")
        return np.concatenate(out) if out else np.zeros(0, complex)


def _grid(radius: float, points: int) -> np.ndarray:
    xs = np.linspace(-radius, radius, points)
    g = xs[:, None] + 1j * xs[None, :]
    return g[np.abs(g) <= radius]


def _probes(radius: float) -> np.ndarray:
    r = np.linspace(0.0, radius, 481)
    t = np.linspace(0.0, 2 * np.pi, 361, endpoint=False)
    return (r[:, None] * np.exp(1j * t)[None, :]).ravel()


def build_mode_sampler(O, variance: float | None = None) -> ModeSampler:
    """Envelope from a grid scan over |alpha| <= 6, inflated by 1.2 and checked on wider probes.

    With ``variance=None`` the proposal variance is the candidate with the
    smallest valid envelope, starting from 1.25.
    """
    O = np.asarray(O, dtype=complex)
    c = char_coefficients(O)
    norm_sq = float(np.linalg.norm(O) ** 2)
    grid, probes = _grid(GRID_RADIUS, GRID_POINTS), _probes(PROBE_RADIUS)
    p_grid = np.abs(eval_char(c, grid)) ** 2 / (np.pi * norm_sq)
    p_probe = np.abs(eval_char(c, probes)) ** 2 / (np.pi * norm_sq)
    best = None
    candidates = CANDIDATE_VARIANCES if variance is None else (float(variance),)
    for s2 in candidates:
        q = lambda a: np.exp(-np.abs(a) ** 2 / s2) / (np.pi * s2)  # noqa: E731
        env = ENVELOPE_INFLATION * float(np.max(p_grid / q(grid)))
        if np.max(p_probe / q(probes)) > env:
            continue
        if best is None or env < best[1]:
            best = (s2, env)
    if best is None:
        raise EnvelopeViolation("no proposal variance gives an envelope that survives the probe scan")
    return ModeSampler(O, c, norm_sq, best[0], best[1])


@dataclass
class CharSampler:
    """Product of per-mode samplers over the support of a product observable."""

    support: tuple
    samplers: list
    norm_sq: float

    @classmethod
    def from_observable(cls, O: ProductObservable, variance: float | None = None) -> "CharSampler":
        samplers = [build_mode_sampler(O.ops[k], variance) for k in O.support]
        return cls(O.support, samplers, O.two_norm_sq)

    @property
    def acceptance(self) -> list:
        return [s.acceptance for s in self.samplers]

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        cols = [s.sample(count, rng) for s in self.samplers]
        return np.stack(cols, axis=-1) if cols else np.zeros((count, 0), complex)

    def chi(self, alpha: np.ndarray) -> np.ndarray:
        out = np.ones(alpha.shape[:-1], complex)
        for j, s in enumerate(self.samplers):
            out = out * eval_char(s.coeffs, alpha[..., j])
        return out

    def density(self, alpha: np.ndarray) -> np.ndarray:
        out = np.ones(alpha.shape[:-1])
        for j, s in enumerate(self.samplers):
            out = out * s.density(alpha[..., j])
        return out


def sample_char_density(s: CharSampler, rng: np.random.Generator) -> np.ndarray:
    """One draw alpha_A from prod_i |chi_{O_i}|^2 / (pi ||O_i||^2)."""
    return s.sample(1, rng)[0]


# median of means --------------------------------------------------------------------


def group_count(delta: float) -> int:
    return max(1, math.ceil(8 * math.log(1 / delta)))


def sample_count(variance_bound: float, epsilon: float, delta: float, constant: float = SIZING_CONSTANT) -> int:
    return math.ceil(constant * variance_bound * math.log(1 / delta) / epsilon**2)


def median_of_means(samples, groups: int):
    """Componentwise median of the means of ``groups`` equal consecutive splits."""
    x = np.asarray(samples).reshape(-1)
    if x.size == 0:
        raise EmptyInput("median of means needs at least one sample")
    if groups < 1 or groups > x.size:
        raise BadGrouping(f"cannot split {x.size} samples into {groups} groups")
    m = x.size // groups
    means = x[: m * groups].reshape(groups, m).mean(axis=1)
    if np.iscomplexobj(means):
        return complex(np.median(means.real), np.median(means.imag))
    return float(np.median(means))


# reports ----------------------------------------------------------------------------


@dataclass
class EstimateReport:
    estimate: complex
    epsilon: float
    delta: float
    n_samples: int
    groups: int
    variance_bound_used: float
    variance_source: str
    seed: int
    wall_time: float
    pipeline: str
    auto_sized: bool = True
    sizing_constant: float = SIZING_CONSTANT
    sample_variance: float = 0.0
    extras: dict = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        est = complex(self.estimate)
        return {
            "pipeline": self.pipeline,
            "estimate": {"re": est.real, "im": est.imag},
            "epsilon": self.epsilon,
            "delta": self.delta,
            "n_samples": self.n_samples,
            "groups": self.groups,
            "variance_bound_used": self.variance_bound_used,
            "variance_source": self.variance_source,
            "auto_sized": self.auto_sized,
            "sizing_constant": self.sizing_constant,
            "sample_variance": self.sample_variance,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "extras": self.extras,
        }

    def deterministic_dict(self) -> dict:
        d = self.to_dict()
        d.pop("wall_time")
        return d


def _resolve_seed(seed) -> int:
    if seed is None:
        return int(np.random.SeedSequence().entropy % 2**64)
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2**63))
    return int(seed) % 2**64


def _plan(variance_bound: float, epsilon: float, delta: float, n_samples, groups, constant):
    if not (epsilon > 0 and 0 < delta < 1):
        raise SpecError("need epsilon > 0 and 0 < delta < 1")
    groups = group_count(delta) if groups is None else int(groups)
    if groups < 1:
        raise BadGrouping("groups must be at least 1")
    if n_samples is None:
        target = sample_count(variance_bound, epsilon, delta, constant)
        per_group = max(1, math.ceil(target / groups))
        return groups, per_group, True
    per_group = int(n_samples) // groups
    if per_group < 1:
        raise BadGrouping(f"{n_samples} samples cannot fill {groups} groups")
    return groups, per_group, False


def _run_groups(draw, groups: int, per_group: int, seed: int, workers: int) -> np.ndarray:
    """Group g draws ``per_group`` samples from its own spawned substream."""
    streams = np.random.SeedSequence(seed).spawn(groups)

    def job(g):
        return draw(np.random.default_rng(streams[g]), per_group)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(groups)))
    else:
        parts = [job(g) for g in range(groups)]
    return np.stack(parts)


def _finish(X, groups, per_group, auto, variance_bound, source, seed, t0, pipeline, epsilon, delta, constant, hermitian, keep, extras):
    est = median_of_means(X.reshape(-1), groups)
    if hermitian and abs(complex(est).imag) > epsilon / 10:
        raise NumericalError(f"imaginary part {complex(est).imag:.3e} of a Hermitian mean value exceeds eps/10")
    flat = X.reshape(-1)
    var = float(np.mean(np.abs(flat - flat.mean()) ** 2)) if flat.size > 1 else 0.0
    return EstimateReport(
        estimate=complex(est),
        epsilon=epsilon,
        delta=delta,
        n_samples=groups * per_group,
        groups=groups,
        variance_bound_used=float(variance_bound),
        variance_source=source,
        seed=seed,
        wall_time=time.perf_counter() - t0,
        pipeline=pipeline,
        auto_sized=auto,
        sizing_constant=constant,
        sample_variance=var,
        extras=extras,
        samples=flat if keep else None,
    )


def _variance_bound(mode, O: ProductObservable, oracle_fn) -> tuple[float, str]:
    if mode is None or mode == "trivial":
        return O.two_norm_sq, "trivial"
    if mode == "oracle":
        purity = oracle_fn()
        return O.two_norm_sq * purity, "oracle"
    value = float(mode)
    if value <= 0:
        raise SpecError("variance bound must be positive")
    return value, "user"


def _check_inputs(psi: ProductState, modes: int, O: ProductObservable, measured=()) -> ProductState:
    if psi.modes != modes or O.modes != modes:
        raise DimensionMismatch("inputs disagree on the mode count")
    if set(O.support) & set(measured):
        raise SpecError("observable support overlaps measured modes")
    if psi.norm == 0:
        raise SpecError("input state has zero norm")
    return psi.normalized()


def _full(alpha_A: np.ndarray, support: tuple, modes: int) -> np.ndarray:
    full = np.zeros(alpha_A.shape[:-1] + (modes,), complex)
    if support:
        full[..., list(support)] = alpha_A
    return full


# no feedforward ---------------------------------------------------------------------


def estimate_mean_value_no_ff(
    psi: ProductState,
    G: GaussianUnitary,
    O: ProductObservable,
    epsilon: float = 0.05,
    delta: float = 0.05,
    seed=None,
    variance_bound="trivial",
    n_samples: int | None = None,
    groups: int | None = None,
    workers: int = 1,
    sizing_constant: float = SIZING_CONSTANT,
    proposal_variance: float | None = None,
    keep_samples: bool = False,
) -> EstimateReport:
    """<psi|G^dag O G|psi> to additive error epsilon with confidence 1 - delta."""
    t0 = time.perf_counter()
    M = G.modes
    psi = _check_inputs(psi, M, O)
    seed = _resolve_seed(seed)
    sampler = CharSampler.from_observable(O, proposal_variance)
    state_c = [char_coefficients(np.outer(c, c.conj())) for c in psi.coeffs]
    hermitian = O.is_hermitian
    vb, source = _variance_bound(
        variance_bound, O, lambda: oracle_mean_value(psi, AdaptiveCircuit.no_feedforward(G), O).purity
    )
    groups, per_group, auto = _plan(vb, epsilon, delta, n_samples, groups, sizing_constant)

    def draw(rng, m):
        a = sampler.sample(m, rng)
        ap = push_displacement(G, _full(a, sampler.support, M))
        chi_rho = np.ones(m, complex)
        for i in range(M):
            chi_rho *= eval_char(state_c[i], ap[:, i])
        X = np.conj(chi_rho) * sampler.norm_sq / np.conj(sampler.chi(a))
        return X.real if hermitian else X

    X = _run_groups(draw, groups, per_group, seed, workers)
    extras = {"acceptance": sampler.acceptance, "proposal_variance": [s.variance for s in sampler.samplers]}
    return _finish(X, groups, per_group, auto, vb, source, seed, t0, "no_ff", epsilon, delta, sizing_constant, hermitian, keep_samples, extras)


# photon-number feedforward ----------------------------------------------------------


@dataclass
class BranchDistribution:
    """Chain-rule conditionals p(n_j | n_<j) over the adaptive branches.

    Outcomes run over {0..n_max} per measured mode.  Branch codes are
    sum_j n_j radix^j, where ``radix`` is the Fourier base used to resolve the
    counts; it exceeds n_max + 1 when a measured mode can register more photons
    than the cutoff.
    """

    cutoff: int
    measured: tuple
    conditionals: list
    probabilities: np.ndarray
    deficit: float
    radix: int = 0

    @property
    def base(self) -> int:
        return max(self.radix, self.cutoff + 1)

    def pattern(self, code: int) -> tuple:
        out = []
        for _ in self.measured:
            code, n = divmod(code, self.base)
            out.append(n)
        return tuple(out)

    def codes(self) -> list:
        """Codes whose digits all lie in the outcome alphabet."""
        r = self.base
        return [sum(n * r**j for j, n in enumerate(p)) for p in itertools.product(range(self.cutoff + 1), repeat=len(self.measured))]

    def as_dict(self) -> dict:
        return {self.pattern(c): float(self.probabilities[c]) for c in self.codes()}

    def sample_codes(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Codes drawn one measured mode at a time."""
        r = self.base
        code = np.zeros(count, dtype=np.int64)
        for j, cond in enumerate(self.conditionals):
            p = cond[code]
            u = rng.random(count)
            x = np.minimum((u[:, None] > np.cumsum(p, axis=1)).sum(axis=1), p.shape[1] - 1)
            code = code + x * r**j
        return code


def alias_free_radix(psi: ProductState, circuit: AdaptiveCircuit) -> int:
    """Fourier base that resolves every count a measured mode can show.

    Passive circuits conserve photon number, so the input support bounds every
    count and the base T + 1 is exact.  With squeezing the support is unbounded
    and 0 is returned (use n_max + 1, folding the small tail above the cutoff).
    """
    gates = [circuit.initial, *circuit.table.values()]
    if not all(G.is_passive for G in gates):
        return 0
    top = sum(int(np.flatnonzero(np.abs(c) > 0).max(initial=0)) for c in psi.coeffs)
    return max(psi.cutoff + 1, top + 1)


def branch_distribution(psi: ProductState, circuit: AdaptiveCircuit, force: bool = False) -> BranchDistribution:
    psi = psi.normalized()
    b, L, meas = psi.cutoff + 1, circuit.L, circuit.measured_modes
    r = max(b, alias_free_radix(psi, circuit))
    conditionals = []
    kept = 0.0
    for j in range(1, L + 1):
        cond = np.zeros((r ** (j - 1), b))
        for prev in itertools.product(range(b), repeat=j - 1):
            C = circuit.branch_unitary(prev, steps=j - 1)
            q = generating_function_table(C, psi, modes=meas[:j], force=force, radix=r).invert()
            base = sum(n * r**i for i, n in enumerate(prev))
            w = q[base + r ** (j - 1) * np.arange(b)]
            if np.max(np.abs(w.imag)) > NORMALIZATION_TOL or np.min(w.real) < -NORMALIZATION_TOL:
                raise NormalizationFailure(f"branch weights after {prev} are not a probability vector")
            w = np.clip(w.real, 0.0, None)
            if j == L:
                kept += float(w.sum())
            cond[base] = w / w.sum() if w.sum() > 0 else np.full(b, 1.0 / b)
        conditionals.append(cond)
    probs = np.zeros(r**L)
    dist = BranchDistribution(psi.cutoff, meas, conditionals, probs, abs(1.0 - kept), r)
    for code in dist.codes():
        pat, prefix, p = dist.pattern(code), 0, 1.0
        for j, n in enumerate(pat):
            p *= conditionals[j][prefix, n]
            prefix += n * r**j
        probs[code] = p
    return dist


def estimate_mean_value_photon_ff(
    psi: ProductState,
    circuit: AdaptiveCircuit,
    O: ProductObservable,
    epsilon: float = 0.05,
    delta: float = 0.05,
    seed=None,
    variance_bound="trivial",
    n_samples: int | None = None,
    groups: int | None = None,
    workers: int = 1,
    sizing_constant: float = SIZING_CONSTANT,
    proposal_variance: float | None = None,
    keep_samples: bool = False,
    force: bool = False,
) -> EstimateReport:
    """Mean value after photon counting with outcome-dependent gates.

    X(n, alpha) = ||O||^2 N(n, alpha) / (p(n) conj(chi_O(alpha))) with
    N(n, alpha) = <psi|D(-alpha'_n) G_n^dag Pi_n G_n|psi>, the projector Pi_n
    written as a discrete Fourier sum of phase shifters on the measured modes.
    """
    kw = dict(
        epsilon=epsilon, delta=delta, seed=seed, variance_bound=variance_bound, n_samples=n_samples,
        groups=groups, workers=workers, sizing_constant=sizing_constant,
        proposal_variance=proposal_variance, keep_samples=keep_samples,
    )
    if circuit.L == 0:
        return estimate_mean_value_no_ff(psi, circuit.initial, O, **kw)
    if circuit.kind != "photon":
        raise SpecError("photon-feedforward pipeline needs a photon-feedforward circuit")
    if circuit.L > FEEDFORWARD_MAX_L and not force:
        raise GuardExceeded(f"L={circuit.L} exceeds the feedforward guard {FEEDFORWARD_MAX_L}")
    t0 = time.perf_counter()
    M, L = circuit.modes, circuit.L
    psi = _check_inputs(psi, M, O, circuit.measured_modes)
    circuit.validate_table(psi.cutoff)
    seed = _resolve_seed(seed)
    sampler = CharSampler.from_observable(O, proposal_variance)
    hermitian = O.is_hermitian
    vb, source = _variance_bound(variance_bound, O, lambda: oracle_mean_value(psi, circuit, O).purity)
    groups, per_group, auto = _plan(vb, epsilon, delta, n_samples, groups, sizing_constant)

    dist = branch_distribution(psi, circuit, force)
    r = dist.base
    nb = r**L
    theta = 2 * np.pi / nb
    omega = np.zeros(M)
    for j, mode in enumerate(circuit.measured_modes):
        omega[mode] = r**j
    branches = {}
    for code in dist.codes():
        Gn = circuit.branch_unitary(dist.pattern(code))
        kernels, evals = [], []
        for k in range(nb):
            kern = conjugated_kernel(Gn, np.exp(-1j * k * theta * omega))
            kernels.append(kern)
            evals.append(OverlapEvaluator(kern, psi, psi))
        branches[code] = (Gn, kernels, evals)
    weights = np.exp(1j * theta * np.outer(np.arange(nb), np.arange(nb)))  # [code, k]

    def draw(rng, m):
        codes = dist.sample_codes(m, rng)
        a = sampler.sample(m, rng)
        chiO = sampler.chi(a)
        X = np.zeros(m, complex)
        for code in np.unique(codes):
            idx = np.flatnonzero(codes == code)
            Gn, kernels, evals = branches[code]
            left = -push_displacement(Gn, _full(a[idx], sampler.support, M))
            num = np.zeros(idx.size, complex)
            for k in range(nb):
                kd = kernels[k].displaced(left=left)
                num += weights[code, k] * evals[k].evaluate(kd.logc, kd.bz, kd.bw)
            num /= nb
            X[idx] = sampler.norm_sq * num / (dist.probabilities[code] * np.conj(chiO[idx]))
        return X.real if hermitian else X

    X = _run_groups(draw, groups, per_group, seed, workers)
    extras = {
        "acceptance": sampler.acceptance,
        "branch_probabilities": {",".join(map(str, k)): v for k, v in dist.as_dict().items()},
        "probability_deficit": dist.deficit,
        "fourier_radix": r,
    }
    return _finish(X, groups, per_group, auto, vb, source, seed, t0, "photon_ff", epsilon, delta, sizing_constant, hermitian, keep_samples, extras)


# Gaussian feedforward ---------------------------------------------------------------


def embed_gaussian(G: GaussianUnitary, modes, total: int) -> GaussianUnitary:
    """G acting on ``modes`` of a ``total``-mode system, identity elsewhere."""
    idx = list(modes)
    A = np.eye(total, dtype=complex)
    B = np.zeros((total, total), complex)
    A[np.ix_(idx, idx)] = G.transformA
    B[np.ix_(idx, idx)] = G.transformB
    return from_transform(A, B)


@dataclass
class OutcomeSampler:
    """Rejection sampler for the POVM outcome density p(beta) on R^(2m)."""

    density: object
    m: int
    mean: np.ndarray
    chol: np.ndarray
    envelope: float

    def proposal(self, x: np.ndarray) -> np.ndarray:
        d = 2 * self.m
        z = np.linalg.solve(self.chol, (x - self.mean).T).T
        logdet = 2 * np.sum(np.log(np.diag(self.chol)))
        return np.exp(-0.5 * np.sum(z**2, axis=1) - 0.5 * logdet - 0.5 * d * np.log(2 * np.pi))

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        d = 2 * self.m
        out, need, tries = [], count, 0
        while need > 0:
            k = int(need * self.envelope * 1.1) + 32
            x = self.mean + rng.standard_normal((k, d)) @ self.chol.T
            beta = x[:, : self.m] + 1j * x[:, self.m :]
            ratio = self.density(beta) / (self.envelope * self.proposal(x))
            if np.any(ratio > 1.0):
                raise EnvelopeViolation(f"outcome density exceeds the envelope by {ratio.max():.3f}")
            acc = beta[rng.random(k) < ratio][:need]
            out.append(acc)
            need -= acc.shape[0]
            tries += 1
            if tries > 10_000:
                raise SamplerFailure("outcome sampler made no progress")
        return np.concatenate(out)


def build_outcome_sampler(density, m: int, radius: float = 6.0) -> OutcomeSampler:
    """Moments from a grid scan, Gaussian proposal with 1.5x the covariance, envelope x1.2."""
    if m > 2:
        raise GuardExceeded("outcome grid scan supports at most two measured modes")
    points = 61 if m == 1 else 21
    for _ in range(5):
        xs = np.linspace(-radius, radius, points)
        mesh = np.stack(np.meshgrid(*([xs] * (2 * m)), indexing="ij"), axis=-1).reshape(-1, 2 * m)
        beta = mesh[:, :m] + 1j * mesh[:, m:]
        p = density(beta)
        cell = (xs[1] - xs[0]) ** (2 * m)
        mass = float(np.sum(p) * cell)
        if mass > 0.999 and np.max(p[np.max(np.abs(mesh), axis=1) >= radius - 1e-9], initial=0) < 1e-6 * p.max():
            break
        radius *= 1.6
    else:
        raise SamplerFailure(f"outcome density not captured on the scan grid (mass {mass:.4f})")
    if np.min(p) < -1e-10:
        raise NumericalError("outcome density is negative on the scan grid")
    w = p / p.sum()
    mean = w @ mesh
    cov = (mesh - mean).T @ ((mesh - mean) * w[:, None])
    cov = 1.5 * cov + 0.05 * np.eye(2 * m)
    chol = np.linalg.cholesky(cov)
    s = OutcomeSampler(density, m, mean, chol, 1.0)
    env = ENVELOPE_INFLATION * float(np.max(p / s.proposal(mesh)))
    s.envelope = env
    probe = mean + np.random.default_rng(0).standard_normal((20_000, 2 * m)) @ (2.0 * chol).T
    pb = probe[:, :m] + 1j * probe[:, m:]
    if np.any(density(pb) > env * s.proposal(probe)):
        raise EnvelopeViolation("outcome envelope fails on the probe set")
    return s


def _dd_phase(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """D(a) D(b) = exp(phase) D(a + b)."""
    return 0.5 * np.sum(a * np.conj(b) - np.conj(a) * b, axis=-1)


def estimate_mean_value_gaussian_ff(
    psi: ProductState,
    circuit: AdaptiveCircuit,
    O: ProductObservable,
    epsilon: float = 0.05,
    delta: float = 0.05,
    seed=None,
    variance_bound="trivial",
    n_samples: int | None = None,
    groups: int | None = None,
    workers: int = 1,
    sizing_constant: float = SIZING_CONSTANT,
    proposal_variance: float | None = None,
    keep_samples: bool = False,
    force: bool = False,
) -> EstimateReport:
    """Mean value after a Gaussian POVM with displacement feedforward.

    The POVM element commutes to the end of the circuit, so both p(beta) and
    the numerator of X reduce to vacuum projections on the measured modes of a
    circuit conjugated by the seed squeezer.
    """
    kw = dict(
        epsilon=epsilon, delta=delta, seed=seed, variance_bound=variance_bound, n_samples=n_samples,
        groups=groups, workers=workers, sizing_constant=sizing_constant,
        proposal_variance=proposal_variance, keep_samples=keep_samples,
    )
    if circuit.L == 0:
        return estimate_mean_value_no_ff(psi, circuit.total_unitary(), O, **kw)
    if circuit.kind != "gaussian":
        raise SpecError("Gaussian-feedforward pipeline needs a Gaussian-POVM circuit")
    if circuit.L > FEEDFORWARD_MAX_L and not force:
        raise GuardExceeded(f"L={circuit.L} exceeds the feedforward guard {FEEDFORWARD_MAX_L}")
    t0 = time.perf_counter()
    M, m = circuit.modes, circuit.L
    meas = list(circuit.measured_modes)
    psi = _check_inputs(psi, M, O, meas)
    seed = _resolve_seed(seed)
    sampler = CharSampler.from_observable(O, proposal_variance)
    hermitian = O.is_hermitian
    vb, source = _variance_bound(variance_bound, O, lambda: oracle_mean_value(psi, circuit, O).purity)
    groups, per_group, auto = _plan(vb, epsilon, delta, n_samples, groups, sizing_constant)

    SG = embed_gaussian(circuit.seed, meas, M)
    SGd = adjoint(SG)
    G1 = circuit.initial
    G1p = compose(SGd, G1)
    s0 = np.ones(M, complex)
    s0[meas] = 0.0
    K1 = conjugated_kernel(G1p, s0)
    ev1 = OverlapEvaluator(K1, psi, psi)
    norm_m = np.pi**m

    def density(beta):
        u = push_displacement(SG, _full(np.atleast_2d(beta), tuple(meas), M))
        p = push_displacement(G1p, u)
        kd = K1.displaced(left=p, right=-p)
        return ev1.evaluate(kd.logc, kd.bz, kd.bw).real / norm_m

    outcomes = build_outcome_sampler(density, m)

    if circuit.callback is None:
        Gp = compose(SGd, circuit.final, G1)
        K0 = conjugated_kernel(Gp, s0)
        ev0 = OverlapEvaluator(K0, psi, psi)

    def numerator(beta, a_full):
        u = push_displacement(SG, _full(beta, tuple(meas), M))
        if circuit.callback is None:
            gamma = circuit.displacement_for(beta)
            dlt = push_displacement(G1, gamma)
            p1 = push_displacement(Gp, u - a_full)
            p2 = -push_displacement(Gp, u)
            kd = K0.displaced(left=p1 - dlt, right=p2 + dlt)
            phase = _dd_phase(-dlt, p1) + _dd_phase(p2, dlt)
            return np.exp(phase) * ev0.evaluate(kd.logc, kd.bz, kd.bw) / norm_m
        out = np.zeros(beta.shape[0], complex)
        for i in range(beta.shape[0]):
            G2, gamma = circuit.callback(beta[i])
            if not acts_trivially_on(G2, meas):
                raise SpecError("feedforward gate from the callback acts on measured modes")
            gamma = np.asarray(gamma, complex).reshape(M)
            Gpi = compose(SGd, G2, G1)
            dlt = push_displacement(G1, gamma)
            p1 = push_displacement(Gpi, u[i] - a_full[i])
            p2 = -push_displacement(Gpi, u[i])
            kd = conjugated_kernel(Gpi, s0).displaced(left=p1 - dlt, right=p2 + dlt)
            phase = _dd_phase(-dlt, p1) + _dd_phase(p2, dlt)
            out[i] = np.exp(phase) * overlap(kd, psi, psi) / norm_m
        return out

    def draw(rng, count):
        beta = outcomes.sample(count, rng)
        a = sampler.sample(count, rng)
        pb = density(beta)
        num = numerator(beta, _full(a, sampler.support, M))
        X = sampler.norm_sq * num / (pb * np.conj(sampler.chi(a)))
        return X.real if hermitian else X

    X = _run_groups(draw, groups, per_group, seed, workers)
    extras = {
        "acceptance": sampler.acceptance,
        "outcome_acceptance": 1.0 / outcomes.envelope,
        "outcome_mean": outcomes.mean.tolist(),
    }
    return _finish(X, groups, per_group, auto, vb, source, seed, t0, "gaussian_ff", epsilon, delta, sizing_constant, hermitian, keep_samples, extras)


def estimate_mean_value(psi: ProductState, circuit: AdaptiveCircuit, O: ProductObservable, **kw) -> EstimateReport:
    """Dispatch on the circuit kind."""
    if circuit.kind == "none":
        kw.pop("force", None)
        return estimate_mean_value_no_ff(psi, circuit.initial, O, **kw)
    if circuit.kind == "photon":
        return estimate_mean_value_photon_ff(psi, circuit, O, **kw)
    return estimate_mean_value_gaussian_ff(psi, circuit, O, **kw)
