"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the pytest
terminal summary and by ``python3 tests/test_acceptance.py``.
"""
import time

import numpy as np
import pytest

from agsim import bench
from agsim.circuit import AdaptiveCircuit
from agsim.estimators import (
    branch_distribution,
    estimate_mean_value_gaussian_ff,
    estimate_mean_value_no_ff,
    estimate_mean_value_photon_ff,
    sample_count,
)
from agsim.fock import oracle_amplitude, oracle_expand_antinormal, oracle_marginal_table, oracle_mean_value
from agsim.gaussian import (
    beamsplitter,
    compose,
    conjugate_phase_shifter,
    from_transform,
    interferometer,
    phase_shifter,
    squeezer,
)
from agsim.marginal import amplitude_low_mode, marginal_table
from agsim.matrixfn import (
    LowRankSymmetric,
    loop_hafnian_enum,
    loop_hafnian_lowrank,
    permanent_lowrank_plus_identity,
    permanent_ryser,
)
from agsim.states import ProductObservable, ProductState, coherent_vector, projector
from helpers import haar, random_gaussian, random_state

RESULTS = {}

EPS, DELTA, RUNS = 0.05, 0.05, 200
# allowed failure fraction over RUNS seeded runs: delta plus ~3 binomial sigmas
FAIL_BUDGET = DELTA + 0.046
# Gauss-Hermite oracle tolerance used by the Gaussian-feedforward criterion
QUAD_TOL = 0.01


def record(k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k:>2}: {detail}"
    RESULTS[k] = line
    print(line)
    return ok


def _crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_c01_marginal_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, worst_sum, count = 0.0, 0.0, 0
    for i in range(120):
        if i % 2 == 0:
            M = int(rng.integers(1, 4))
            G = random_gaussian(M, 1000 + i, squeeze=0.4, n_squeezers=int(rng.integers(1, M + 1)))
            L, cutoff = 1, int(rng.integers(1, 3))
        else:
            M = int(rng.integers(2, 5))
            G = interferometer(haar(M, 2000 + i))
            L, cutoff = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        modes = tuple(sorted(rng.choice(M, size=min(L, M), replace=False).tolist()))
        psi = random_state(M, cutoff, rng)
        fast = marginal_table(G, psi, modes=modes)
        slow = oracle_marginal_table(psi, G, psi, len(modes), modes=modes, fold=True)
        worst = max(worst, max(abs(fast[k] - slow[k]) for k in fast))
        worst_sum = max(worst_sum, abs(sum(fast.values()) - 1))
        count += 1
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and worst_sum < 1e-9 and dt < 600
    assert record(1, ok, f"{count} instances, max |fast-oracle| {worst:.1e}, max |sum-1| {worst_sum:.1e}, {dt:.0f}s")


def test_c02_lowrank_loop_hafnian():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    worst = 0.0
    for i in range(220):
        n, r = int(rng.integers(1, 11)), int(rng.integers(1, 5))
        S = LowRankSymmetric(n, _crandn(rng, n, r), _crandn(rng, n))
        want = loop_hafnian_enum(S.dense())
        worst = max(worst, abs(loop_hafnian_lowrank(S) - want) / max(abs(want), 1e-300))
    dt = time.perf_counter() - t0
    assert record(2, worst < 1e-9 and dt < 120, f"220 instances n<=10 r<=4, max rel err {worst:.1e}, {dt:.0f}s")


def test_c03_gurvits_second_algorithm():
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    worst = 0.0
    for i in range(220):
        N, L = int(rng.integers(1, 11)), int(rng.integers(1, 4))
        u, v = 0.6 * _crandn(rng, N, L), 0.6 * _crandn(rng, N, L)
        want = permanent_ryser(np.eye(N) + u @ v.T)
        worst = max(worst, abs(permanent_lowrank_plus_identity(u, v) - want) / max(abs(want), 1e-300))
    dt = time.perf_counter() - t0
    assert record(3, worst < 1e-9 and dt < 120, f"220 instances N<=10 L<=3, max rel err {worst:.1e}, {dt:.0f}s")


def test_c04_low_mode_amplitude():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    worst = 0.0
    for i in range(220):
        M = int(rng.integers(1, 5))
        L = int(rng.integers(1, min(M, 2) + 1))
        cutoff = int(rng.integers(1, 3))
        U = haar(M, 4000 + i)
        psi, phl = random_state(M, cutoff, rng), random_state(L, cutoff, rng)
        vac = np.zeros(cutoff + 1)
        vac[0] = 1
        full = ProductState.from_modes(list(phl.coeffs) + [vac] * (M - L), cutoff)
        want = oracle_amplitude(full, interferometer(U), psi)
        worst = max(worst, abs(amplitude_low_mode(U, psi, phl) - want))
    dt = time.perf_counter() - t0
    assert record(4, worst < 1e-10 and dt < 300, f"220 instances M<=4 L<=2, max abs err {worst:.1e}, {dt:.0f}s")


def test_c05_lowrank_structure():
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    worst_sv, bad_sq = 0.0, 0
    for i in range(120):
        M = int(rng.integers(2, 7))
        L = int(rng.integers(1, M))
        G0 = random_gaussian(M, 5000 + i, squeeze=0.5, n_squeezers=M)
        phases = np.zeros(M)
        phases[rng.choice(M, size=L, replace=False)] = rng.uniform(0.1, 2 * np.pi - 0.1, size=L)
        Gh, c = conjugate_phase_shifter(G0, phases)
        for X in (c.W, c.Z):
            sv = np.linalg.svd(X, compute_uv=False)
            if sv.size > 2 * L:
                worst_sv = max(worst_sv, float(sv[2 * L :].max()))
        bad_sq += int(np.sum(np.abs(Gh.squeeze) > 1e-12) > 2 * L)
    dt = time.perf_counter() - t0
    ok = worst_sv < 1e-10 and bad_sq == 0 and dt < 60
    assert record(5, ok, f"120 instances, max tail singular value {worst_sv:.1e}, gates with >2L squeezers {bad_sq}, {dt:.0f}s")


def _no_ff_configs():
    out = []
    rng = np.random.default_rng(106)
    specs = [
        (1, {0: projector(1, 2)}),
        (2, {1: projector(0, 2)}),
        (3, {1: projector(1, 2)}),
        (3, {0: projector(0, 2), 2: projector(1, 2)}),
        (3, {2: projector(2, 2)}),
    ]
    for i, (M, ops) in enumerate(specs):
        G = random_gaussian(M, 600 + i, squeeze=0.3, n_squeezers=min(M, 2))
        out.append((random_state(M, 2, rng), G, ProductObservable(M, 2, ops)))
    return out


def _confidence(run, exact, tol):
    misses = 0
    for s in range(RUNS):
        misses += abs(run(s).estimate - exact) > tol
    return misses / RUNS


def test_c06_no_feedforward_confidence():
    t0 = time.perf_counter()
    worst_frac, worst_var, ok = 0.0, 0.0, True
    for psi, G, O in _no_ff_configs():
        orc = oracle_mean_value(psi, AdaptiveCircuit.no_feedforward(G), O)
        bound = O.two_norm_sq * orc.purity
        first = estimate_mean_value_no_ff(psi, G, O, EPS, DELTA, seed=0, variance_bound=bound)
        ratio = first.sample_variance / bound
        frac = _confidence(lambda s: estimate_mean_value_no_ff(psi, G, O, EPS, DELTA, seed=s, variance_bound=bound), orc.value, EPS)
        worst_frac, worst_var = max(worst_frac, frac), max(worst_var, ratio)
        ok &= frac <= FAIL_BUDGET and ratio <= 1.1
    dt = time.perf_counter() - t0
    ok &= dt < 1200
    assert record(6, ok, f"5 configs x {RUNS} runs, worst failure fraction {worst_frac:.3f}, worst Var(X)/bound {worst_var:.3f}, {dt:.0f}s")


def _photon_configs():
    G1 = interferometer(haar(3, 70))
    t1 = {(n,): compose(phase_shifter(3, [0, 0.7 * n, 0.3 * n]), beamsplitter(3, 1, 2, 0.4 * n)) for n in range(3)}
    c1 = (ProductState.fock([1, 1, 0], 2), AdaptiveCircuit.photon(G1, [0], t1), ProductObservable(3, 2, {1: projector(1, 2)}))
    G2 = compose(beamsplitter(3, 0, 2, 0.5), interferometer(haar(3, 71)))
    t2 = {(n,): beamsplitter(3, 0, 1, 0.3 + 0.5 * n, 0.2 * n) for n in range(3)}
    psi2 = ProductState.from_modes([[0.6, 0.8, 0], [0, 1, 0], [0.8, 0, 0.6]], 2)
    c2 = (psi2, AdaptiveCircuit.photon(G2, [2], t2), ProductObservable(3, 2, {0: projector(0, 2)}))
    return [c1, c2]


def test_c07_photon_feedforward_confidence():
    t0 = time.perf_counter()
    worst_frac, worst_z, ok = 0.0, 0.0, True
    for psi, circ, O in _photon_configs():
        orc = oracle_mean_value(psi, circ, O)
        bound = O.two_norm_sq * orc.purity
        frac = _confidence(
            lambda s: estimate_mean_value_photon_ff(psi, circ, O, EPS, DELTA, seed=s, variance_bound=bound), orc.value, EPS
        )
        dist = branch_distribution(psi, circ)
        codes = dist.sample_codes(10_000, np.random.default_rng(7))
        freq = np.bincount(codes, minlength=dist.probabilities.size) / codes.size
        codes_in = dist.codes()
        exact = np.array([orc.branch_probabilities[dist.pattern(c)] for c in codes_in])
        exact = exact / exact.sum()
        freq = freq[codes_in]
        sd = np.sqrt(np.maximum(exact * (1 - exact), 1e-12) / codes.size)
        z = float(np.max(np.abs(freq - exact) / sd))
        worst_frac, worst_z = max(worst_frac, frac), max(worst_z, z)
        ok &= frac <= FAIL_BUDGET and z <= 4
    dt = time.perf_counter() - t0
    ok &= dt < 1200
    assert record(7, ok, f"2 configs x {RUNS} runs, worst failure fraction {worst_frac:.3f}, branch max |z| {worst_z:.2f}, {dt:.0f}s")


def test_c08_gaussian_feedforward_confidence():
    t0 = time.perf_counter()
    G1 = compose(beamsplitter(2, 0, 1, 0.6), squeezer(2, 0, 0.2))
    seed_gate = from_transform(np.eye(1), np.zeros((1, 1)))
    circ = AdaptiveCircuit.gaussian(G1, [0], seed_gate, np.array([[0], [0.3]]), np.array([[0], [0.1j]]), phase_shifter(2, [0, 0.4]))
    psi = ProductState.from_modes([coherent_vector(0.3, 3), np.array([0, 1, 0, 0])], 3)
    O = ProductObservable(2, 3, {1: projector(1, 3)})
    orc = oracle_mean_value(psi, circ, O, check_quadrature=True)
    quad = orc.quadrature_error
    bound = O.two_norm_sq * orc.purity
    first = estimate_mean_value_gaussian_ff(psi, circ, O, EPS, DELTA, seed=0, variance_bound=bound)
    ratio = first.sample_variance / bound
    frac = _confidence(
        lambda s: estimate_mean_value_gaussian_ff(psi, circ, O, EPS, DELTA, seed=s, variance_bound=bound), orc.value, EPS + QUAD_TOL
    )
    dt = time.perf_counter() - t0
    ok = frac <= FAIL_BUDGET and quad <= QUAD_TOL and ratio <= 1.1 and dt < 1200
    assert record(8, ok, f"{RUNS} runs, failure fraction {frac:.3f} at eps+{QUAD_TOL}, quadrature error {quad:.1e}, Var(X)/bound {ratio:.3f}, {dt:.0f}s")


def test_c09_antinormal_ordering():
    t0 = time.perf_counter()
    rng = np.random.default_rng(109)
    worst = 0.0
    for i in range(60):
        N = 1 + i % 5
        chk = oracle_expand_antinormal(N, _crandn(rng, N, N))
        worst = max(worst, float(np.max(np.abs(chk.direct - chk.expansion))))
    dt = time.perf_counter() - t0
    assert record(9, worst < 1e-10 and dt < 120, f"60 matrices N<=5, max entrywise diff {worst:.1e}, {dt:.0f}s")


def test_c10_sizing_and_determinism():
    psi, G, O = _no_ff_configs()[2]
    ok, notes = True, []
    for eps, delta, vb in [(0.1, 0.05, "trivial"), (0.2, 0.01, 0.37), (0.07, 0.2, 2.5)]:
        r = estimate_mean_value_no_ff(psi, G, O, eps, delta, seed=1, variance_bound=vb)
        floor = sample_count(r.variance_bound_used, eps, delta)
        ok &= r.auto_sized and r.n_samples >= floor and r.n_samples - floor < r.groups
        notes.append(f"{r.n_samples}>={floor}")
    a = estimate_mean_value_no_ff(psi, G, O, 0.1, 0.05, seed=42, keep_samples=True)
    b = estimate_mean_value_no_ff(psi, G, O, 0.1, 0.05, seed=42, keep_samples=True)
    c = estimate_mean_value_no_ff(psi, G, O, 0.1, 0.05, seed=42, keep_samples=True, workers=4)
    same_seed = a.deterministic_dict() == b.deterministic_dict() and np.array_equal(a.samples, b.samples)
    same_workers = a.deterministic_dict() == c.deterministic_dict() and np.array_equal(a.samples, c.samples)
    pc = _photon_configs()[0]
    p1 = estimate_mean_value_photon_ff(*pc, seed=3, n_samples=4800, keep_samples=True)
    p4 = estimate_mean_value_photon_ff(*pc, seed=3, n_samples=4800, keep_samples=True, workers=4)
    same_workers &= np.array_equal(p1.samples, p4.samples)
    ok &= same_seed and same_workers
    assert record(10, ok, f"sizing {', '.join(notes)}; same seed identical {same_seed}; workers 1 vs 4 identical {same_workers}")


def test_c11_complexity_smoke():
    parts, ok = [], True
    for name in ("linear-gurvits", "loop-hafnian"):
        res = bench.run_suite(name, repeats=3)
        checked = [r for r in res.rows if r.checked]
        worst = max(max(r.step_ratio / r.predicted_ratio, r.predicted_ratio / r.step_ratio) for r in checked) if checked else float("nan")
        ok &= res.passed
        parts.append(f"{name} {len(checked)} steps checked, worst step ratio x{worst:.2f}, exponent {res.exponent:.2f}")
    assert record(11, ok, "; ".join(parts))


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except AssertionError:
                pass
    print("\n".join(RESULTS[k] for k in sorted(RESULTS)))
