"""Timing sweeps that compare measured cost growth with operation counts.

Each sweep point records the best of a few wall-clock timings and the
predicted operation count.  A step between consecutive points is checked when
the smaller timing clears ``OVERHEAD_FLOOR``; below it Python call overhead
dominates and the ratio says nothing about the algorithm.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from math import comb

import numpy as np

from .marginal import generating_function_linear
from .matrixfn import LowRankSymmetric, loop_hafnian_lowrank, permanent_ryser
from .states import ProductState

OVERHEAD_FLOOR = 5e-3
STEP_FACTOR = 3.0


@dataclass
class BenchRow:
    suite: str
    size: int
    seconds: float
    predicted: float
    step_ratio: float | None = None
    predicted_ratio: float | None = None
    checked: bool = False
    ok: bool | None = None


@dataclass
class BenchResult:
    suite: str
    rows: list
    exponent: float | None

    @property
    def passed(self) -> bool:
        checked = [r for r in self.rows if r.checked]
        return bool(checked) and all(r.ok for r in checked)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["suite", "size", "seconds", "predicted", "step_ratio", "predicted_ratio", "checked", "ok"])
        for r in self.rows:
            w.writerow([r.suite, r.size, f"{r.seconds:.6g}", f"{r.predicted:.6g}",
                        "" if r.step_ratio is None else f"{r.step_ratio:.4g}",
                        "" if r.predicted_ratio is None else f"{r.predicted_ratio:.4g}",
                        int(r.checked), "" if r.ok is None else int(r.ok)])
        return buf.getvalue()


def _best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def run_sweep(suite: str, points, repeats: int = 3, factor: float = STEP_FACTOR, floor: float = OVERHEAD_FLOOR) -> BenchResult:
    """``points`` yields (size, callable, predicted count)."""
    rows = []
    for size, fn, pred in points:
        rows.append(BenchRow(suite, size, _best_time(fn, repeats), float(pred)))
    for prev, cur in zip(rows, rows[1:]):
        cur.step_ratio = cur.seconds / prev.seconds
        cur.predicted_ratio = cur.predicted / prev.predicted
        cur.checked = prev.seconds >= floor
        if cur.checked:
            rel = cur.step_ratio / cur.predicted_ratio
            cur.ok = 1 / factor <= rel <= factor
    heavy = [r for r in rows if r.seconds >= floor]
    exponent = None
    if len(heavy) >= 2:
        exponent = float(np.polyfit(np.log([r.predicted for r in heavy]), np.log([r.seconds for r in heavy]), 1)[0])
    return BenchResult(suite, rows, exponent)


def ryser_points(sizes=range(10, 21, 2), seed: int = 0):
    rng = np.random.default_rng(seed)
    for n in sizes:
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        yield n, (lambda A=A: permanent_ryser(A)), n * 2.0**n


def loop_hafnian_points(sizes=range(4, 17, 2), rank: int = 4, seed: int = 0):
    rng = np.random.default_rng(seed)
    for n in sizes:
        S = LowRankSymmetric(n, rng.normal(size=(n, rank)) + 0j, rng.normal(size=n) + 0j)
        yield n, (lambda S=S: loop_hafnian_lowrank(S)), n * comb(2 * n + rank - 1, rank - 1)


def linear_gurvits_points(modes=range(3, 8), L: int = 3, cutoff: int = 1, seed: int = 0):
    """Sweep the mode count at fixed L; steps in L multiply the count by ~(M n_max)^2 and leave too few points."""
    rng = np.random.default_rng(seed)
    for M in modes:
        u = rng.normal(size=(M, L)) + 1j * rng.normal(size=(M, L))
        v = rng.normal(size=(M, L)) + 1j * rng.normal(size=(M, L))
        psi = ProductState.from_modes([rng.normal(size=cutoff + 1) + 0j for _ in range(M)], cutoff)
        yield M, (lambda u=u, v=v, psi=psi: generating_function_linear(u, v, psi, psi)), M * (M * cutoff + 1) ** (2 * L)


SUITES = {
    "ryser": ryser_points,
    "loop-hafnian": loop_hafnian_points,
    "linear-gurvits": linear_gurvits_points,
}


def run_suite(name: str, repeats: int = 3) -> BenchResult:
    if name not in SUITES:
        raise KeyError(name)
    return run_sweep(name, SUITES[name](), repeats)
