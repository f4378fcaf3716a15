"""Adaptive circuits: a Gaussian unitary interleaved with mid-circuit measurements.

Three kinds are supported.

``none``      G applied to the input, no measurement.
``photon``    G_1, then photon counting on ``measured_modes[k]`` after step k and
              the outcome-dependent gate ``table[(n_1, ..., n_k)]``.  Later gates
              must act trivially on already-measured modes, so every projector
              commutes to the end of the circuit.
``gaussian``  G_1, a Gaussian POVM on ``measured_modes`` with elements
              D(beta) S|0><0|S^dag D(beta)^dag / pi^m, a displacement
              gamma = Gamma_1 beta + Gamma_2 conj(beta) on the unmeasured modes,
              then ``final``.  A callback beta -> (final_beta, gamma_beta) can
              replace the linear rule.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import BranchTableIncomplete, DimensionMismatch, SpecError
from .gaussian import GaussianUnitary, compose
from .tolerances import STRUCTURAL


def acts_trivially_on(G: GaussianUnitary, modes, tol: float = STRUCTURAL) -> bool:
    """True when G leaves the given modes untouched up to a phase on each."""
    A, B = G.transformA, G.transformB
    for i in modes:
        row = np.delete(A[i], i)
        col = np.delete(A[:, i], i)
        if abs(abs(A[i, i]) - 1) > tol or np.max(np.abs(row), initial=0) > tol:
            return False
        if np.max(np.abs(col), initial=0) > tol:
            return False
        if np.max(np.abs(B[i]), initial=0) > tol or np.max(np.abs(B[:, i]), initial=0) > tol:
            return False
    return True


@dataclass(frozen=True)
class AdaptiveCircuit:
    modes: int
    kind: str
    initial: GaussianUnitary
    measured_modes: tuple = ()
    table: Mapping = field(default_factory=dict, repr=False)
    final: GaussianUnitary | None = None
    seed: GaussianUnitary | None = None
    gamma1: np.ndarray | None = field(default=None, repr=False)
    gamma2: np.ndarray | None = field(default=None, repr=False)
    callback: Callable | None = field(default=None, repr=False)

    @property
    def L(self) -> int:
        return len(self.measured_modes)

    @property
    def unmeasured_modes(self) -> tuple:
        return tuple(i for i in range(self.modes) if i not in self.measured_modes)

    # constructors

    @classmethod
    def no_feedforward(cls, G: GaussianUnitary) -> "AdaptiveCircuit":
        return cls(G.modes, "none", G)

    @classmethod
    def photon(cls, initial: GaussianUnitary, measured_modes, table: Mapping) -> "AdaptiveCircuit":
        measured = tuple(int(m) for m in measured_modes)
        _check_modes(initial.modes, measured)
        clean = {}
        for key, gate in table.items():
            key = tuple(int(x) for x in key)
            k = len(key)
            if not 1 <= k <= len(measured):
                raise SpecError(f"feedforward key {key} has the wrong length")
            if gate.modes != initial.modes:
                raise DimensionMismatch("feedforward gates must act on all modes")
            if not acts_trivially_on(gate, measured[:k]):
                raise SpecError(f"gate for outcome {key} acts on an already-measured mode")
            clean[key] = gate
        if not measured:
            return cls.no_feedforward(initial)
        return cls(initial.modes, "photon", initial, measured, clean)

    @classmethod
    def gaussian(
        cls,
        initial: GaussianUnitary,
        measured_modes,
        seed: GaussianUnitary,
        gamma1,
        gamma2,
        final: GaussianUnitary,
        callback: Callable | None = None,
    ) -> "AdaptiveCircuit":
        measured = tuple(int(m) for m in measured_modes)
        _check_modes(initial.modes, measured)
        if not measured:
            return cls.no_feedforward(compose(final, initial))
        m, M = len(measured), initial.modes
        if seed.modes != m:
            raise DimensionMismatch(f"POVM seed acts on {seed.modes} modes, expected {m}")
        g1 = np.zeros((M, m), complex) if gamma1 is None else np.asarray(gamma1, complex)
        g2 = np.zeros((M, m), complex) if gamma2 is None else np.asarray(gamma2, complex)
        if g1.shape != (M, m) or g2.shape != (M, m):
            raise DimensionMismatch(f"feedforward coefficient matrices must be {M}x{m}")
        if np.any(g1[list(measured)]) or np.any(g2[list(measured)]):
            raise SpecError("displacement feedforward must not act on measured modes")
        if final.modes != M or not acts_trivially_on(final, measured):
            raise SpecError("final gate must act trivially on measured modes")
        return cls(M, "gaussian", initial, measured, {}, final, seed, g1, g2, callback)

    # branch bookkeeping

    def gate_after(self, prefix) -> GaussianUnitary:
        key = tuple(int(x) for x in prefix)
        try:
            return self.table[key]
        except KeyError:
            raise BranchTableIncomplete(f"no feedforward gate for outcome prefix {key}") from None

    def branch_unitary(self, outcomes, steps: int | None = None) -> GaussianUnitary:
        """G_{k+1}(n_1..n_k) ... G_2(n_1) G_1 for k = ``steps`` (default L)."""
        k = self.L if steps is None else steps
        gates = [self.initial]
        for j in range(1, k + 1):
            gates.append(self.gate_after(outcomes[:j]))
        return compose(*gates[::-1])

    def validate_table(self, cutoff: int) -> None:
        for k in range(1, self.L + 1):
            for key in itertools.product(range(cutoff + 1), repeat=k):
                self.gate_after(key)

    def displacement_for(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=complex)
        return beta @ self.gamma1.T + beta.conj() @ self.gamma2.T

    def total_unitary(self) -> GaussianUnitary:
        if self.kind == "none":
            return self.initial
        if self.kind == "gaussian":
            return compose(self.final, self.initial)
        raise SpecError("photon-feedforward circuits have no single total unitary")


def _check_modes(M: int, measured: tuple) -> None:
    if len(set(measured)) != len(measured):
        raise SpecError("measured modes must be distinct")
    if any(not 0 <= m < M for m in measured):
        raise DimensionMismatch("measured mode index out of range")
