"""Product states, dense states, photon patterns and product observables."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import CutoffExceeded, DimensionMismatch, SpecError, ZeroNormObservable


def _vec(x, cutoff: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=complex).reshape(-1)
    if v.shape[0] > cutoff + 1:
        tail = v[cutoff + 1 :]
        if np.any(tail != 0):
            raise CutoffExceeded(f"{name} has support above n_max={cutoff}")
        v = v[: cutoff + 1]
    if not np.all(np.isfinite(v)):
        raise SpecError(f"{name} has non-finite entries")
    out = np.zeros(cutoff + 1, dtype=complex)
    out[: v.shape[0]] = v
    return out


@dataclass(frozen=True)
class ProductState:
    """|psi> = prod_i sum_n a^(i)_n |n>_i with every mode truncated at ``cutoff``."""

    modes: int
    cutoff: int
    coeffs: tuple

    def __post_init__(self):
        if len(self.coeffs) != self.modes:
            raise DimensionMismatch(f"{len(self.coeffs)} mode vectors for {self.modes} modes")
        vecs = tuple(_vec(c, self.cutoff, f"mode {i}") for i, c in enumerate(self.coeffs))
        object.__setattr__(self, "coeffs", vecs)

    @property
    def norm(self) -> float:
        return float(np.prod([np.linalg.norm(c) for c in self.coeffs]))

    def normalized(self) -> "ProductState":
        return ProductState(self.modes, self.cutoff, tuple(c / np.linalg.norm(c) for c in self.coeffs))

    def mode_degree(self, i: int) -> int:
        nz = np.flatnonzero(self.coeffs[i])
        return int(nz[-1]) if nz.size else 0

    def dense(self) -> "DenseState":
        t = np.ones((), dtype=complex)
        for c in self.coeffs:
            t = np.multiply.outer(t, c)
        return DenseState.from_tensor(t)

    def with_cutoff(self, cutoff: int) -> "ProductState":
        return ProductState(self.modes, cutoff, self.coeffs)

    def restrict(self, modes) -> "ProductState":
        modes = list(modes)
        return ProductState(len(modes), self.cutoff, tuple(self.coeffs[i] for i in modes))

    # constructors

    @classmethod
    def vacuum(cls, modes: int, cutoff: int) -> "ProductState":
        return cls.fock([0] * modes, cutoff)

    @classmethod
    def fock(cls, pattern, cutoff: int) -> "ProductState":
        vecs = []
        for n in pattern:
            if n > cutoff or n < 0:
                raise CutoffExceeded(f"photon number {n} outside 0..{cutoff}")
            v = np.zeros(cutoff + 1, dtype=complex)
            v[n] = 1.0
            vecs.append(v)
        return cls(len(vecs), cutoff, tuple(vecs))

    @classmethod
    def from_modes(cls, vectors, cutoff: int) -> "ProductState":
        return cls(len(vectors), cutoff, tuple(vectors))


def coherent_vector(alpha: complex, cutoff: int) -> np.ndarray:
    """Coherent-state Fock coefficients truncated at ``cutoff`` and renormalized."""
    n = np.arange(cutoff + 1)
    v = np.array([alpha**k / np.sqrt(float(factorial(k))) for k in n], dtype=complex)
    return v / np.linalg.norm(v)


def squeezed_vacuum_vector(r: float, cutoff: int) -> np.ndarray:
    """S(r)|0> coefficients cosh^{-1/2} r tanh^{k/2} r sqrt(k!)/(2^{k/2}(k/2)!) on even k, renormalized."""
    v = np.zeros(cutoff + 1, dtype=complex)
    t = np.tanh(r)
    for k in range(0, cutoff + 1, 2):
        v[k] = t ** (k // 2) * np.sqrt(float(factorial(k))) / (2 ** (k // 2) * factorial(k // 2))
    v /= np.sqrt(np.cosh(r))
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class DenseState:
    """Amplitudes over {0..n_max}^M, flattened with mode 0 varying fastest."""

    modes: int
    cutoff: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if a.shape[0] != (self.cutoff + 1) ** self.modes:
            raise DimensionMismatch("amplitude vector length must be (n_max+1)^M")
        object.__setattr__(self, "amplitudes", a)

    def tensor(self) -> np.ndarray:
        """View with axis i indexing the photon number of mode i."""
        return self.amplitudes.reshape((self.cutoff + 1,) * self.modes, order="F")

    @classmethod
    def from_tensor(cls, t: np.ndarray) -> "DenseState":
        t = np.asarray(t, dtype=complex)
        return cls(t.ndim, t.shape[0] - 1 if t.ndim else 0, t.reshape(-1, order="F"))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitude(self, pattern) -> complex:
        return complex(self.tensor()[tuple(pattern)])

    def inner(self, other: "DenseState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class PhotonPattern:
    counts: tuple

    def __post_init__(self):
        c = tuple(int(x) for x in self.counts)
        if any(x < 0 for x in c):
            raise SpecError("photon counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    def __len__(self) -> int:
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)

    def check(self, cutoff: int) -> "PhotonPattern":
        if any(x > cutoff for x in self.counts):
            raise CutoffExceeded(f"pattern {self.counts} exceeds n_max={cutoff}")
        return self


# observables ------------------------------------------------------------------


def number_operator(cutoff: int) -> np.ndarray:
    return np.diag(np.arange(cutoff + 1)).astype(complex)


def projector(k: int, cutoff: int) -> np.ndarray:
    if not 0 <= k <= cutoff:
        raise CutoffExceeded(f"projector index {k} outside 0..{cutoff}")
    P = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    P[k, k] = 1.0
    return P


def lowering(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1)), 1).astype(complex)


def quadrature_x(cutoff: int) -> np.ndarray:
    a = lowering(cutoff)
    return (a + a.conj().T) / np.sqrt(2.0)


@dataclass(frozen=True)
class ProductObservable:
    """O = (tensor over i in support of O_i) tensored with identity elsewhere."""

    modes: int
    cutoff: int
    ops: dict

    def __post_init__(self):
        d = self.cutoff + 1
        clean = {}
        for k in sorted(self.ops):
            if not 0 <= int(k) < self.modes:
                raise DimensionMismatch(f"observable mode {k} outside 0..{self.modes - 1}")
            O = np.asarray(self.ops[k], dtype=complex)
            if O.shape != (d, d):
                raise DimensionMismatch(f"operator on mode {k} must be {d}x{d}, got {O.shape}")
            if not np.all(np.isfinite(O)):
                raise SpecError(f"operator on mode {k} has non-finite entries")
            if np.linalg.norm(O) == 0:
                raise ZeroNormObservable(f"operator on mode {k} has zero two-norm")
            clean[int(k)] = O
        object.__setattr__(self, "ops", clean)

    @property
    def support(self) -> tuple:
        return tuple(self.ops)

    def two_norms(self) -> dict:
        return {k: float(np.linalg.norm(O)) for k, O in self.ops.items()}

    @property
    def two_norm_sq(self) -> float:
        return float(np.prod([np.linalg.norm(O) ** 2 for O in self.ops.values()]))

    @property
    def is_hermitian(self) -> bool:
        return all(np.allclose(O, O.conj().T, atol=1e-12) for O in self.ops.values())
