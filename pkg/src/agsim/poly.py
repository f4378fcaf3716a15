"""Bounded-degree multivariate polynomials with complex coefficients.

Exponent vectors are packed into a single integer with a mixed radix of
``cap_i + 1``.  The packed key coincides with the C-order flat index of the
dense coefficient array, so the two storage modes share one key space:

* dense ndarray when ``prod(cap_i + 1) <= DENSE_LIMIT``
* sorted (keys, coefficients) arrays otherwise

Only exact zeros are pruned; the algorithms built on top are exact and
rounding is confined to the final comparison.
"""
from __future__ import annotations

from math import factorial, prod
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BadGrouping, CapMismatch, CapOverflow

DENSE_LIMIT = 2**20
KEY_LIMIT = 2**62
_CHUNK = 1 << 22


def _odd_double_factorial(e: int) -> int:
    # (e-1)!! for even e, with (-1)!! = 1
    out = 1
    for k in range(e - 1, 0, -2):
        out *= k
    return out


class SparsePoly:
    """Polynomial in ``nvars`` indeterminates, truncated at per-variable caps."""

    __slots__ = ("nvars", "caps", "_strides", "_dense", "_keys", "_coef")

    def __init__(self, caps: Sequence[int]):
        caps = tuple(int(c) for c in caps)
        if any(c < 0 for c in caps):
            raise ValueError("degree caps must be nonnegative")
        size = prod(c + 1 for c in caps)
        if size > KEY_LIMIT:
            raise CapOverflow(f"exponent space of size {size} exceeds the allocation guard")
        self.nvars = len(caps)
        self.caps = caps
        strides = []
        acc = 1
        for c in reversed(caps):
            strides.append(acc)
            acc *= c + 1
        self._strides = np.array(strides[::-1], dtype=np.int64)
        self._dense = None
        self._keys = np.zeros(0, dtype=np.int64)
        self._coef = np.zeros(0, dtype=complex)

    # construction -------------------------------------------------------

    @property
    def space_size(self) -> int:
        return prod(c + 1 for c in self.caps)

    @property
    def prefers_dense(self) -> bool:
        return self.space_size <= DENSE_LIMIT

    @classmethod
    def zero(cls, caps: Sequence[int]) -> "SparsePoly":
        return cls(caps)

    @classmethod
    def constant(cls, caps: Sequence[int], value: complex) -> "SparsePoly":
        return cls.from_terms(caps, {(0,) * len(caps): value})

    @classmethod
    def from_terms(cls, caps: Sequence[int], terms: Mapping[tuple, complex]) -> "SparsePoly":
        p = cls(caps)
        if not terms:
            return p._finish_sparse(np.zeros(0, np.int64), np.zeros(0, complex))
        exps = np.array([tuple(e) for e in terms], dtype=np.int64).reshape(len(terms), p.nvars)
        coef = np.array(list(terms.values()), dtype=complex)
        ok = np.all(exps <= np.array(p.caps, dtype=np.int64), axis=1) & np.all(exps >= 0, axis=1)
        exps, coef = exps[ok], coef[ok]
        keys = exps @ p._strides if p.nvars else np.zeros(len(coef), np.int64)
        return p._reduce(keys, coef)

    @classmethod
    def linear(cls, caps: Sequence[int], coeffs: Sequence[complex], const: complex = 0.0) -> "SparsePoly":
        """``const + sum_i coeffs[i] * x_i``."""
        n = len(caps)
        if len(coeffs) != n:
            raise CapMismatch("one linear coefficient per variable is required")
        terms = {(0,) * n: const}
        for i, c in enumerate(coeffs):
            if caps[i] >= 1:
                e = [0] * n
                e[i] = 1
                terms[tuple(e)] = c
        return cls.from_terms(caps, terms)

    @classmethod
    def from_dense(cls, caps: Sequence[int], arr: np.ndarray) -> "SparsePoly":
        p = cls(caps)
        arr = np.asarray(arr, dtype=complex)
        if arr.shape != tuple(c + 1 for c in p.caps):
            raise CapMismatch("dense array shape does not match caps")
        if p.prefers_dense:
            p._dense = arr.copy()
            return p
        flat = arr.ravel()
        keys = np.flatnonzero(flat)
        return p._finish_sparse(keys.astype(np.int64), flat[keys])

    def _reduce(self, keys: np.ndarray, coef: np.ndarray) -> "SparsePoly":
        if self.prefers_dense:
            flat = np.zeros(self.space_size, dtype=complex)
            np.add.at(flat, keys, coef)
            self._dense = flat.reshape(tuple(c + 1 for c in self.caps))
            return self
        if len(keys) == 0:
            return self._finish_sparse(keys, coef)
        uniq, inv = np.unique(keys, return_inverse=True)
        re = np.bincount(inv, weights=coef.real, minlength=len(uniq))
        im = np.bincount(inv, weights=coef.imag, minlength=len(uniq))
        return self._finish_sparse(uniq, re + 1j * im)

    def _finish_sparse(self, keys: np.ndarray, coef: np.ndarray) -> "SparsePoly":
        nz = coef != 0
        self._dense = None
        self._keys = np.ascontiguousarray(keys[nz], dtype=np.int64)
        self._coef = np.ascontiguousarray(coef[nz], dtype=complex)
        return self

    # views ----------------------------------------------------------------

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    def keys_and_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        if self._dense is not None:
            flat = self._dense.ravel()
            keys = np.flatnonzero(flat).astype(np.int64)
            return keys, flat[keys]
        return self._keys, self._coef

    def decode(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        out = np.empty((len(keys), self.nvars), dtype=np.int64)
        rem = keys.copy()
        for i, s in enumerate(self._strides):
            out[:, i], rem = np.divmod(rem, s)
        return out

    def exponents_and_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        keys, coef = self.keys_and_coefficients()
        return self.decode(keys), coef

    @property
    def terms(self) -> dict[tuple[int, ...], complex]:
        exps, coef = self.exponents_and_coefficients()
        return {tuple(int(x) for x in e): complex(c) for e, c in zip(exps, coef)}

    @property
    def n_terms(self) -> int:
        if self._dense is not None:
            return int(np.count_nonzero(self._dense))
        return len(self._keys)

    def coefficient(self, exps: Sequence[int]) -> complex:
        if len(exps) != self.nvars or any(e > c or e < 0 for e, c in zip(exps, self.caps)):
            return 0j
        key = int(np.dot(np.asarray(exps, dtype=np.int64), self._strides)) if self.nvars else 0
        if self._dense is not None:
            return complex(self._dense.ravel()[key])
        pos = np.searchsorted(self._keys, key)
        if pos < len(self._keys) and self._keys[pos] == key:
            return complex(self._coef[pos])
        return 0j

    def to_dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense.copy()
        if not self.prefers_dense and self.space_size > 4 * DENSE_LIMIT:
            raise CapOverflow("polynomial too large to densify")
        flat = np.zeros(self.space_size, dtype=complex)
        flat[self._keys] = self._coef
        return flat.reshape(tuple(c + 1 for c in self.caps))

    def magnitude_range(self) -> tuple[float, float]:
        """(smallest, largest) nonzero coefficient magnitude; conditioning diagnostic."""
        _, coef = self.keys_and_coefficients()
        if len(coef) == 0:
            return 0.0, 0.0
        mags = np.abs(coef)
        return float(mags.min()), float(mags.max())

    def evaluate(self, point: Sequence[complex]) -> complex:
        exps, coef = self.exponents_and_coefficients()
        if len(coef) == 0:
            return 0j
        pt = np.asarray(point, dtype=complex)
        return complex(np.sum(coef * np.prod(pt[None, :] ** exps, axis=1)))

    # arithmetic -------------------------------------------------------------

    def _check(self, other: "SparsePoly") -> None:
        if self.caps != other.caps:
            raise CapMismatch(f"caps differ: {self.caps} vs {other.caps}")

    def __add__(self, other: "SparsePoly") -> "SparsePoly":
        self._check(other)
        k1, c1 = self.keys_and_coefficients()
        k2, c2 = other.keys_and_coefficients()
        return SparsePoly(self.caps)._reduce(np.concatenate([k1, k2]), np.concatenate([c1, c2]))

    def scale(self, c: complex) -> "SparsePoly":
        out = SparsePoly(self.caps)
        if self._dense is not None:
            out._dense = self._dense * c
            return out
        return out._finish_sparse(self._keys.copy(), self._coef * c)

    def __mul__(self, other: "SparsePoly") -> "SparsePoly":
        return poly_mul_truncated(self, other)

    def __repr__(self) -> str:
        return f"SparsePoly(nvars={self.nvars}, caps={self.caps}, n_terms={self.n_terms})"


def poly_mul_truncated(p: SparsePoly, q: SparsePoly) -> SparsePoly:
    """Product of ``p`` and ``q`` with every term beyond the caps dropped."""
    p._check(q)
    caps = p.caps
    if p.n_terms < q.n_terms:
        p, q = q, p
    qexps, qcoef = q.exponents_and_coefficients()
    if p.prefers_dense:
        src = p.to_dense()
        out = np.zeros_like(src)
        shape = src.shape
        for e, c in zip(qexps, qcoef):
            dst = tuple(slice(int(ei), n) for ei, n in zip(e, shape))
            srcs = tuple(slice(0, n - int(ei)) for ei, n in zip(e, shape))
            out[dst] += c * src[srcs]
        res = SparsePoly(caps)
        res._dense = out
        return res

    pkeys, pcoef = p.keys_and_coefficients()
    pexps = p.decode(pkeys)
    capv = np.array(caps, dtype=np.int64)
    qkeys = qexps @ p._strides
    acc_k: list[np.ndarray] = []
    acc_c: list[np.ndarray] = []
    pending = 0
    partial = SparsePoly(caps)._finish_sparse(np.zeros(0, np.int64), np.zeros(0, complex))
    for e, k, c in zip(qexps, qkeys, qcoef):
        ok = np.all(pexps + e <= capv, axis=1)
        acc_k.append(pkeys[ok] + k)
        acc_c.append(pcoef[ok] * c)
        pending += int(ok.sum())
        if pending > _CHUNK:
            pk, pc = partial.keys_and_coefficients()
            partial = SparsePoly(caps)._reduce(np.concatenate([pk, *acc_k]), np.concatenate([pc, *acc_c]))
            acc_k, acc_c, pending = [], [], 0
    pk, pc = partial.keys_and_coefficients()
    return SparsePoly(caps)._reduce(np.concatenate([pk, *acc_k]), np.concatenate([pc, *acc_c]))


def poly_product(factors: Iterable[SparsePoly]) -> SparsePoly:
    factors = list(factors)
    if not factors:
        raise ValueError("empty product")
    out = factors[0]
    for f in factors[1:]:
        out = poly_mul_truncated(out, f)
    return out


def linear_powers(lin: SparsePoly, max_power: int) -> list[SparsePoly]:
    """[1, lin, lin**2, ..., lin**max_power] under the caps of ``lin``."""
    out = [SparsePoly.constant(lin.caps, 1.0)]
    for _ in range(max_power):
        out.append(poly_mul_truncated(out[-1], lin))
    return out


def extract_matched_degree_sum(
    p: SparsePoly,
    groupA: Sequence[int],
    groupB: Sequence[int] = (),
    weight: str = "factorial",
) -> complex:
    """Weighted sum of coefficients over the admissible monomials.

    ``weight="factorial"``: monomials with deg(groupA[s]) == deg(groupB[s]) for
    every s contribute ``coeff * prod_s d_s!``.  The two groups must partition
    the variables.

    ``weight="double_factorial"``: groupB must be empty and groupA must cover
    every variable; monomials with all-even degrees contribute
    ``coeff * prod_i (e_i - 1)!!``.  Odd monomials are dropped here rather than
    during the expansion.
    """
    groupA = [int(i) for i in groupA]
    groupB = [int(i) for i in groupB]
    allv = set(range(p.nvars))
    if any(i not in allv for i in groupA + groupB):
        raise BadGrouping("group index out of range")
    exps, coef = p.exponents_and_coefficients()
    if weight == "factorial":
        if len(groupA) != len(groupB) or set(groupA) & set(groupB):
            raise BadGrouping("groups must have equal length and be disjoint")
        if set(groupA) | set(groupB) != allv or len(set(groupA)) != len(groupA) or len(set(groupB)) != len(groupB):
            raise BadGrouping("groups must partition the variables")
        if len(coef) == 0:
            return 0j
        da = exps[:, groupA]
        db = exps[:, groupB]
        ok = np.all(da == db, axis=1)
        if not ok.any():
            return 0j
        maxd = int(da[ok].max()) if da.size else 0
        fact = np.array([float(factorial(k)) for k in range(maxd + 1)])
        w = np.prod(fact[da[ok]], axis=1) if da.size else np.ones(int(ok.sum()))
        return complex(np.sum(coef[ok] * w))
    if weight == "double_factorial":
        if groupB:
            raise BadGrouping("double-factorial extraction takes a single group")
        if set(groupA) != allv or len(set(groupA)) != len(groupA):
            raise BadGrouping("the group must cover every variable")
        if len(coef) == 0:
            return 0j
        ok = np.all(exps % 2 == 0, axis=1)
        if not ok.any():
            return 0j
        maxd = int(exps[ok].max()) if exps.size else 0
        dfact = np.array([float(_odd_double_factorial(k)) for k in range(maxd + 1)])
        w = np.prod(dfact[exps[ok]], axis=1) if exps.size else np.ones(int(ok.sum()))
        return complex(np.sum(coef[ok] * w))
    raise BadGrouping(f"unknown weight rule {weight!r}")
