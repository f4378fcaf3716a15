"""Small dense linear-algebra helpers shared across modules."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .tolerances import RANK_CUT, STRUCTURAL


def is_unitary(U: np.ndarray, tol: float = STRUCTURAL) -> bool:
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        return False
    return bool(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) <= tol)


def takagi(S: np.ndarray, rank_tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Takagi factorization S = U diag(sigma) U^T of a complex symmetric matrix.

    Solved through the real symmetric embedding [[Re S, Im S], [Im S, -Re S]],
    whose spectrum is {+sigma, -sigma}.  Eigenvectors [x; y] of the positive
    half give the Takagi vectors x + iy, and they are orthonormal even inside
    degenerate blocks.  Singular values at or below ``rank_tol * max(sigma)``
    are treated as zero; their columns are completed to a unitary basis.

    Returns the full unitary ``U`` (n x n) and ``sigma`` sorted descending.
    """
    S = np.asarray(S, dtype=complex)
    n = S.shape[0]
    if n == 0:
        return np.zeros((0, 0), complex), np.zeros(0)
    S = 0.5 * (S + S.T)
    R, J = S.real, S.imag
    emb = np.block([[R, J], [J, -R]])
    w, v = np.linalg.eigh(emb)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    smax = max(float(w[0]), 0.0)
    tol = (RANK_CUT if rank_tol is None else rank_tol) * smax
    keep = [k for k in range(n) if w[k] > tol and smax > 0]
    cols = v[:n, keep] + 1j * v[n:, keep]
    sig = w[keep]
    if len(keep) < n:
        if cols.shape[1]:
            comp = sla.null_space(cols.conj().T)
        else:
            comp = np.eye(n, dtype=complex)
        cols = np.hstack([cols, comp[:, : n - len(keep)]])
        sig = np.concatenate([sig, np.zeros(n - len(keep))])
    return cols, sig


def symmetric_lowrank_factor(S: np.ndarray, rank_tol: float | None = None) -> np.ndarray:
    """F with S = F F^T, keeping only singular values above the relative cut."""
    U, sig = takagi(S, rank_tol)
    smax = sig[0] if len(sig) else 0.0
    tol = (RANK_CUT if rank_tol is None else rank_tol) * smax
    r = int(np.sum(sig > tol)) if smax > 0 else 0
    return U[:, :r] * np.sqrt(sig[:r])[None, :]


def numerical_rank(X: np.ndarray, abs_tol: float = STRUCTURAL) -> int:
    s = np.linalg.svd(np.asarray(X), compute_uv=False)
    return int(np.sum(s > abs_tol))


def unitary_log_generator(U: np.ndarray) -> np.ndarray:
    """Hermitian h with U = expm(i h), from the complex Schur form."""
    T, Z = sla.schur(np.asarray(U, dtype=complex), output="complex")
    phases = np.angle(np.diag(T))
    return (Z * phases[None, :]) @ Z.conj().T
