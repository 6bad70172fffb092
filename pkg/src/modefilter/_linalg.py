"""Symmetric-matrix helpers shared by the filter and analysis modules.

Rank decisions (which eigenvalues count as nonzero) are made in several
places: innovation whitening, pseudo-inverses inside the filter gain, and
pseudo-determinants inside the likelihood.  They all route through
:func:`eigh_keep` with one relative cutoff so that the decisions agree with
each other exactly; in particular the gain's pseudo-inverse and the
whitening basis always see the same numerical rank.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidModel

# Relative eigenvalue / singular-value cutoff used for every rank decision.
RANK_RTOL = 1e-12


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetrize ``a`` as ``(a + a.T) / 2``."""
    return (a + a.T) / 2.0


def eigh_keep(a: np.ndarray, rtol: float = RANK_RTOL):
    """Eigendecomposition of a symmetric PSD matrix plus a keep mask.

    Returns ``(w, v, keep)`` with eigenvalues ascending and ``keep`` marking
    eigenvalues above ``max(a.shape) * max(w) * rtol``.  A zero or empty
    matrix keeps nothing.
    """
    a = np.asarray(a, dtype=float)
    if a.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0)), np.zeros(0, dtype=bool)
    w, v = np.linalg.eigh(sym(a))
    wmax = float(w[-1])
    if wmax <= 0.0:
        keep = np.zeros(w.shape, dtype=bool)
    else:
        keep = w > max(a.shape) * wmax * rtol
    return w, v, keep


def psd_pinv(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix."""
    a = np.asarray(a, dtype=float)
    w, v, keep = eigh_keep(a, rtol)
    if not keep.any():
        return np.zeros(a.shape)
    vk = v[:, keep]
    return (vk / w[keep]) @ vk.T


def psd_logpdet(a: np.ndarray, rtol: float = RANK_RTOL) -> tuple[float, int]:
    """Log pseudo-determinant and rank of a symmetric PSD matrix.

    The pseudo-determinant of a rank-zero matrix is 1 by convention, so the
    log is 0.0.
    """
    w, _, keep = eigh_keep(a, rtol)
    if not keep.any():
        return 0.0, 0
    return float(np.sum(np.log(w[keep]))), int(keep.sum())


def psd_sqrt_factor(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """A factor ``L`` with ``L @ L.T == a`` for symmetric PSD ``a``.

    Rank-deficient covariances yield a thin factor; used for noise sampling.
    """
    w, v, keep = eigh_keep(a, rtol)
    return v[:, keep] * np.sqrt(w[keep])


def psd_inv_sqrt(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Symmetric inverse square root restricted to the range of ``a``."""
    a = np.asarray(a, dtype=float)
    w, v, keep = eigh_keep(a, rtol)
    if not keep.any():
        return np.zeros(a.shape)
    vk = v[:, keep]
    return (vk / np.sqrt(w[keep])) @ vk.T


def spectral_radius(a: np.ndarray) -> float:
    """Largest absolute eigenvalue of a square matrix (0.0 for empty)."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def require_symmetric(a: np.ndarray, name: str, atol: float = 1e-8) -> None:
    """Raise :class:`InvalidModel` unless ``a`` is square and symmetric."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidModel(f"{name} must be square, got shape {a.shape}")
    if a.size and not np.allclose(a, a.T, rtol=0.0, atol=atol):
        raise InvalidModel(f"{name} must be symmetric (tolerance {atol:g})")


def require_psd(a: np.ndarray, name: str, tol: float = 1e-10) -> None:
    """Raise :class:`InvalidModel` unless symmetric ``a`` is PSD."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return
    wmin = float(np.linalg.eigvalsh(sym(a))[0])
    if wmin < -tol:
        raise InvalidModel(f"{name} must be positive semidefinite "
                           f"(min eigenvalue {wmin:.3e})")
