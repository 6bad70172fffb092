"""Mode likelihoods and Bayesian mode-probability updates.

The measurement likelihood of a mode is the Gaussian density of its
residual ``nu_bar`` under the filter-computed covariance ``R_star2``.
That covariance is typically rank deficient (input estimation consumes
part of the measurement), so the density lives on the range of
``R_star2`` and is evaluated with the pseudo-inverse and the
pseudo-determinant.  Everything is computed in log space; posterior
probabilities are normalized with the max-shift (log-sum-exp) trick so
that likelihood ratios survive even when individual densities underflow.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ._linalg import eigh_keep, psd_logpdet
from .errors import DegenerateUpdate

__all__ = ["LogDensity", "pseudo_det", "log_likelihood", "update_probabilities"]

_LOG_2PI = float(np.log(2.0 * np.pi))


class LogDensity(NamedTuple):
    """Log density value plus rank bookkeeping.

    ``support_violation`` is the Euclidean norm of the component of the
    residual outside the range of its covariance; a matched model keeps it
    at rounding level, so a persistently large value is a model-mismatch
    diagnostic rather than part of the density.
    """

    value: float
    support_violation: float
    rank: int


def pseudo_det(a: np.ndarray) -> float:
    """Product of the nonzero eigenvalues of a symmetric PSD matrix.

    The empty product (rank zero) is 1.0.
    """
    logdet, _ = psd_logpdet(np.asarray(a, dtype=float))
    return float(np.exp(logdet))


def log_likelihood(nu_bar: np.ndarray, R_star2: np.ndarray) -> LogDensity:
    """Rank-aware Gaussian log density of a residual.

    Evaluates ``-q/2 - (p_R/2) log(2 pi) - log(pdet R_star2)/2`` where
    ``q`` is the squared Mahalanobis norm of ``nu_bar`` under the
    pseudo-inverse of ``R_star2`` and ``p_R`` its rank.
    """
    nu_bar = np.asarray(nu_bar, dtype=float).reshape(-1)
    R_star2 = np.asarray(R_star2, dtype=float)
    w, v, keep = eigh_keep(R_star2)
    rank = int(keep.sum())
    if rank:
        vk = v[:, keep]
        coords = vk.T @ nu_bar
        quad = float(coords @ (coords / w[keep]))
        logdet = float(np.sum(np.log(w[keep])))
        inside = vk @ coords
    else:
        quad = 0.0
        logdet = 0.0
        inside = np.zeros_like(nu_bar)
    violation = float(np.linalg.norm(nu_bar - inside))
    value = -0.5 * quad - 0.5 * rank * _LOG_2PI - 0.5 * logdet
    return LogDensity(value=value, support_violation=violation, rank=rank)


def update_probabilities(prior: np.ndarray, loglike: np.ndarray) -> np.ndarray:
    """Posterior mode probabilities from a prior and log likelihoods.

    Works entirely in log space: ``log prior + loglike`` is shifted by its
    maximum before exponentiation, which makes the result invariant under
    a common additive offset of the log likelihoods and keeps ratios of
    deeply underflowing densities intact.  Zero-prior modes stay at zero.

    Raises
    ------
    DegenerateUpdate
        If every mode ends up with zero mass (all priors zero, or every
        log likelihood is ``-inf`` on the reachable modes).
    ValueError
        On NaN log likelihoods or negative priors.
    """
    prior = np.asarray(prior, dtype=float).reshape(-1)
    loglike = np.asarray(loglike, dtype=float).reshape(-1)
    if prior.shape != loglike.shape:
        raise ValueError(f"prior and loglike lengths differ: "
                         f"{prior.shape} vs {loglike.shape}")
    if np.any(np.isnan(loglike)):
        raise ValueError("log likelihoods must not be NaN")
    if np.any(prior < 0.0):
        raise ValueError("prior probabilities must be non-negative")
    with np.errstate(divide="ignore"):
        lp = np.log(prior) + loglike
    if not np.any(lp > -np.inf):
        raise DegenerateUpdate("all modes received zero posterior mass")
    shift = float(np.max(lp))
    w = np.exp(lp - shift)
    return w / float(np.sum(w))
