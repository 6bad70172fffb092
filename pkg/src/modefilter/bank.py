"""Multiple-model estimator banks over a common measurement stream.

Two flavors share one bank of per-mode unknown-input filters:

* The *dynamic* estimator assumes the active mode follows a Markov chain.
  Before each step, every filter restarts from a moment-matched mixture
  of all filters weighted by the transition-conditioned probabilities
  (the classical interacting-multiple-model pattern); mode probabilities
  are then updated with the per-mode residual likelihoods.
* The *static* estimator assumes one fixed but unknown mode: filters run
  independently and probabilities accumulate multiplicatively.  A small
  probability floor keeps written-off modes revivable, and an optional
  threshold restarts collapsed filters from the currently most probable
  one.

The combined output is a hard selection: the state, input and covariance
estimates of the maximum a posteriori mode (ties go to the lowest mode
index).  All per-mode loops run in a fixed order, so results are
reproducible bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._linalg import sym
from .errors import (DegenerateUpdate, InvalidModel, ModeUnreachableWarning,
                     NumericalBreakdown)
from .filtering import FilterState, init, step
from .likelihood import log_likelihood, update_probabilities
from .models import DecomposedModeModel

__all__ = ["FusedEstimate", "MMState", "StaticMMConfig", "validate_transition",
           "init_mm", "mixing_weights", "mix_initial_conditions",
           "dynamic_step", "static_step"]


@dataclass(frozen=True)
class FusedEstimate:
    """Hard-selected output: the MAP mode's state and input estimates."""

    x_hat: np.ndarray
    P_x: np.ndarray
    d_hat: np.ndarray | None
    P_d: np.ndarray | None


@dataclass(frozen=True)
class MMState:
    """Bank of per-mode filters plus the mode-probability vector.

    ``reinitialized`` lists the mode indices whose filters were restarted
    from the MAP mode during the step that produced this state.
    """

    k: int
    bank: tuple[FilterState, ...]
    mu: np.ndarray
    q_map: int
    fused: FusedEstimate
    reinitialized: tuple[int, ...] = ()


@dataclass(frozen=True)
class StaticMMConfig:
    """Knobs for the static (fixed true mode) estimator.

    ``prob_floor`` is the minimum posterior probability any mode is
    allowed to keep (0 disables flooring); ``reinit_threshold`` restarts
    the filter of any mode whose posterior drops below it, copying the
    state of the ``reinit_source`` mode (only ``"map"`` is implemented).
    """

    prob_floor: float = 1e-4
    reinit_threshold: float = 0.0
    reinit_source: str = "map"

    def __post_init__(self):
        if not 0.0 <= self.prob_floor < 1.0:
            raise InvalidModel(f"prob_floor must be in [0, 1), "
                               f"got {self.prob_floor!r}")
        if self.reinit_source != "map":
            raise InvalidModel(f"unknown reinit_source {self.reinit_source!r}")


def validate_transition(P: np.ndarray, n_modes: int | None = None,
                        tol: float = 1e-12) -> np.ndarray:
    """Check that ``P`` is a square row-stochastic matrix."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidModel(f"transition matrix must be square, got {P.shape}")
    if n_modes is not None and P.shape[0] != n_modes:
        raise InvalidModel(f"transition matrix is {P.shape[0]}x{P.shape[0]} "
                           f"but the bank has {n_modes} modes")
    if np.any(P < 0.0):
        raise InvalidModel("transition matrix has negative entries")
    rows = P.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > tol):
        raise InvalidModel(f"transition matrix rows must sum to 1 "
                           f"within {tol:g}, got sums {rows}")
    return P


def init_mm(models: Sequence[DecomposedModeModel], x0_hat: np.ndarray,
            P0: np.ndarray, y0: np.ndarray, u0: np.ndarray,
            mu0: np.ndarray | None = None) -> MMState:
    """Initialize one filter per mode from a shared prior.

    Each mode extracts its own ``z1`` component from ``y0``.  ``mu0``
    defaults to the uniform distribution.
    """
    if not models:
        raise InvalidModel("need at least one mode model")
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    N = len(models)
    if mu0 is None:
        mu = np.full(N, 1.0 / N)
    else:
        mu = np.asarray(mu0, dtype=float).reshape(-1)
        if mu.shape != (N,):
            raise InvalidModel(f"mu0 must have length {N}, got {mu.shape}")
        if np.any(mu < 0.0) or abs(mu.sum() - 1.0) > 1e-12:
            raise InvalidModel("mu0 must be a probability vector")
    bank = tuple(init(dec, x0_hat, P0, dec.T1 @ y0, u0) for dec in models)
    q = int(np.argmax(mu))
    fused = FusedEstimate(x_hat=bank[q].x_hat, P_x=bank[q].P_x,
                          d_hat=None, P_d=None)
    return MMState(k=0, bank=bank, mu=mu, q_map=q, fused=fused)


def mixing_weights(mu: np.ndarray, P: np.ndarray):
    """Transition-conditioned mixing weights.

    Returns ``(mu_pred, W)`` where ``mu_pred[j] = sum_i P[i, j] mu[i]`` is
    the predicted mode probability and column ``W[:, j]`` holds the
    probabilities that the chain sat in mode ``i`` given it is now in
    ``j``.  A zero predicted probability makes the posterior column
    undefined; it is replaced by the uniform distribution and a
    :class:`ModeUnreachableWarning` is emitted.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    P = validate_transition(P, mu.size)
    mu_pred = P.T @ mu
    W = P * mu[:, None]
    for j in range(mu.size):
        if mu_pred[j] > 0.0:
            W[:, j] /= mu_pred[j]
        else:
            warnings.warn(f"mode {j} has zero predicted probability; "
                          f"using uniform mixing weights",
                          ModeUnreachableWarning, stacklevel=2)
            W[:, j] = 1.0 / mu.size
    return mu_pred, W


def mix_initial_conditions(bank: Sequence[FilterState], W: np.ndarray):
    """Moment-matched mixed starting points, one per target mode.

    For each target mode ``j`` the state estimate is the ``W[:, j]``
    weighted mean over the bank, and the covariance picks up the usual
    spread-of-means terms.  The feedthrough input estimate is mixed the
    same way but only over source modes whose ``d1`` has the same length
    (weights renormalized over that subset); with no usable mass the
    target keeps its own estimate.  Dynamics-only input quantities are
    never mixed.

    Returns a list of ``(x_mix, P_x_mix, d1_mix, P_d1_mix)`` tuples.
    """
    N = len(bank)
    W = np.asarray(W, dtype=float)
    if W.shape != (N, N):
        raise InvalidModel(f"W must be {N}x{N}, got {W.shape}")
    out = []
    for j in range(N):
        w = W[:, j]
        x_mix = sum(w[i] * bank[i].x_hat for i in range(N))
        P_mix = sum(
            w[i] * (np.outer(bank[i].x_hat - x_mix, bank[i].x_hat - x_mix)
                    + bank[i].P_x)
            for i in range(N))
        dim_j = bank[j].d1_hat.shape[0]
        same = [i for i in range(N) if bank[i].d1_hat.shape[0] == dim_j]
        mass = float(sum(w[i] for i in same))
        if mass > 0.0 and dim_j:
            wj = [w[i] / mass for i in same]
            d1_mix = sum(wj_i * bank[i].d1_hat for wj_i, i in zip(wj, same))
            P_d1_mix = sum(
                wj_i * (np.outer(bank[i].d1_hat - d1_mix,
                                 bank[i].d1_hat - d1_mix) + bank[i].P_d1)
                for wj_i, i in zip(wj, same))
        else:
            d1_mix = bank[j].d1_hat
            P_d1_mix = bank[j].P_d1
        out.append((x_mix, sym(P_mix), d1_mix, sym(np.atleast_2d(P_d1_mix))))
    return out


def _reinit_from(source: FilterState, dec: DecomposedModeModel,
                 y_now: np.ndarray, u_now: np.ndarray) -> FilterState:
    """Restart a mode's filter from another mode's state.

    The state estimate and covariance are copied; the feedthrough input
    estimate is re-derived from the current measurement (mode input
    dimensions may differ, so it cannot be copied).
    """
    M1 = dec.M1()
    z1 = dec.T1 @ y_now
    d1 = M1 @ (z1 - dec.C1 @ source.x_hat - dec.D1 @ u_now)
    P_d1 = sym(M1 @ (dec.C1 @ source.P_x @ dec.C1.T + dec.R1) @ M1.T)
    return FilterState(k=source.k, x_hat=source.x_hat, P_x=source.P_x,
                       d1_hat=d1, P_d1=P_d1)


def _fused(bank: Sequence[FilterState], q: int) -> FusedEstimate:
    fs = bank[q]
    return FusedEstimate(x_hat=fs.x_hat, P_x=fs.P_x,
                         d_hat=fs.d_hat_prev, P_d=fs.P_d_prev)


def _advance(models: Sequence[DecomposedModeModel],
             starts: Sequence[FilterState], prior: np.ndarray,
             u_prev, u_now, y_now):
    """Run every mode's filter and update probabilities.

    Modes whose step breaks down numerically get a ``-inf`` log
    likelihood; if at least one survives, the broken filters are
    restarted from the MAP mode afterwards.
    """
    N = len(models)
    new_bank: list[FilterState | None] = [None] * N
    loglike = np.empty(N)
    failed = []
    for j in range(N):
        try:
            fs = step(starts[j], models[j], u_prev, u_now, y_now)
            new_bank[j] = fs
            loglike[j] = log_likelihood(fs.nu_bar, fs.R_star2).value
        except NumericalBreakdown:
            failed.append(j)
            loglike[j] = -np.inf
    mu = update_probabilities(prior, loglike)
    q = int(np.argmax(mu))
    for j in failed:
        new_bank[j] = _reinit_from(new_bank[q], models[j], y_now, u_now)
    return tuple(new_bank), mu, q, tuple(failed)


def dynamic_step(mm: MMState, models: Sequence[DecomposedModeModel],
                 P: np.ndarray, u_prev: np.ndarray, u_now: np.ndarray,
                 y_now: np.ndarray) -> MMState:
    """One step of the Markov-switching (interacting) estimator."""
    mu_pred, W = mixing_weights(mm.mu, P)
    mixed = mix_initial_conditions(mm.bank, W)
    starts = [replace(mm.bank[j], x_hat=x, P_x=Px, d1_hat=d1, P_d1=Pd1)
              for j, (x, Px, d1, Pd1) in enumerate(mixed)]
    bank, mu, q, failed = _advance(models, starts, mu_pred,
                                   u_prev, u_now, y_now)
    return MMState(k=mm.k + 1, bank=bank, mu=mu, q_map=q,
                   fused=_fused(bank, q), reinitialized=failed)


def static_step(mm: MMState, models: Sequence[DecomposedModeModel],
                cfg: StaticMMConfig, u_prev: np.ndarray, u_now: np.ndarray,
                y_now: np.ndarray) -> MMState:
    """One step of the fixed-mode estimator (no mixing, floored posterior)."""
    bank, mu, q, failed = _advance(models, mm.bank, mm.mu,
                                   u_prev, u_now, y_now)
    mu = _apply_floor(mu, cfg.prob_floor)
    q = int(np.argmax(mu))
    reinit = list(failed)
    if cfg.reinit_threshold > 0.0:
        bank = list(bank)
        for j in range(len(models)):
            if j != q and mu[j] < cfg.reinit_threshold and j not in reinit:
                bank[j] = _reinit_from(bank[q], models[j], y_now, u_now)
                reinit.append(j)
        bank = tuple(bank)
    return MMState(k=mm.k + 1, bank=bank, mu=mu, q_map=q,
                   fused=_fused(bank, q), reinitialized=tuple(sorted(reinit)))


def _apply_floor(mu: np.ndarray, floor: float) -> np.ndarray:
    """Clamp probabilities to ``floor`` and redistribute the excess.

    Entries below the floor are pinned to it exactly and the remaining
    mass is split proportionally among the others; the clamp is repeated
    until no entry sits below the floor, so the result respects the floor
    even after normalization.
    """
    if floor <= 0.0:
        return mu
    N = mu.size
    if floor * N >= 1.0:
        raise InvalidModel(f"prob_floor {floor:g} is infeasible for {N} modes")
    mu = mu.copy()
    pinned = np.zeros(N, dtype=bool)
    for _ in range(N):
        low = (mu < floor) & ~pinned
        if not low.any():
            break
        pinned |= low
        free = ~pinned
        mu[pinned] = floor
        spare = 1.0 - floor * pinned.sum()
        total = mu[free].sum()
        if total <= 0.0:
            mu[free] = spare / max(free.sum(), 1)
        else:
            mu[free] *= spare / total
    return mu
