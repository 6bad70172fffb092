"""Steady-state behavior of matched and mismatched filters.

When a fixed-gain unknown-input filter designed for mode ``q`` runs on
measurements produced by a different (stable) true mode, the pair (true
state, filter's one-step prediction) is itself a linear system driven by
the true process and measurement noise.  This module assembles that
closed-loop system, iterates its Lyapunov recursion to the stationary
covariance, and from it computes the *actual* covariance of mode ``q``'s
residual under the true model.  Comparing that covariance with the one
the filter believes in gives the per-step Kullback-Leibler divergence
between the true and assumed residual densities — which is exactly the
quantity that drives where multiple-model mode probabilities converge.
All divergences use pseudo-determinants and pseudo-inverses because
residual covariances are rank deficient whenever inputs are estimated.

One caveat: each model scores its *own* residual, projected onto its own
input-absorbing subspace.  When two models keep different subspaces the
score compares expectations of different random variables, so it is only
a true (nonnegative) KL divergence when those subspaces coincide — e.g.
with no unknown inputs at all.  Cross-model values can legitimately come
out negative; see ``kl_divergence``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._linalg import (psd_logpdet, psd_pinv, spectral_radius, sym)
from .errors import (InvalidModel, NoConvergence, NoSteadyState,
                     NumericalBreakdown, Unstable)
from .models import DecomposedModeModel, check_well_posed

__all__ = ["SteadyGains", "SteadyStatePair", "KLReport", "WinnerPrediction",
           "steady_state_gains", "mismatched_system", "noise_gain_variants",
           "lyapunov_limit", "mismatched_innovation_cov", "kl_divergence",
           "analyze_model_set", "predict_winner", "mean_ratio_trace"]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class SteadyGains:
    """Converged filter gains and covariances for one mode model."""

    L: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    P_x: np.ndarray
    P_x_star: np.ndarray
    R_star2: np.ndarray
    iterations: int


@dataclass(frozen=True)
class SteadyStatePair:
    """Closed-loop system of a true model driving a mode-``q`` filter.

    The state is ``[x_true; x_pred_q]`` (dimension ``2n``), the input is
    the stacked true noise ``[w; v]`` with covariance ``Q_breve``.
    ``Psi`` (the stationary state covariance) and ``R_cross`` (the actual
    residual covariance of the mode-``q`` filter) start as ``None`` and
    are filled by :func:`lyapunov_limit` / :func:`mismatched_innovation_cov`
    via :func:`dataclasses.replace`.
    """

    A_mismatch: np.ndarray
    W_mismatch: np.ndarray
    Q_breve: np.ndarray
    spectral_radius: float
    q_gains: SteadyGains
    Psi: np.ndarray | None = None
    R_cross: np.ndarray | None = None


def steady_state_gains(dec: DecomposedModeModel, P0: np.ndarray | None = None,
                       tol: float = 1e-12,
                       max_steps: int = 100_000) -> SteadyGains:
    """Iterate the filter's covariance recursion until the gains settle.

    Convergence means the max-norm change of both the measurement gain and
    the input-estimation gain drops below ``tol`` between consecutive
    steps.  The data-independent part of the recursion is exactly what
    :func:`modefilter.filtering.step` computes, so the limits are the
    gains a long matched run would reach.

    Raises
    ------
    NoSteadyState
        If the budget is exhausted before convergence.
    """
    check_well_posed(dec)
    n = dec.n
    C2, G2, R2 = dec.C2, dec.G2, dec.R2
    M1 = dec.M1()
    G1M1 = dec.G1 @ M1
    Ahat = dec.A - G1M1 @ dec.C1
    Qhat = G1M1 @ dec.R1 @ G1M1.T + dec.Q
    P = np.eye(n) if P0 is None else sym(np.asarray(P0, dtype=float))
    L_prev = None
    M2_prev = None
    for it in range(1, max_steps + 1):
        P_tilde = sym(Ahat @ P @ Ahat.T + Qhat)
        R2_tilde = sym(C2 @ P_tilde @ C2.T + R2)
        CG = C2 @ G2
        try:
            X = np.linalg.solve(R2_tilde, CG) if CG.size else np.zeros_like(CG)
            P_d2 = np.linalg.inv(CG.T @ X)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown(
                f"mode {dec.name!r}: singular input-estimation gram "
                f"matrix during gain iteration") from exc
        M2 = P_d2 @ X.T
        G2M2 = G2 @ M2
        IGMC = np.eye(n) - G2M2 @ C2
        P_star = sym(G2M2 @ R2 @ G2M2.T + IGMC @ P_tilde @ IGMC.T)
        CGM = C2 @ G2M2
        R_star2 = sym(C2 @ P_star @ C2.T + R2 - CGM @ R2 - R2 @ CGM.T)
        L = (P_star @ C2.T - G2M2 @ R2) @ psd_pinv(R_star2)
        ILC = np.eye(n) - L @ C2
        GMR = G2M2 @ R2
        P = sym(ILC @ GMR @ L.T + L @ GMR.T @ ILC.T
                + ILC @ P_star @ ILC.T + L @ R2 @ L.T)
        if not np.all(np.isfinite(P)):
            raise NumericalBreakdown(
                f"mode {dec.name!r}: covariance iteration diverged")
        if L_prev is not None:
            dL = np.max(np.abs(L - L_prev)) if L.size else 0.0
            dM = np.max(np.abs(M2 - M2_prev)) if M2.size else 0.0
            if max(dL, dM) < tol:
                return SteadyGains(L=L, M1=M1, M2=M2, P_x=P,
                                   P_x_star=P_star, R_star2=R_star2,
                                   iterations=it)
        L_prev, M2_prev = L, M2
    raise NoSteadyState(f"mode {dec.name!r}: filter gains did not settle "
                        f"within {max_steps} iterations")


def _noise_gain(q: DecomposedModeModel, gains: SteadyGains) -> np.ndarray:
    """Measurement-noise-to-prediction gain of the fixed-gain filter.

    One filter cycle maps the prediction ``xp[k]`` and measurement
    ``y[k]`` to ``xp[k+1]``; this is the coefficient of ``y[k]`` (and
    hence of the measurement noise ``v[k]``).
    """
    I2 = np.eye(q.l - q.p_H)
    Ahat = q.A - q.G1 @ gains.M1 @ q.C1
    ICGM = I2 - q.C2 @ q.G2 @ gains.M2
    return (Ahat @ (gains.L @ ICGM + q.G2 @ gains.M2) @ q.T2
            + q.G1 @ gains.M1 @ q.T1)


def noise_gain_variants(q: DecomposedModeModel,
                        gains: SteadyGains) -> dict[str, np.ndarray]:
    """Algebraic variants of the measurement-noise gain, for diagnostics.

    ``"recursion"`` is the gain actually used (derived from the one-step
    prediction recursion); ``"no_predictor_factor"`` omits the dynamics
    factor in front of the measurement-gain group; ``"plain"`` omits the
    input-absorption factor as well.  They coincide only in special cases;
    the Monte-Carlo agreement tests pin down ``"recursion"`` as the one
    consistent with an actual filter run.
    """
    I2 = np.eye(q.l - q.p_H)
    ICGM = I2 - q.C2 @ q.G2 @ gains.M2
    direct = q.G1 @ gains.M1 @ q.T1
    return {
        "recursion": _noise_gain(q, gains),
        "no_predictor_factor":
            (gains.L @ ICGM + q.G2 @ gains.M2) @ q.T2 + direct,
        "plain": (gains.L + q.G2 @ gains.M2) @ q.T2 + direct,
    }


def mismatched_system(true_dec: DecomposedModeModel,
                      q_dec: DecomposedModeModel,
                      q_gains: SteadyGains) -> SteadyStatePair:
    """Assemble the joint (true state, filter prediction) system.

    With ``Kv`` the measurement-noise gain of the fixed-gain mode-``q``
    filter, the joint dynamics are block lower triangular::

        [x[k+1] ]   [ A_true            0        ] [x[k] ]   [I  0 ] [w]
        [xp[k+1]] = [ Kv C_true   Ahat (I-LC2)(I-G2M2C2)] [xp[k]] + [0  Kv] [v]

    ``Q_breve`` stacks the *true* model's noise covariances.  Known and
    unknown inputs are taken to be zero (the stationary regime).
    """
    if true_dec.n != q_dec.n:
        raise InvalidModel("true and filter models must share the state "
                           f"dimension; got {true_dec.n} and {q_dec.n}")
    if true_dec.l != q_dec.l:
        raise InvalidModel("true and filter models must share the output "
                           f"dimension; got {true_dec.l} and {q_dec.l}")
    n, l = q_dec.n, q_dec.l
    Ahat = q_dec.A - q_dec.G1 @ q_gains.M1 @ q_dec.C1
    ILC = np.eye(n) - q_gains.L @ q_dec.C2
    IGMC = np.eye(n) - q_dec.G2 @ q_gains.M2 @ q_dec.C2
    Kv = _noise_gain(q_dec, q_gains)

    A_big = np.zeros((2 * n, 2 * n))
    A_big[:n, :n] = true_dec.A
    A_big[n:, :n] = Kv @ true_dec.C
    A_big[n:, n:] = Ahat @ ILC @ IGMC

    W_big = np.zeros((2 * n, n + l))
    W_big[:n, :n] = np.eye(n)
    W_big[n:, n:] = Kv

    Q_breve = np.zeros((n + l, n + l))
    Q_breve[:n, :n] = true_dec.Q
    Q_breve[n:, n:] = true_dec.R

    return SteadyStatePair(A_mismatch=A_big, W_mismatch=W_big,
                           Q_breve=Q_breve,
                           spectral_radius=spectral_radius(A_big),
                           q_gains=q_gains)


def lyapunov_limit(pair: SteadyStatePair, tol: float = 1e-12,
                   max_iters: int = 1_000_000) -> np.ndarray:
    """Stationary covariance of the joint system by fixed-point iteration.

    Iterates ``Psi <- A Psi A.T + W Q_breve W.T`` from zero until the
    max-norm update drops below ``tol``, or stalls at the rounding floor
    of ``Psi``'s magnitude (for large stationary covariances an absolute
    tolerance below machine precision is unreachable).

    Raises
    ------
    Unstable
        If the joint spectral radius is >= 1 (no stationary covariance).
    NoConvergence
        If the iteration budget runs out first.
    """
    if pair.spectral_radius >= 1.0:
        raise Unstable(f"joint spectral radius {pair.spectral_radius:.6f} "
                       f">= 1; stationary covariance does not exist")
    A = pair.A_mismatch
    drive = sym(pair.W_mismatch @ pair.Q_breve @ pair.W_mismatch.T)
    psi = np.zeros_like(drive)
    eps = float(np.finfo(float).eps)
    for _ in range(max_iters):
        nxt = sym(A @ psi @ A.T + drive)
        delta = float(np.max(np.abs(nxt - psi)))
        psi = nxt
        floor = 256.0 * eps * max(1.0, float(np.max(np.abs(psi))))
        if delta < max(tol, floor):
            return psi
    raise NoConvergence(f"Lyapunov iteration did not reach {tol:g} "
                        f"within {max_iters} iterations")


def mismatched_innovation_cov(pair: SteadyStatePair,
                              q_dec: DecomposedModeModel,
                              true_dec: DecomposedModeModel,
                              Psi: np.ndarray | None = None) -> np.ndarray:
    """Actual stationary covariance of mode ``q``'s residual under truth.

    The residual is the input-absorption factor ``(I - C2 G2 M2)`` applied
    to ``z2 - C2 xp``, and ``z2 - C2 xp = [T2 C_true, -C2] [x; xp] + T2 v``
    with the *true* measurement noise, so its covariance follows from the
    stationary joint covariance ``Psi``.

    This describes the noise-driven regime with the unknown input
    identically zero.  A real exogenous input leaking through a
    *different* input structure than the filter assumes adds variance on
    top of this prediction (a matched filter cancels its inputs exactly,
    a mismatched one cannot).
    """
    psi = Psi if Psi is not None else pair.Psi
    if psi is None:
        raise ValueError("Psi is not available; run lyapunov_limit first")
    C_joint = np.hstack([q_dec.T2 @ true_dec.C, -q_dec.C2])
    R2_true = sym(q_dec.T2 @ true_dec.R @ q_dec.T2.T)
    ICGM = np.eye(q_dec.l - q_dec.p_H) - q_dec.C2 @ q_dec.G2 @ pair.q_gains.M2
    return sym(ICGM @ (C_joint @ psi @ C_joint.T + R2_true) @ ICGM.T)


def kl_divergence(R_cross_q: np.ndarray, R_star_q: np.ndarray,
                  R_star_true: np.ndarray, p_R_q: int | None = None,
                  p_R_true: int | None = None) -> float:
    """Per-step divergence between true and assumed residual densities.

    Parameters
    ----------
    R_cross_q : ndarray
        Actual covariance of mode ``q``'s residual under the true model.
    R_star_q : ndarray
        Covariance the mode-``q`` filter assumes for its own residual.
    R_star_true : ndarray
        Steady residual covariance of the matched (true-mode) filter.
    p_R_q, p_R_true : int, optional
        Residual ranks; computed from the matrices when omitted.

    Notes
    -----
    Evaluates ``(p_q - p_t)/2 log(2 pi) + log pdet(R_star_q)/2
    - log pdet(R_star_true)/2 + tr(R_cross_q pinv(R_star_q))/2 - p_t/2``;
    the last term uses the fact that the trace of a PSD matrix against its
    own pseudo-inverse is its rank.
    """
    ld_q, rank_q = psd_logpdet(np.asarray(R_star_q, dtype=float))
    ld_t, rank_t = psd_logpdet(np.asarray(R_star_true, dtype=float))
    pq = rank_q if p_R_q is None else int(p_R_q)
    pt = rank_t if p_R_true is None else int(p_R_true)
    trace = float(np.trace(np.asarray(R_cross_q, dtype=float)
                           @ psd_pinv(np.asarray(R_star_q, dtype=float))))
    return (0.5 * (pq - pt) * _LOG_2PI + 0.5 * ld_q - 0.5 * ld_t
            + 0.5 * trace - 0.5 * pt)


@dataclass(frozen=True)
class KLReport:
    """Per-candidate divergence summary for one true model.

    ``D[j]`` is ``NaN`` when the joint system of candidate ``j`` is not
    stable (no stationary regime, divergence undefined).  ``closest_mode``
    minimizes ``D``; ``biased_closest`` additionally penalizes candidates
    by ``-log`` of their predicted probability when one was supplied.
    """

    D: np.ndarray
    ranks: np.ndarray
    rank_true: int
    spectral_radii: np.ndarray
    lyapunov_residuals: np.ndarray
    closest_mode: int
    biased_closest: int | None = None


def analyze_model_set(true_dec: DecomposedModeModel,
                      candidates: list[DecomposedModeModel] | tuple,
                      log_mu_pred: np.ndarray | None = None,
                      gain_tol: float = 1e-12) -> KLReport:
    """Divergence of every candidate filter from the true model.

    A candidate that *is* the true model (same object) short-circuits to
    the identity ``R_cross = R_star_true``, which evaluates the divergence to
    zero up to rounding; everything else goes through the full
    steady-gain / joint-covariance pipeline.  Unstable joint systems get
    ``D = NaN`` and are reported via their spectral radius.
    """
    true_gains = steady_state_gains(true_dec, tol=gain_tol)
    _, rank_true = psd_logpdet(true_gains.R_star2)
    N = len(candidates)
    D = np.full(N, np.nan)
    ranks = np.zeros(N, dtype=int)
    radii = np.zeros(N)
    residuals = np.full(N, np.nan)
    for j, cand in enumerate(candidates):
        if cand is true_dec:
            gains = true_gains
        else:
            gains = steady_state_gains(cand, tol=gain_tol)
        _, ranks[j] = psd_logpdet(gains.R_star2)
        pair = mismatched_system(true_dec, cand, gains)
        radii[j] = pair.spectral_radius
        if cand is true_dec:
            # Matched candidate: the actual residual covariance equals the
            # assumed one by definition; no stationary joint system needed.
            D[j] = kl_divergence(true_gains.R_star2, true_gains.R_star2,
                                 true_gains.R_star2, ranks[j], rank_true)
            continue
        if pair.spectral_radius >= 1.0:
            continue
        psi = lyapunov_limit(pair)
        residuals[j] = float(np.max(np.abs(
            pair.A_mismatch @ psi @ pair.A_mismatch.T
            + pair.W_mismatch @ pair.Q_breve @ pair.W_mismatch.T - psi)))
        r_cross = mismatched_innovation_cov(pair, cand, true_dec, psi)
        D[j] = kl_divergence(r_cross, gains.R_star2, true_gains.R_star2,
                             ranks[j], rank_true)
    closest = int(np.nanargmin(D)) if np.any(np.isfinite(D)) else 0
    biased = None
    if log_mu_pred is not None:
        scores = D - np.asarray(log_mu_pred, dtype=float).reshape(-1)
        biased = int(np.nanargmin(scores)) if np.any(np.isfinite(scores)) else 0
    return KLReport(D=D, ranks=ranks, rank_true=rank_true,
                    spectral_radii=radii, lyapunov_residuals=residuals,
                    closest_mode=closest, biased_closest=biased)


@dataclass(frozen=True)
class WinnerPrediction:
    """Predicted long-run MAP mode with its score margin."""

    mode: int
    margin: float
    unique: bool


def predict_winner(kl, mode: str = "static",
                   log_mu_pred: np.ndarray | None = None) -> WinnerPrediction:
    """Which mode the estimator's probabilities will concentrate on.

    For the static estimator the winner minimizes the divergence; for the
    dynamic estimator each candidate's score is additionally biased by
    ``-log`` of its predicted mode probability.  ``margin`` is the gap to
    the runner-up and ``unique`` flags margins above 1e-9.
    """
    D = kl.D if isinstance(kl, KLReport) else np.asarray(kl, dtype=float)
    if mode == "static":
        scores = np.array(D, dtype=float)
    elif mode == "dynamic":
        if log_mu_pred is None:
            raise ValueError("dynamic prediction needs log_mu_pred")
        scores = np.asarray(D, dtype=float) \
            - np.asarray(log_mu_pred, dtype=float).reshape(-1)
    else:
        raise ValueError(f"mode must be 'static' or 'dynamic', got {mode!r}")
    finite = np.isfinite(scores)
    if not finite.any():
        raise ValueError("no candidate has a finite score")
    order = np.argsort(np.where(finite, scores, np.inf), kind="stable")
    best = int(order[0])
    if finite.sum() == 1:
        margin = np.inf
    else:
        margin = float(scores[order[1]] - scores[order[0]])
    return WinnerPrediction(mode=best, margin=margin, unique=margin > 1e-9)


def mean_ratio_trace(D_i: float, D_j: float, mu0_i: float, mu0_j: float, k):
    """Predicted geometric-mean probability ratio ``mu_j / mu_i`` after ``k`` steps.

    With constant per-step divergences the log ratio grows linearly:
    ``log(mu0_j / mu0_i) + k (D_i - D_j)``.  ``k`` may be an array, giving
    the whole trace at once.
    """
    if mu0_i <= 0.0 or mu0_j <= 0.0:
        raise ValueError("initial probabilities must be positive")
    k = np.asarray(k, dtype=float)
    return (mu0_j / mu0_i) * np.exp(k * (D_i - D_j))
