"""Minimum-variance unbiased filtering with unknown inputs.

One recursion step processes the measurement in three stages:

1. *Input estimation.*  The dynamics-only input part ``d2[k-1]`` is
   recovered by weighted least squares from the part of the new
   measurement that the one-step prediction cannot explain; the
   feedthrough part ``d1[k]`` is read off directly from ``z1`` at the end
   of the step.
2. *Time update.*  The prediction is corrected with the freshly estimated
   ``d2[k-1]`` so the propagated state is unbiased for any input signal.
3. *Measurement update.*  A gain built from the corrected covariance and
   the input/noise cross terms folds the remaining measurement content
   into the state.  The residual of this stage, ``nu_bar``, together with
   its covariance ``R_star2``, is the raw material for mode inference: its
   whitened form (:func:`generalized_innovation`) is zero-mean and white
   whenever the model matches the data-generating system.

All covariance updates re-symmetrize their results; rank decisions share
one tolerance (see :mod:`modefilter._linalg`) so the whitening basis and
the gain's pseudo-inverse never disagree about the innovation rank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import eigh_keep, psd_pinv, require_psd, require_symmetric, sym
from .errors import DegenerateInnovation, InvalidModel, NumericalBreakdown
from .models import DecomposedModeModel, check_well_posed

__all__ = ["FilterState", "GenInnovation", "init", "step",
           "select_gamma", "generalized_innovation"]


@dataclass(frozen=True)
class FilterState:
    """Posterior filter quantities after step ``k``.

    ``d2_hat_prev``, ``d_hat_prev`` and their covariances describe the
    unknown input at step ``k-1`` (the dynamics-only part is observable
    only with a one-step delay), so they are ``None`` until the first
    step has run.  ``nu_bar`` / ``R_star2`` hold the latest measurement
    stage residual and its covariance for likelihood evaluation.
    """

    k: int
    x_hat: np.ndarray
    P_x: np.ndarray
    d1_hat: np.ndarray
    P_d1: np.ndarray
    d2_hat_prev: np.ndarray | None = None
    P_d2_prev: np.ndarray | None = None
    P_d12_prev: np.ndarray | None = None
    d_hat_prev: np.ndarray | None = None
    P_d_prev: np.ndarray | None = None
    nu_bar: np.ndarray | None = None
    R_star2: np.ndarray | None = None


@dataclass(frozen=True)
class GenInnovation:
    """Whitened innovation ``nu = Gamma @ nu_bar`` with covariance ``S``."""

    nu: np.ndarray
    S: np.ndarray
    Gamma: np.ndarray
    p_R: int


def init(dec: DecomposedModeModel, x0_hat: np.ndarray, P0: np.ndarray,
         z1_0: np.ndarray, u0: np.ndarray) -> FilterState:
    """Initial filter state from a prior and the first measurement's z1 part.

    The feedthrough input estimate at time zero is the direct inversion
    ``d1 = Sigma^-1 (z1 - C1 x0 - D1 u0)`` with covariance
    ``Sigma^-1 (C1 P0 C1.T + R1) Sigma^-T``.

    Raises
    ------
    InvalidModel
        On dimension mismatches or a non-PSD ``P0``.
    RankDeficient
        If the model fails :func:`modefilter.models.check_well_posed`.
    """
    check_well_posed(dec)
    x0_hat = np.asarray(x0_hat, dtype=float).reshape(-1)
    P0 = np.asarray(P0, dtype=float)
    z1_0 = np.asarray(z1_0, dtype=float).reshape(-1)
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    if x0_hat.shape != (dec.n,):
        raise InvalidModel(f"x0_hat must have length {dec.n}, got {x0_hat.shape}")
    if z1_0.shape != (dec.p_H,):
        raise InvalidModel(f"z1_0 must have length {dec.p_H}, got {z1_0.shape}")
    if u0.shape != (dec.m,):
        raise InvalidModel(f"u0 must have length {dec.m}, got {u0.shape}")
    require_symmetric(P0, "P0")
    if P0.shape != (dec.n, dec.n):
        raise InvalidModel(f"P0 must be {dec.n}x{dec.n}, got {P0.shape}")
    require_psd(P0, "P0")

    M1 = dec.M1()
    d1 = M1 @ (z1_0 - dec.C1 @ x0_hat - dec.D1 @ u0)
    P_d1 = sym(M1 @ (dec.C1 @ P0 @ dec.C1.T + dec.R1) @ M1.T)
    return FilterState(k=0, x_hat=x0_hat, P_x=sym(P0), d1_hat=d1, P_d1=P_d1)


def step(fs: FilterState, dec: DecomposedModeModel, u_prev: np.ndarray,
         u_now: np.ndarray, y_now: np.ndarray) -> FilterState:
    """Advance the filter by one measurement.

    Parameters
    ----------
    fs : FilterState
        Posterior state after step ``k-1`` (possibly with mixed initial
        conditions substituted by a multiple-model bank).
    dec : DecomposedModeModel
        Mode model used for this step.
    u_prev, u_now : array_like
        Known input at steps ``k-1`` and ``k``.
    y_now : array_like
        Measurement at step ``k``.

    Raises
    ------
    NumericalBreakdown
        If a required inverse is singular or any produced quantity is
        non-finite.
    """
    u_prev = np.asarray(u_prev, dtype=float).reshape(-1)
    u_now = np.asarray(u_now, dtype=float).reshape(-1)
    y_now = np.asarray(y_now, dtype=float).reshape(-1)
    if y_now.shape != (dec.l,):
        raise InvalidModel(f"y_now must have length {dec.l}, got {y_now.shape}")

    A, Q = dec.A, dec.Q
    C1, C2, D1, D2 = dec.C1, dec.C2, dec.D1, dec.D2
    G1, G2, R1, R2 = dec.G1, dec.G2, dec.R1, dec.R2
    n = dec.n
    M1 = dec.M1()
    z1 = dec.T1 @ y_now
    z2 = dec.T2 @ y_now

    x0, P0x = fs.x_hat, fs.P_x
    d1_0, P_d1_0 = fs.d1_hat, fs.P_d1

    # --- input estimation (dynamics-only part, one step delayed) ---
    G1M1 = G1 @ M1
    Ahat = A - G1M1 @ C1
    Qhat = G1M1 @ R1 @ G1M1.T + Q
    P_tilde = sym(Ahat @ P0x @ Ahat.T + Qhat)
    R2_tilde = sym(C2 @ P_tilde @ C2.T + R2)
    CG = C2 @ G2
    try:
        X = np.linalg.solve(R2_tilde, CG) if CG.size else np.zeros_like(CG)
        P_d2 = np.linalg.inv(CG.T @ X)
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown(
            f"mode {dec.name!r} step {fs.k + 1}: input-estimation gram "
            f"matrix is singular") from exc
    M2 = P_d2 @ X.T
    x_pred = A @ x0 + dec.B @ u_prev + G1 @ d1_0
    d2 = M2 @ (z2 - C2 @ x_pred - D2 @ u_now)
    d_full = dec.V1 @ d1_0 + dec.V2 @ d2
    P_d12 = (M1 @ C1 @ P0x @ A.T @ C2.T @ M2.T
             - P_d1_0 @ G1.T @ C2.T @ M2.T)
    p, ph = dec.p, dec.p_H
    block = np.zeros((p, p))
    block[:ph, :ph] = P_d1_0
    block[:ph, ph:] = P_d12
    block[ph:, :ph] = P_d12.T
    block[ph:, ph:] = P_d2
    V = np.hstack([dec.V1, dec.V2])
    P_d = sym(V @ block @ V.T)

    # --- time update ---
    x_star = x_pred + G2 @ d2
    G2M2 = G2 @ M2
    IGMC = np.eye(n) - G2M2 @ C2
    P_star = sym(G2M2 @ R2 @ G2M2.T + IGMC @ P_tilde @ IGMC.T)
    CGM = C2 @ G2M2
    R_star2 = sym(C2 @ P_star @ C2.T + R2 - CGM @ R2 - R2 @ CGM.T)
    nu_bar = z2 - C2 @ x_star - D2 @ u_now

    # --- measurement update ---
    L = (P_star @ C2.T - G2M2 @ R2) @ psd_pinv(R_star2)
    x_upd = x_star + L @ nu_bar
    ILC = np.eye(n) - L @ C2
    GMR = G2M2 @ R2
    P_x = sym(ILC @ GMR @ L.T + L @ GMR.T @ ILC.T
              + ILC @ P_star @ ILC.T + L @ R2 @ L.T)

    # --- feedthrough input at the current step ---
    R1_tilde = C1 @ P_x @ C1.T + R1
    d1_new = M1 @ (z1 - C1 @ x_upd - D1 @ u_now)
    P_d1_new = sym(M1 @ R1_tilde @ M1.T)

    for name, arr in (("x_hat", x_upd), ("P_x", P_x), ("d1_hat", d1_new),
                      ("P_d1", P_d1_new), ("d_hat", d_full), ("P_d", P_d),
                      ("nu_bar", nu_bar), ("R_star2", R_star2)):
        if arr.size and not np.all(np.isfinite(arr)):
            raise NumericalBreakdown(
                f"mode {dec.name!r} step {fs.k + 1}: non-finite {name}")

    return FilterState(
        k=fs.k + 1, x_hat=x_upd, P_x=P_x, d1_hat=d1_new, P_d1=P_d1_new,
        d2_hat_prev=d2, P_d2_prev=P_d2, P_d12_prev=P_d12,
        d_hat_prev=d_full, P_d_prev=P_d, nu_bar=nu_bar, R_star2=R_star2)


def select_gamma(R_star2: np.ndarray) -> tuple[np.ndarray, int]:
    """Whitening basis for the residual covariance.

    Rows of ``Gamma`` are the orthonormal eigenvectors of ``R_star2``
    whose eigenvalues exceed the shared rank tolerance, in ascending
    eigenvalue order (each row's sign follows the eigensolver).  Returns
    ``(Gamma, p_R)`` where ``p_R`` is the retained rank.
    """
    R_star2 = np.asarray(R_star2, dtype=float)
    w, v, keep = eigh_keep(R_star2)
    return v[:, keep].T, int(keep.sum())


def generalized_innovation(fs: FilterState) -> GenInnovation:
    """Whiten the latest residual of ``fs``.

    Raises
    ------
    DegenerateInnovation
        If the residual covariance has rank zero.
    ValueError
        If ``fs`` has not taken a step yet.
    """
    if fs.nu_bar is None or fs.R_star2 is None:
        raise ValueError("no residual available before the first step")
    Gamma, p_R = select_gamma(fs.R_star2)
    if p_R == 0:
        raise DegenerateInnovation(
            f"residual covariance at step {fs.k} has rank zero")
    nu = Gamma @ fs.nu_bar
    S = sym(Gamma @ fs.R_star2 @ Gamma.T)
    return GenInnovation(nu=nu, S=S, Gamma=Gamma, p_R=p_R)
