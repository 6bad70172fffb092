"""Mode-conditioned linear system models and their unknown-input split.

A mode model is the discrete-time linear stochastic system

    x[k+1] = A x[k] + B u[k] + G d[k] + w[k],      w ~ N(0, Q)
    y[k]   = C x[k] + D u[k] + H d[k] + v[k],      v ~ N(0, R)

with a known input ``u`` and an unknown input ``d``.  The unknown input
enters both the dynamics (through ``G``) and the measurement (through
``H``).  Estimating it requires separating the part of ``d`` that is
directly visible in the current measurement from the part that is only
visible one step later through the dynamics.  :func:`decompose` performs
that separation with an SVD of ``H``: an orthonormal rotation ``T = [T1;
T2]`` of the output space and an orthogonal rotation ``V = [V1, V2]`` of
the input space such that ``T1 H V1`` is the diagonal of nonzero singular
values and both ``T2 H`` and ``H V2`` vanish.

Continuous-time models are converted with :func:`discretize_zoh`, which
treats ``Q`` and ``R`` as noise intensities (power spectral densities):
the sampled process covariance is the exact zero-order-hold integral and
the sampled measurement covariance is ``R / dt``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ._linalg import RANK_RTOL, require_psd, require_symmetric, sym
from .errors import InvalidModel, RankDeficient

__all__ = [
    "ContinuousModeModel",
    "DiscreteModeModel",
    "DecomposedModeModel",
    "SwitchedSystem",
    "WellPosednessReport",
    "discretize_zoh",
    "decompose",
    "check_well_posed",
]

_MATRIX_FIELDS = ("A", "B", "G", "C", "D", "H", "Q", "R")


def _coerce_matrices(obj) -> None:
    for name in _MATRIX_FIELDS:
        mat = np.atleast_2d(np.asarray(getattr(obj, name), dtype=float))
        if not np.all(np.isfinite(mat)):
            raise InvalidModel(f"{name} has non-finite entries")
        object.__setattr__(obj, name, mat)


def _check_shapes(obj, kind: str) -> None:
    n = obj.A.shape[0]
    if obj.A.shape != (n, n):
        raise InvalidModel(f"{kind} A must be square, got {obj.A.shape}")
    l = obj.C.shape[0]
    if obj.C.shape[1] != n:
        raise InvalidModel(f"{kind} C must have {n} columns, got {obj.C.shape}")
    m = obj.B.shape[1]
    p = obj.G.shape[1]
    for name, want in (("B", (n, m)), ("G", (n, p)),
                       ("D", (l, m)), ("H", (l, p))):
        got = getattr(obj, name).shape
        if got != want:
            raise InvalidModel(f"{kind} {name} must have shape {want}, got {got}")
    require_symmetric(obj.Q, f"{kind} Q")
    if obj.Q.shape != (n, n):
        raise InvalidModel(f"{kind} Q must be {n}x{n}, got {obj.Q.shape}")
    require_psd(obj.Q, f"{kind} Q")
    require_symmetric(obj.R, f"{kind} R")
    if obj.R.shape != (l, l):
        raise InvalidModel(f"{kind} R must be {l}x{l}, got {obj.R.shape}")
    if l and float(np.linalg.eigvalsh(sym(obj.R))[0]) <= 0.0:
        raise InvalidModel(f"{kind} R must be positive definite")


class _ShapeMixin:
    """Dimension accessors shared by the model dataclasses."""

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.G.shape[1]

    @property
    def l(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class ContinuousModeModel(_ShapeMixin):
    """Continuous-time mode model; ``Q``/``R`` are noise intensities.

    Matrices with zero columns are legal: a model without unknown inputs
    carries ``G`` and ``H`` of shape ``(n, 0)`` and ``(l, 0)``.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    C: np.ndarray
    D: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    name: str = ""

    def __post_init__(self):
        _coerce_matrices(self)
        _check_shapes(self, "continuous model")


@dataclass(frozen=True)
class DiscreteModeModel(_ShapeMixin):
    """Discrete-time mode model with sampled noise covariances."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    C: np.ndarray
    D: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    name: str = ""

    def __post_init__(self):
        _coerce_matrices(self)
        _check_shapes(self, "discrete model")


@dataclass(frozen=True)
class DecomposedModeModel:
    """A discrete mode model together with its unknown-input decomposition.

    ``z1 = T1 y`` collects the output directions through which the
    feedthrough part ``d1 = V1.T d`` of the unknown input is directly
    visible, with invertible diagonal gain ``Sigma``; ``z2 = T2 y`` is the
    orthogonal complement, which only sees ``d2 = V2.T d`` through the
    dynamics with a one-step delay.  ``p_H`` is the rank of ``H``.
    """

    base: DiscreteModeModel
    p_H: int
    T1: np.ndarray
    T2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    Sigma: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray

    # Pass-throughs so filter code can read dec.A etc. without dec.base.A.
    @property
    def A(self) -> np.ndarray:
        return self.base.A

    @property
    def B(self) -> np.ndarray:
        return self.base.B

    @property
    def G(self) -> np.ndarray:
        return self.base.G

    @property
    def C(self) -> np.ndarray:
        return self.base.C

    @property
    def D(self) -> np.ndarray:
        return self.base.D

    @property
    def H(self) -> np.ndarray:
        return self.base.H

    @property
    def Q(self) -> np.ndarray:
        return self.base.Q

    @property
    def R(self) -> np.ndarray:
        return self.base.R

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def p(self) -> int:
        return self.base.p

    @property
    def l(self) -> int:
        return self.base.l

    @property
    def name(self) -> str:
        return self.base.name

    def M1(self) -> np.ndarray:
        """Inverse of the diagonal feedthrough gain ``Sigma``."""
        if self.p_H == 0:
            return np.zeros((0, 0))
        return np.diag(1.0 / np.diag(self.Sigma))


@dataclass(frozen=True)
class SwitchedSystem:
    """A finite family of discrete mode models sharing ``n``, ``m`` and ``l``.

    The number of unknown-input channels ``p`` may differ between modes.
    """

    modes: tuple[DiscreteModeModel, ...]

    def __post_init__(self):
        modes = tuple(self.modes)
        object.__setattr__(self, "modes", modes)
        if not modes:
            raise InvalidModel("a switched system needs at least one mode")
        n, m, l = modes[0].n, modes[0].m, modes[0].l
        for i, mod in enumerate(modes):
            if (mod.n, mod.m, mod.l) != (n, m, l):
                raise InvalidModel(
                    f"mode {i} has dimensions (n={mod.n}, m={mod.m}, l={mod.l}); "
                    f"expected (n={n}, m={m}, l={l})")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def m(self) -> int:
        return self.modes[0].m

    @property
    def l(self) -> int:
        return self.modes[0].l

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(mod.name or str(i) for i, mod in enumerate(self.modes))

    def decomposed(self) -> tuple[DecomposedModeModel, ...]:
        """Decompose every mode; see :func:`decompose`."""
        return tuple(decompose(mod) for mod in self.modes)


def discretize_zoh(model: ContinuousModeModel, dt: float) -> DiscreteModeModel:
    """Zero-order-hold discretization of a continuous mode model.

    ``A = expm(Ac dt)``; ``B`` and ``G`` are the exact held-input integrals
    ``int_0^dt expm(Ac s) ds @ {Bc, Gc}``; ``Q`` is the exact sampled
    process covariance ``int_0^dt expm(Ac s) Qc expm(Ac.T s) ds`` computed
    with the augmented-matrix-exponential identity; ``R = Rc / dt``
    converts the measurement-noise intensity to a per-sample covariance.
    ``C``, ``D`` and ``H`` carry over unchanged.

    Parameters
    ----------
    model : ContinuousModeModel
    dt : float
        Sample period, strictly positive.
    """
    if not (dt > 0.0) or not np.isfinite(dt):
        raise InvalidModel(f"dt must be a positive finite number, got {dt!r}")
    n, m, p = model.n, model.m, model.p

    Ad = expm(model.A * dt)

    # Held-input integral for B and G in one augmented exponential.
    n_in = m + p
    if n_in:
        aug = np.zeros((n + n_in, n + n_in))
        aug[:n, :n] = model.A
        aug[:n, n:] = np.hstack([model.B, model.G])
        phi = expm(aug * dt)
        Bd = phi[:n, n:n + m]
        Gd = phi[:n, n + m:]
    else:
        Bd = np.zeros((n, 0))
        Gd = np.zeros((n, 0))

    # Sampled process covariance via the standard block-exponential trick:
    # expm([[-Ac, Qc], [0, Ac.T]] dt) has A_d.T in the lower-right block and
    # A_d^{-1} Q_d in the upper-right block.
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = -model.A
    blk[:n, n:] = model.Q
    blk[n:, n:] = model.A.T
    psi = expm(blk * dt)
    Qd = sym(psi[n:, n:].T @ psi[:n, n:])

    return DiscreteModeModel(
        A=Ad, B=Bd, G=Gd, C=model.C.copy(), D=model.D.copy(),
        H=model.H.copy(), Q=Qd, R=model.R / dt, name=model.name)


def decompose(model: DiscreteModeModel,
              rtol: float = RANK_RTOL) -> DecomposedModeModel:
    """Split the unknown input by the range structure of ``H``.

    The SVD ``H = U diag(s) W.T`` (full matrices) yields the numerical rank
    ``p_H`` (singular values above ``max(l, p) * s[0] * rtol``), the output
    rotation rows ``T1 = U[:, :p_H].T`` / ``T2 = U[:, p_H:].T`` and the
    input rotation columns ``V1`` / ``V2``.  By construction
    ``T1 H V1 == Sigma``, ``T2 H == 0`` and ``H V2 == 0``.

    Returns
    -------
    DecomposedModeModel
        Carries the transformed measurement/input matrices ``C1``, ``C2``,
        ``D1``, ``D2``, ``G1``, ``G2`` and noise covariances ``R1``, ``R2``.
    """
    H = model.H
    l, p = H.shape
    U, s, Wt = np.linalg.svd(H, full_matrices=True)
    if s.size:
        p_H = int(np.sum(s > max(l, p) * s[0] * rtol))
    else:
        p_H = 0
    W = Wt.T
    T1 = U[:, :p_H].T
    T2 = U[:, p_H:].T
    V1 = W[:, :p_H]
    V2 = W[:, p_H:]
    Sigma = np.diag(s[:p_H])
    R = model.R
    return DecomposedModeModel(
        base=model, p_H=p_H, T1=T1, T2=T2, V1=V1, V2=V2, Sigma=Sigma,
        C1=T1 @ model.C, C2=T2 @ model.C,
        D1=T1 @ model.D, D2=T2 @ model.D,
        G1=model.G @ V1, G2=model.G @ V2,
        R1=sym(T1 @ R @ T1.T), R2=sym(T2 @ R @ T2.T))


@dataclass(frozen=True)
class WellPosednessReport:
    """Diagnostics from :func:`check_well_posed`.

    Attributes
    ----------
    input_rank, input_rank_required : int
        Achieved and required column rank of ``C2 @ G2``.
    detectable : bool
        PBH-style proxy for detectability of the filter's error dynamics.
    undetectable_eigs : tuple of complex
        Eigenvalues at or outside the unit circle failing the PBH test.
    noise_cross_norm : float
        Spectral norm of ``T1 R T2.T``, the correlation between the two
        transformed measurement-noise channels.  The filter treats it as
        zero; a large value flags a model for which that is a poor
        approximation.
    noise_cross_flagged : bool
        True when ``noise_cross_norm`` exceeds 1e-6 times ``||R||``.
    """

    input_rank: int
    input_rank_required: int
    detectable: bool
    undetectable_eigs: tuple = ()
    noise_cross_norm: float = 0.0
    noise_cross_flagged: bool = False


def check_well_posed(dec: DecomposedModeModel) -> WellPosednessReport:
    """Verify the rank condition required for unknown-input recovery.

    Raises
    ------
    RankDeficient
        If ``C2 @ G2`` does not have full column rank ``p - p_H`` (the
        dynamics-only input directions cannot be separated from the
        measurements).  Detectability problems and large transformed-noise
        cross terms are reported, not raised.
    """
    p2 = dec.p - dec.p_H
    if dec.l - dec.p_H < p2:
        raise RankDeficient(
            f"model {dec.name!r}: only {dec.l - dec.p_H} measurement "
            f"directions remain for {p2} dynamics-only input directions")
    CG = dec.C2 @ dec.G2
    rank = int(np.linalg.matrix_rank(CG)) if CG.size else 0
    if rank < p2:
        raise RankDeficient(
            f"model {dec.name!r}: C2 @ G2 has rank {rank}, needs {p2}")

    # Detectability proxy: PBH test on the pair (Xi @ Ahat, C2) where Ahat
    # removes the feedthrough-input correction and Xi removes the input
    # directions the filter re-estimates each step.
    n = dec.n
    M1 = dec.M1()
    Ahat = dec.A - dec.G1 @ M1 @ dec.C1
    if CG.size:
        Xi = np.eye(n) - dec.G2 @ np.linalg.pinv(CG) @ dec.C2
    else:
        Xi = np.eye(n)
    Abar = Xi @ Ahat
    bad = []
    for lam in np.linalg.eigvals(Abar):
        if abs(lam) < 1.0 - 1e-9:
            continue
        pbh = np.vstack([lam * np.eye(n) - Abar, dec.C2.astype(complex)])
        if np.linalg.matrix_rank(pbh) < n:
            bad.append(complex(lam))
    cross = dec.T1 @ dec.R @ dec.T2.T
    cross_norm = float(np.linalg.norm(cross, 2)) if cross.size else 0.0
    r_norm = float(np.linalg.norm(dec.R, 2)) if dec.R.size else 0.0
    return WellPosednessReport(
        input_rank=rank, input_rank_required=p2,
        detectable=not bad, undetectable_eigs=tuple(bad),
        noise_cross_norm=cross_norm,
        noise_cross_flagged=cross_norm > 1e-6 * max(r_norm, 1e-300))
