"""Scenario simulation, estimator runs, traces and metrics.

A :class:`Scenario` bundles a switched system with a mode schedule
(explicit segments or a Markov chain), waveform-described known and
unknown inputs, a prior, and a seed.  :func:`simulate` produces the
ground truth; :func:`run_estimator` replays the measurements through a
multiple-model estimator and records everything into a :class:`Traces`
object that round-trips losslessly through CSV (floats are written with
17 significant digits).

Randomness is confined to one seeded generator with a fixed draw order
(initial state if sampled, then per step: measurement noise, process
noise, next mode), so identical scenarios and seeds produce bit-identical
traces.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass

import numpy as np

from ._linalg import psd_inv_sqrt, psd_sqrt_factor
from .bank import (MMState, StaticMMConfig, dynamic_step, init_mm,
                   static_step, validate_transition)
from .errors import DegenerateInnovation, InvalidModel
from .filtering import generalized_innovation
from .models import SwitchedSystem

__all__ = ["Waveform", "ExplicitSchedule", "MarkovSchedule", "Scenario",
           "GroundTruth", "EstimatorConfig", "Traces", "traces_equal",
           "simulate", "run_estimator", "metrics", "whiteness_stats"]


@dataclass(frozen=True)
class Waveform:
    """Scalar signal ``constant + ramp_rate*t + sin_amplitude*sin(2 pi t / sin_period + sin_phase)``."""

    constant: float = 0.0
    ramp_rate: float = 0.0
    sin_amplitude: float = 0.0
    sin_period: float = 1.0
    sin_phase: float = 0.0

    def __call__(self, t: float) -> float:
        out = self.constant + self.ramp_rate * t
        if self.sin_amplitude != 0.0:
            out += self.sin_amplitude * math.sin(
                2.0 * math.pi * t / self.sin_period + self.sin_phase)
        return out


@dataclass(frozen=True)
class ExplicitSchedule:
    """Mode schedule as ``(start_step, mode_index)`` segments.

    The first segment must start at step 0; segments must be strictly
    increasing in start step.
    """

    segments: tuple[tuple[int, int], ...]

    def __post_init__(self):
        segs = tuple((int(s), int(q)) for s, q in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs or segs[0][0] != 0:
            raise InvalidModel("schedule must start with a segment at step 0")
        starts = [s for s, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InvalidModel("segment start steps must strictly increase")

    def mode_at(self, k: int) -> int:
        q = self.segments[0][1]
        for start, mode in self.segments:
            if k >= start:
                q = mode
            else:
                break
        return q

    def switch_steps(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.segments[1:])


@dataclass(frozen=True)
class MarkovSchedule:
    """Mode schedule drawn from a Markov chain with transition matrix ``P``."""

    P: np.ndarray
    q0: int = 0

    def __post_init__(self):
        object.__setattr__(self, "P", validate_transition(self.P))
        if not 0 <= self.q0 < self.P.shape[0]:
            raise InvalidModel(f"q0 {self.q0} out of range for "
                               f"{self.P.shape[0]} modes")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one simulated run.

    ``u`` holds one waveform per known-input channel; ``d`` holds, for
    each mode, one waveform per unknown-input channel of that mode.  When
    ``sample_x0`` is set the true initial state is drawn from
    ``N(x0, P0)``; otherwise it is ``x0`` exactly.
    """

    system: SwitchedSystem
    dt: float
    horizon: int
    x0: np.ndarray
    P0: np.ndarray
    schedule: ExplicitSchedule | MarkovSchedule
    u: tuple[Waveform, ...]
    d: tuple[tuple[Waveform, ...], ...]
    seed: int = 0
    sample_x0: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x0",
                           np.asarray(self.x0, dtype=float).reshape(-1))
        object.__setattr__(self, "P0", np.asarray(self.P0, dtype=float))
        object.__setattr__(self, "u", tuple(self.u))
        object.__setattr__(self, "d", tuple(tuple(ws) for ws in self.d))
        sys_ = self.system
        if self.horizon < 1:
            raise InvalidModel("horizon must be at least 1")
        if not (self.dt > 0.0):
            raise InvalidModel("dt must be positive")
        if self.x0.shape != (sys_.n,):
            raise InvalidModel(f"x0 must have length {sys_.n}")
        if self.P0.shape != (sys_.n, sys_.n):
            raise InvalidModel(f"P0 must be {sys_.n}x{sys_.n}")
        if len(self.u) != sys_.m:
            raise InvalidModel(f"need {sys_.m} known-input waveforms, "
                               f"got {len(self.u)}")
        if len(self.d) != sys_.n_modes:
            raise InvalidModel(f"need unknown-input waveforms for "
                               f"{sys_.n_modes} modes, got {len(self.d)}")
        for j, ws in enumerate(self.d):
            if len(ws) != sys_.modes[j].p:
                raise InvalidModel(
                    f"mode {j} has {sys_.modes[j].p} unknown-input channels, "
                    f"got {len(ws)} waveforms")
        if isinstance(self.schedule, MarkovSchedule):
            if self.schedule.P.shape[0] != sys_.n_modes:
                raise InvalidModel("Markov schedule size does not match the "
                                   "number of modes")
        else:
            for _, q in self.schedule.segments:
                if not 0 <= q < sys_.n_modes:
                    raise InvalidModel(f"schedule references mode {q}")

    def u_at(self, k: int) -> np.ndarray:
        t = k * self.dt
        return np.array([w(t) for w in self.u])

    def d_at(self, mode: int, k: int) -> np.ndarray:
        t = k * self.dt
        return np.array([w(t) for w in self.d[mode]])

    @property
    def p_max(self) -> int:
        return max((mod.p for mod in self.system.modes), default=0)


@dataclass(frozen=True)
class GroundTruth:
    """Simulated trajectory; arrays are indexed by step ``0..K``.

    ``d`` is zero-padded to the widest mode's input dimension and holds,
    at row ``k``, the input actually applied by the active mode at step
    ``k``.  The raw noise draws ``w`` (rows ``0..K-1``) and ``v`` are kept
    so that the linear relations can be re-verified exactly.
    """

    x: np.ndarray
    q: np.ndarray
    d: np.ndarray
    u: np.ndarray
    y: np.ndarray
    w: np.ndarray
    v: np.ndarray


def simulate(sc: Scenario) -> GroundTruth:
    """Generate ground truth for a scenario.

    The per-step draw order is fixed: measurement noise, then (except at
    the final step) process noise, then the next mode for Markov
    schedules.  Mode draws use a single inverse-CDF uniform per step.
    """
    sys_ = sc.system
    K, n, m, l = sc.horizon, sys_.n, sys_.m, sys_.l
    rng = np.random.default_rng(sc.seed)
    q_factors = [psd_sqrt_factor(mod.Q) for mod in sys_.modes]
    r_factors = [psd_sqrt_factor(mod.R) for mod in sys_.modes]

    x = np.zeros((K + 1, n))
    q = np.zeros(K + 1, dtype=int)
    d = np.zeros((K + 1, sc.p_max))
    u = np.zeros((K + 1, m))
    y = np.zeros((K + 1, l))
    w = np.zeros((K, n))
    v = np.zeros((K + 1, l))

    if sc.sample_x0:
        p0_factor = psd_sqrt_factor(sc.P0)
        x[0] = sc.x0 + p0_factor @ rng.standard_normal(p0_factor.shape[1])
    else:
        x[0] = sc.x0

    markov = isinstance(sc.schedule, MarkovSchedule)
    q[0] = sc.schedule.q0 if markov else sc.schedule.mode_at(0)

    for k in range(K + 1):
        mode = int(q[k])
        mod = sys_.modes[mode]
        u[k] = sc.u_at(k)
        dk = sc.d_at(mode, k)
        d[k, :dk.size] = dk
        rv = r_factors[mode]
        v[k] = rv @ rng.standard_normal(rv.shape[1]) if rv.size else 0.0
        y[k] = mod.C @ x[k] + mod.D @ u[k] + mod.H @ dk + v[k]
        if k == K:
            break
        qf = q_factors[mode]
        if qf.size:
            w[k] = qf @ rng.standard_normal(qf.shape[1])
        x[k + 1] = mod.A @ x[k] + mod.B @ u[k] + mod.G @ dk + w[k]
        if markov:
            row = sc.schedule.P[mode]
            q[k + 1] = int(np.searchsorted(np.cumsum(row), rng.random(),
                                           side="right"))
            q[k + 1] = min(q[k + 1], sys_.n_modes - 1)
        else:
            q[k + 1] = sc.schedule.mode_at(k + 1)
    return GroundTruth(x=x, q=q, d=d, u=u, y=y, w=w, v=v)


@dataclass(frozen=True)
class EstimatorConfig:
    """Which estimator to run and with what priors.

    ``transition`` is required for the dynamic kind.  ``x0_hat`` / ``P0``
    default to the scenario's prior.
    """

    kind: str = "dynamic"
    transition: np.ndarray | None = None
    mu0: np.ndarray | None = None
    static: StaticMMConfig = StaticMMConfig()
    x0_hat: np.ndarray | None = None
    P0: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise InvalidModel(f"estimator kind must be 'static' or "
                               f"'dynamic', got {self.kind!r}")
        if self.kind == "dynamic" and self.transition is None:
            raise InvalidModel("dynamic estimator needs a transition matrix")


# Fixed column layout of the CSV serialization; group -> per-step width.
_INT_COLS = ("k", "q_true", "q_map", "reinit_mask")


@dataclass
class Traces:
    """Aligned per-step record of one estimator run.

    Row ``k`` of ``d_hat`` (and the residual columns) refers to quantities
    produced by step ``k``; the full-input estimate at step ``k``
    describes the input applied at step ``k-1``, which is why row 0 is
    NaN.  ``wall_time`` is measured per step and deliberately excluded
    from the CSV so that output files are bit-identical across machines.
    """

    k: np.ndarray
    q_true: np.ndarray
    x_true: np.ndarray
    d_true: np.ndarray
    u: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    q_map: np.ndarray
    x_hat: np.ndarray
    d_hat: np.ndarray
    P_x_diag: np.ndarray
    P_d_diag: np.ndarray
    nu: np.ndarray
    S_flat: np.ndarray
    reinit_mask: np.ndarray
    wall_time: np.ndarray | None = None

    def _groups(self):
        return (("k", self.k), ("q_true", self.q_true),
                ("x_true", self.x_true), ("d_true", self.d_true),
                ("u", self.u), ("y", self.y), ("mu", self.mu),
                ("q_map", self.q_map), ("x_hat", self.x_hat),
                ("d_hat", self.d_hat), ("P_x_diag", self.P_x_diag),
                ("P_d_diag", self.P_d_diag), ("nu", self.nu),
                ("S_flat", self.S_flat), ("reinit_mask", self.reinit_mask))

    def column_names(self) -> list[str]:
        names = []
        for name, arr in self._groups():
            if arr.ndim == 1:
                names.append(name)
            else:
                names.extend(f"{name}_{i}" for i in range(arr.shape[1]))
        return names

    def _write(self, fh) -> None:
        fh.write(",".join(self.column_names()) + "\n")
        K1 = self.k.shape[0]
        for r in range(K1):
            cells = []
            for name, arr in self._groups():
                vals = [arr[r]] if arr.ndim == 1 else arr[r]
                if name in _INT_COLS:
                    cells.extend(str(int(val)) for val in vals)
                else:
                    cells.extend(f"{float(val):.17g}" for val in vals)
            fh.write(",".join(cells) + "\n")

    def to_csv(self, path) -> None:
        """Write the run as CSV with 17-significant-digit floats."""
        with open(path, "w", newline="") as fh:
            self._write(fh)

    def to_csv_text(self) -> str:
        """The CSV serialization as one string (same bytes as :meth:`to_csv`)."""
        buf = io.StringIO()
        self._write(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path) -> "Traces":
        """Read back a file written by :meth:`to_csv` (lossless)."""
        with open(path, "r", newline="") as fh:
            header = fh.readline().strip().split(",")
            rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
        raw = np.array(rows, dtype=float) if rows else np.zeros((0, len(header)))
        fields = {}
        order = ["k", "q_true", "x_true", "d_true", "u", "y", "mu", "q_map",
                 "x_hat", "d_hat", "P_x_diag", "P_d_diag", "nu", "S_flat",
                 "reinit_mask"]
        col = 0
        for name in order:
            if name in _INT_COLS:
                fields[name] = raw[:, col].astype(int)
                col += 1
            else:
                width = sum(1 for h in header
                            if h == name or h.startswith(name + "_")
                            and h[len(name) + 1:].isdigit())
                fields[name] = raw[:, col:col + width]
                col += width
        return cls(**fields)


def _equal_with_nan(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and np.array_equal(a, b, equal_nan=True)


def traces_equal(a: Traces, b: Traces) -> bool:
    """Exact equality of the CSV-carried fields (NaN == NaN)."""
    return all(_equal_with_nan(x, y)
               for (_, x), (_, y) in zip(a._groups(), b._groups()))


def run_estimator(truth: GroundTruth, sc: Scenario,
                  cfg: EstimatorConfig) -> Traces:
    """Replay recorded measurements through a multiple-model estimator.

    The estimator sees only ``truth.y`` and the known input; the true
    state, mode and input go into the traces for scoring.  Failed modes
    are flagged in ``reinit_mask`` (bit ``j`` set when mode ``j``'s filter
    was restarted during that step).
    """
    sys_ = sc.system
    K, n, m, l, N = sc.horizon, sys_.n, sys_.m, sys_.l, sys_.n_modes
    decs = sys_.decomposed()
    x0_hat = sc.x0 if cfg.x0_hat is None else np.asarray(cfg.x0_hat, float)
    P0 = sc.P0 if cfg.P0 is None else np.asarray(cfg.P0, float)
    if cfg.kind == "dynamic":
        P_trans = validate_transition(cfg.transition, N)
    p_max = sc.p_max
    # Width of the innovation columns: the residual has l - p_H entries,
    # of which generically l - p carry rank; allocate the upper bound.
    pr_max = max(dec.l - dec.p_H for dec in decs)

    mm = init_mm(decs, x0_hat, P0, truth.y[0], truth.u[0], cfg.mu0)

    tr = Traces(
        k=np.arange(K + 1), q_true=truth.q.copy(),
        x_true=truth.x.copy(), d_true=truth.d.copy(),
        u=truth.u.copy(), y=truth.y.copy(),
        mu=np.zeros((K + 1, N)), q_map=np.zeros(K + 1, dtype=int),
        x_hat=np.zeros((K + 1, n)), d_hat=np.full((K + 1, p_max), np.nan),
        P_x_diag=np.zeros((K + 1, n)),
        P_d_diag=np.full((K + 1, p_max), np.nan),
        nu=np.full((K + 1, max(pr_max, 0)), np.nan),
        S_flat=np.full((K + 1, max(pr_max, 0) ** 2), np.nan),
        reinit_mask=np.zeros(K + 1, dtype=int),
        wall_time=np.zeros(K + 1))

    def record(k: int, state: MMState) -> None:
        tr.mu[k] = state.mu
        tr.q_map[k] = state.q_map
        tr.x_hat[k] = state.fused.x_hat
        tr.P_x_diag[k] = np.diag(state.fused.P_x)
        if state.fused.d_hat is not None:
            dh = state.fused.d_hat
            tr.d_hat[k, :dh.size] = dh
            tr.P_d_diag[k, :dh.size] = np.diag(state.fused.P_d)
        fs = state.bank[state.q_map]
        if fs.nu_bar is not None:
            try:
                gi = generalized_innovation(fs)
                tr.nu[k, :gi.p_R] = gi.nu
                tr.S_flat[k, :gi.p_R ** 2] = gi.S.reshape(-1)
            except DegenerateInnovation:
                pass
        mask = 0
        for j in state.reinitialized:
            mask |= 1 << j
        tr.reinit_mask[k] = mask

    record(0, mm)
    for k in range(1, K + 1):
        t0 = time.perf_counter()
        if cfg.kind == "dynamic":
            mm = dynamic_step(mm, decs, P_trans, truth.u[k - 1],
                              truth.u[k], truth.y[k])
        else:
            mm = static_step(mm, decs, cfg.static, truth.u[k - 1],
                             truth.u[k], truth.y[k])
        tr.wall_time[k] = time.perf_counter() - t0
        record(k, mm)
    return tr


def whiteness_stats(nu: np.ndarray, S: np.ndarray,
                    lags: int = 5) -> dict:
    """Autocorrelation diagnostics of whitened innovations.

    Each innovation is normalized by the symmetric inverse square root of
    its covariance; under a matched model the normalized sequence is iid
    standard normal, so sample autocorrelation entries at positive lags
    fall within ``3 / sqrt(N)`` about 99.7% of the time.

    Parameters
    ----------
    nu : ndarray, shape (N, p)
        Innovation sequence.
    S : ndarray, shape (N, p, p) or (p, p)
        Per-sample (or constant) innovation covariance.

    Returns
    -------
    dict
        ``max_abs_autocorr`` per lag, the ``bound``, the portmanteau
        statistic ``N * sum_l ||r_l||_F^2``, and the empirical covariance
        of the normalized sequence.
    """
    nu = np.asarray(nu, dtype=float)
    N = nu.shape[0]
    if S.ndim == 2:
        Wn = psd_inv_sqrt(S)
        e = nu @ Wn.T
    else:
        e = np.empty_like(nu)
        for i in range(N):
            e[i] = psd_inv_sqrt(S[i]) @ nu[i]
    cov = e.T @ e / N
    max_abs = []
    port = 0.0
    for lag in range(1, lags + 1):
        r = e[:-lag].T @ e[lag:] / N
        max_abs.append(float(np.max(np.abs(r))))
        port += float(np.sum(r * r))
    return {"lags": list(range(1, lags + 1)),
            "max_abs_autocorr": max_abs,
            "bound": 3.0 / math.sqrt(N),
            "portmanteau": N * port,
            "normalized_cov": cov}


def metrics(tr: Traces, transient_window: int = 50) -> dict:
    """Score one run: estimation errors, mode accuracy, whiteness, timing.

    Mode accuracy excludes ``transient_window`` steps after every true
    mode switch.  The input error compares row ``k`` of ``d_hat`` against
    row ``k-1`` of the true input (the estimate is one step delayed by
    construction).  Returns a JSON-ready dict.
    """
    K = tr.k.shape[0] - 1
    err_x = tr.x_hat - tr.x_true
    out: dict = {
        "horizon": int(K),
        "state_rmse": list(np.sqrt(np.mean(err_x[1:] ** 2, axis=0))),
    }
    valid = ~np.isnan(tr.d_hat[:, 0]) if tr.d_hat.size else np.zeros(0, bool)
    if tr.d_hat.size and valid.any():
        rows = np.flatnonzero(valid)
        rows = rows[rows >= 1]
        err_d = tr.d_hat[rows] - tr.d_true[rows - 1]
        out["input_rmse"] = list(np.sqrt(np.mean(err_d ** 2, axis=0)))

    switches = np.flatnonzero(np.diff(tr.q_true) != 0) + 1
    keep = np.ones(K + 1, dtype=bool)
    for s in switches:
        keep[s:s + transient_window] = False
    out["mode_accuracy"] = float(np.mean(tr.q_map[keep] == tr.q_true[keep]))
    out["transient_window"] = int(transient_window)
    out["true_switch_steps"] = [int(s) for s in switches]
    mu_true = tr.mu[np.arange(K + 1), tr.q_true]
    out["mu_true_final"] = float(mu_true[-1])
    out["mu_true_mean"] = float(np.mean(mu_true))

    # The innovation columns are NaN-padded to an upper bound; use the rows
    # carrying the run's dominant innovation rank.
    counts = np.sum(~np.isnan(tr.nu), axis=1) if tr.nu.size else np.zeros(0, int)
    pr = int(counts.max()) if counts.size else 0
    if pr:
        good = counts == pr
        good[0] = False
        if good.sum() >= 20:
            S = tr.S_flat[good][:, :pr * pr].reshape(-1, pr, pr)
            ws = whiteness_stats(tr.nu[good][:, :pr], S)
            out["whiteness"] = {
                "lags": ws["lags"],
                "max_abs_autocorr": ws["max_abs_autocorr"],
                "bound": ws["bound"],
                "portmanteau": ws["portmanteau"],
            }
    if tr.wall_time is not None:
        out["wall_time_total"] = float(np.sum(tr.wall_time))
        out["wall_time_mean"] = float(np.mean(tr.wall_time[1:])) if K else 0.0
    return out
