"""Built-in two-vehicle intersection scenario.

Two vehicles approach an intersection on perpendicular lanes.  Vehicle A
is driven by an unmeasured acceleration command; vehicle B runs a known
(recorded) input.  Three behavioral modes share the measurement set
(position of A, relative speed, position and speed of B) but differ in
vehicle A's dynamics and in how an unknown sensor bias enters the
measurements:

* ``I`` — *inattentive*: A ignores B, its acceleration is an exogenous
  unknown input.
* ``M`` — *malicious*: A runs a pursuit feedback on the state difference
  to B (gains ``K_p = 2``, ``K_d = 4``), steering toward collision.
* ``C`` — *cautious*: A runs the same-gain feedback on its own state,
  braking away.

For modes ``M`` and ``C`` the feedback law is folded into the ``A``
matrix, so their residual exogenous unknown input on the acceleration
channel is zero; the second unknown-input channel is a sensor bias in
every mode, entering through different measurement directions.  The default
truth signals are a constant-plus-sinusoid acceleration for mode ``I``
and a slow bias ramp, both configurable.

State: ``[x_A, v_A, x_B, v_B]``; sample period 0.01 s.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidModel
from .models import ContinuousModeModel, DiscreteModeModel, SwitchedSystem, \
    discretize_zoh
from .sim import ExplicitSchedule, MarkovSchedule, Scenario, Waveform

__all__ = ["MODE_NAMES", "intersection_transition", "intersection_system",
           "intersection_scenario"]

MODE_NAMES = ("I", "M", "C")

_KP, _KD = 2.0, 4.0
_DRAG = 0.1

# Default Markov mode-transition matrix for the dynamic estimator.
_P_T = np.array([
    [0.700, 0.150, 0.150],
    [0.399, 0.600, 0.001],
    [0.399, 0.001, 0.600],
])


def intersection_transition() -> np.ndarray:
    """Default mode transition matrix (rows: from I, M, C)."""
    return _P_T.copy()


def _continuous_modes() -> tuple[ContinuousModeModel, ...]:
    B = np.array([[0.0], [0.0], [0.0], [1.0]])
    G = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    C = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    D = np.zeros((4, 1))
    Q = 1e-4 * np.diag([0.0, 1.6, 0.0, 0.9])
    R = 1e-4 * np.diag([1.0, 0.16, 0.9, 2.5])

    A_I = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -_DRAG, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, -_DRAG],
    ])
    H_I = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.1], [0.0, 1.0]])

    A_M = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-_KP, -_DRAG - _KD, _KP, _KD],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, -_DRAG],
    ])
    H_M = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, -1.0]])

    A_C = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-_KP, -_DRAG - _KD, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, -_DRAG],
    ])
    H_C = np.array([[0.0, 0.0], [0.0, -1.0], [0.0, 0.0], [0.0, 1.0]])

    return (
        ContinuousModeModel(A=A_I, B=B, G=G, C=C, D=D, H=H_I, Q=Q, R=R,
                            name="I"),
        ContinuousModeModel(A=A_M, B=B, G=G, C=C, D=D, H=H_M, Q=Q, R=R,
                            name="M"),
        ContinuousModeModel(A=A_C, B=B, G=G, C=C, D=D, H=H_C, Q=Q, R=R,
                            name="C"),
    )


def intersection_system(dt: float = 0.01) -> SwitchedSystem:
    """Discretized three-mode intersection system."""
    return SwitchedSystem(modes=tuple(
        discretize_zoh(cm, dt) for cm in _continuous_modes()))


def intersection_scenario(variant: str = "I-M-I", horizon: int = 900,
                          seed: int = 0, dt: float = 0.01,
                          switch_steps: tuple[int, int] = (300, 600),
                          x0: np.ndarray | None = None,
                          P0: np.ndarray | None = None,
                          accel_wave: Waveform | None = None,
                          bias_ramp_rate: float = 3.0,
                          sample_x0: bool = False) -> Scenario:
    """Build an intersection scenario.

    Parameters
    ----------
    variant : str
        ``"stay-I"``, ``"stay-M"``, ``"stay-C"`` hold one mode;
        ``"I-M-I"`` and ``"I-C-I"`` switch at ``switch_steps``;
        ``"markov"`` draws the schedule from the default transition
        matrix starting in mode I.
    accel_wave : Waveform, optional
        Mode I's unknown acceleration input (default: constant plus slow
        sinusoid).
    bias_ramp_rate : float
        Slope of the unknown sensor-bias ramp shared by all modes.  The
        bias is what tells the modes apart (their ``H`` columns differ);
        the default slope is brisk enough that mode probabilities
        typically resolve within about half a second of data.

    Notes
    -----
    The default initial state puts the vehicles at different distances
    and speeds.  That asymmetry matters: with identical vehicle states
    the pursuit feedback of mode M vanishes and modes I and M generate
    identical data.
    """
    names = {"stay-I": 0, "stay-M": 1, "stay-C": 2}
    if variant in names:
        schedule = ExplicitSchedule(((0, names[variant]),))
    elif variant == "I-M-I":
        a, b = switch_steps
        schedule = ExplicitSchedule(((0, 0), (a, 1), (b, 0)))
    elif variant == "I-C-I":
        a, b = switch_steps
        schedule = ExplicitSchedule(((0, 0), (a, 2), (b, 0)))
    elif variant == "markov":
        schedule = MarkovSchedule(P=_P_T, q0=0)
    else:
        raise InvalidModel(f"unknown intersection variant {variant!r}")

    if x0 is None:
        x0 = np.array([-30.0, 10.0, -25.0, 6.0])
    if P0 is None:
        P0 = np.diag([0.25, 0.04, 0.25, 0.04])
    if accel_wave is None:
        accel_wave = Waveform(constant=0.5, sin_amplitude=0.3, sin_period=5.0)
    bias_wave = Waveform(ramp_rate=bias_ramp_rate)
    zero = Waveform()

    d_signals = (
        (accel_wave, bias_wave),   # mode I: exogenous acceleration + bias
        (zero, bias_wave),         # mode M: feedback folded into A
        (zero, bias_wave),         # mode C: feedback folded into A
    )
    return Scenario(system=intersection_system(dt), dt=dt, horizon=horizon,
                    x0=x0, P0=P0, schedule=schedule,
                    u=(Waveform(),), d=d_signals, seed=seed,
                    sample_x0=sample_x0, name=f"intersection:{variant}")
