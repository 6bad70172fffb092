"""Scenario and estimator configuration files.

Configuration lives in TOML.  A file describes a scenario either by
naming a built-in preset::

    [scenario]
    preset = "intersection"
    variant = "I-M-I"
    horizon = 900
    seed = 0

or explicitly, with a ``[system]`` table holding one ``[[system.modes]]``
entry per mode (matrices as row-major nested arrays) plus initial
condition, schedule and input waveforms::

    [system]
    kind = "continuous"        # or "discrete"
    dt = 0.01

    [[system.modes]]
    name = "nominal"
    A = [[0.0, 1.0], [0.0, -0.1]]
    B = [[0.0], [1.0]]
    # G, C, D, H, Q, R likewise

    [scenario]
    horizon = 500
    x0 = [0.0, 0.0]
    P0 = [[1.0, 0.0], [0.0, 1.0]]
    u = [{constant = 0.0}]

    [scenario.schedule]
    segments = [[0, 0]]        # or: markov = [[...]] with q0 = 0

    [[scenario.d]]
    mode = 0
    channels = [{constant = 0.5, sin_amplitude = 0.3, sin_period = 5.0},
                {ramp_rate = 1.0}]

The optional ``[estimator]`` table selects the estimator kind
(``static`` or ``dynamic``), the mode transition matrix, the initial
mode probabilities, and the static-estimator floor/restart knobs.

:func:`write_scenario_echo` dumps the fully resolved scenario (discrete
matrices, schedule, waveform parameters, seed) to JSON so a run can be
reproduced without the original file.
"""

from __future__ import annotations

import json

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bank import StaticMMConfig
from .errors import ConfigError, InvalidModel
from .models import (ContinuousModeModel, DiscreteModeModel, SwitchedSystem,
                     discretize_zoh)
from .presets import intersection_scenario, intersection_transition
from .sim import (EstimatorConfig, ExplicitSchedule, MarkovSchedule, Scenario,
                  Waveform)

__all__ = ["load_toml", "scenario_from_config", "estimator_from_config",
           "load_scenario_file", "write_scenario_echo"]

_MODE_MATRIX_KEYS = ("A", "B", "G", "C", "D", "H", "Q", "R")
_WAVEFORM_KEYS = ("constant", "ramp_rate", "sin_amplitude", "sin_period",
                  "sin_phase")


def load_toml(path) -> dict:
    """Parse a TOML file, mapping parse failures to :class:`ConfigError`."""
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def _matrix(value, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} is not a numeric matrix: {exc}") from exc
    if arr.ndim != 2:
        raise ConfigError(f"{where} must be a nested (row-major) array, got "
                          f"shape {arr.shape}")
    return arr


def _vector(value, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} is not a numeric vector: {exc}") from exc
    if arr.ndim != 1:
        raise ConfigError(f"{where} must be a flat array")
    return arr


def _waveform(table, where: str) -> Waveform:
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table of waveform parameters")
    extra = set(table) - set(_WAVEFORM_KEYS)
    if extra:
        raise ConfigError(f"{where} has unknown waveform keys {sorted(extra)}; "
                          f"valid keys are {list(_WAVEFORM_KEYS)}")
    try:
        return Waveform(**{k: float(v) for k, v in table.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _build_system(tbl: dict) -> SwitchedSystem:
    kind = tbl.get("kind", "discrete")
    if kind not in ("discrete", "continuous"):
        raise ConfigError(f"system.kind must be 'discrete' or 'continuous', "
                          f"got {kind!r}")
    modes_tbl = tbl.get("modes")
    if not modes_tbl:
        raise ConfigError("system table needs at least one [[system.modes]] "
                          "entry")
    dt = tbl.get("dt")
    if kind == "continuous" and dt is None:
        raise ConfigError("continuous system needs system.dt for "
                          "discretization")
    modes = []
    for j, mt in enumerate(modes_tbl):
        where = f"system.modes[{j}]"
        missing = [k for k in _MODE_MATRIX_KEYS if k not in mt]
        if missing:
            raise ConfigError(f"{where} is missing matrices {missing}")
        mats = {k: _matrix(mt[k], f"{where}.{k}") for k in _MODE_MATRIX_KEYS}
        name = str(mt.get("name", f"mode{j}"))
        cls = ContinuousModeModel if kind == "continuous" else DiscreteModeModel
        try:
            model = cls(name=name, **mats)
        except InvalidModel as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        if kind == "continuous":
            model = discretize_zoh(model, float(dt))
        modes.append(model)
    try:
        return SwitchedSystem(modes=tuple(modes))
    except InvalidModel as exc:
        raise ConfigError(str(exc)) from exc


def _build_schedule(tbl, n_modes: int):
    if not isinstance(tbl, dict) or not ({"segments", "markov"} & set(tbl)):
        raise ConfigError("scenario.schedule needs either 'segments' or "
                          "'markov'")
    if "segments" in tbl and "markov" in tbl:
        raise ConfigError("scenario.schedule: give 'segments' or 'markov', "
                          "not both")
    try:
        if "segments" in tbl:
            segs = tuple((int(s), int(q)) for s, q in tbl["segments"])
            return ExplicitSchedule(segs)
        P = _matrix(tbl["markov"], "scenario.schedule.markov")
        return MarkovSchedule(P=P, q0=int(tbl.get("q0", 0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scenario.schedule: {exc}") from exc
    except InvalidModel as exc:
        raise ConfigError(f"scenario.schedule: {exc}") from exc


def _preset_scenario(sc_tbl: dict) -> Scenario:
    preset = sc_tbl["preset"]
    if preset != "intersection":
        raise ConfigError(f"unknown preset {preset!r}; available: "
                          f"'intersection'")
    kwargs = {}
    for key, cast in (("variant", str), ("horizon", int), ("seed", int),
                      ("dt", float), ("sample_x0", bool),
                      ("bias_ramp_rate", float)):
        if key in sc_tbl:
            kwargs[key] = cast(sc_tbl[key])
    if "switch_steps" in sc_tbl:
        steps = sc_tbl["switch_steps"]
        if len(steps) != 2:
            raise ConfigError("scenario.switch_steps must name two steps")
        kwargs["switch_steps"] = (int(steps[0]), int(steps[1]))
    if "x0" in sc_tbl:
        kwargs["x0"] = _vector(sc_tbl["x0"], "scenario.x0")
    if "P0" in sc_tbl:
        kwargs["P0"] = _matrix(sc_tbl["P0"], "scenario.P0")
    if "accel_wave" in sc_tbl:
        kwargs["accel_wave"] = _waveform(sc_tbl["accel_wave"],
                                         "scenario.accel_wave")
    try:
        return intersection_scenario(**kwargs)
    except InvalidModel as exc:
        raise ConfigError(str(exc)) from exc


def scenario_from_config(cfg: dict) -> Scenario:
    """Build a :class:`~modefilter.sim.Scenario` from a parsed config dict."""
    sc_tbl = cfg.get("scenario")
    if sc_tbl is None:
        raise ConfigError("config needs a [scenario] table")
    if "preset" in sc_tbl:
        return _preset_scenario(sc_tbl)

    if "system" not in cfg:
        raise ConfigError("non-preset scenario needs a [system] table")
    system = _build_system(cfg["system"])
    required = [k for k in ("horizon", "x0", "P0", "schedule", "u", "d")
                if k not in sc_tbl]
    if required:
        raise ConfigError(f"[scenario] is missing keys {required}")

    u = tuple(_waveform(t, f"scenario.u[{i}]")
              for i, t in enumerate(sc_tbl["u"]))
    d_entries = sc_tbl["d"]
    d_by_mode: dict[int, tuple[Waveform, ...]] = {}
    for ent in d_entries:
        if "mode" not in ent or "channels" not in ent:
            raise ConfigError("each [[scenario.d]] entry needs 'mode' and "
                              "'channels'")
        j = int(ent["mode"])
        d_by_mode[j] = tuple(
            _waveform(t, f"scenario.d[mode={j}].channels[{i}]")
            for i, t in enumerate(ent["channels"]))
    missing = [j for j in range(system.n_modes) if j not in d_by_mode]
    if missing:
        raise ConfigError(f"no unknown-input waveforms for modes {missing}")

    dt = float(cfg["system"].get("dt", sc_tbl.get("dt", 1.0)))
    try:
        return Scenario(
            system=system, dt=dt, horizon=int(sc_tbl["horizon"]),
            x0=_vector(sc_tbl["x0"], "scenario.x0"),
            P0=_matrix(sc_tbl["P0"], "scenario.P0"),
            schedule=_build_schedule(sc_tbl["schedule"], system.n_modes),
            u=u, d=tuple(d_by_mode[j] for j in range(system.n_modes)),
            seed=int(sc_tbl.get("seed", 0)),
            sample_x0=bool(sc_tbl.get("sample_x0", False)),
            name=str(sc_tbl.get("name", "")))
    except InvalidModel as exc:
        raise ConfigError(str(exc)) from exc


def estimator_from_config(cfg: dict, sc: Scenario,
                          kind_override: str | None = None) -> EstimatorConfig:
    """Build an :class:`~modefilter.sim.EstimatorConfig` from a config dict.

    The preset intersection scenario supplies a default transition matrix
    when the file does not name one; explicit systems must provide it for
    the dynamic kind.
    """
    tbl = dict(cfg.get("estimator", {}))
    kind = kind_override or tbl.get("kind", "dynamic")
    if kind not in ("static", "dynamic"):
        raise ConfigError(f"estimator kind must be 'static' or 'dynamic', "
                          f"got {kind!r}")
    transition = None
    if "transition" in tbl:
        transition = _matrix(tbl["transition"], "estimator.transition")
    elif kind == "dynamic":
        if sc.name.startswith("intersection:"):
            transition = intersection_transition()
        else:
            raise ConfigError("dynamic estimator needs estimator.transition")
    mu0 = _vector(tbl["mu0"], "estimator.mu0") if "mu0" in tbl else None
    static_kwargs = {}
    for key in ("prob_floor", "reinit_threshold"):
        if key in tbl:
            static_kwargs[key] = float(tbl[key])
    if "reinit_source" in tbl:
        static_kwargs["reinit_source"] = str(tbl["reinit_source"])
    x0_hat = _vector(tbl["x0_hat"], "estimator.x0_hat") \
        if "x0_hat" in tbl else None
    P0 = _matrix(tbl["P0"], "estimator.P0") if "P0" in tbl else None
    try:
        return EstimatorConfig(kind=kind, transition=transition, mu0=mu0,
                               static=StaticMMConfig(**static_kwargs),
                               x0_hat=x0_hat, P0=P0)
    except InvalidModel as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario_file(path, kind_override: str | None = None,
                       seed_override: int | None = None):
    """Load a config file into a ready (scenario, estimator config) pair."""
    cfg = load_toml(path)
    sc = scenario_from_config(cfg)
    if seed_override is not None:
        from dataclasses import replace
        sc = replace(sc, seed=int(seed_override))
    est = estimator_from_config(cfg, sc, kind_override)
    return sc, est


def _waveform_dict(w: Waveform) -> dict:
    return {k: getattr(w, k) for k in _WAVEFORM_KEYS}


def write_scenario_echo(sc: Scenario, est: EstimatorConfig | None,
                        path) -> None:
    """Dump the fully resolved scenario (and estimator) to a JSON file.

    The echo names the discrete-time matrices actually used, so a run can
    be reproduced from it alone even when the original file described a
    continuous-time system or a preset.
    """
    if isinstance(sc.schedule, MarkovSchedule):
        sched = {"markov": sc.schedule.P.tolist(), "q0": int(sc.schedule.q0)}
    else:
        sched = {"segments": [list(seg) for seg in sc.schedule.segments]}
    doc = {
        "name": sc.name,
        "dt": sc.dt,
        "horizon": sc.horizon,
        "seed": sc.seed,
        "sample_x0": sc.sample_x0,
        "x0": sc.x0.tolist(),
        "P0": sc.P0.tolist(),
        "schedule": sched,
        "u": [_waveform_dict(w) for w in sc.u],
        "d": [[_waveform_dict(w) for w in ws] for ws in sc.d],
        "system": {
            "kind": "discrete",
            "modes": [
                {"name": mod.name,
                 **{key: getattr(mod, key).tolist()
                    for key in _MODE_MATRIX_KEYS}}
                for mod in sc.system.modes
            ],
        },
    }
    if est is not None:
        doc["estimator"] = {
            "kind": est.kind,
            "transition": None if est.transition is None
            else np.asarray(est.transition, float).tolist(),
            "mu0": None if est.mu0 is None
            else np.asarray(est.mu0, float).tolist(),
            "prob_floor": est.static.prob_floor,
            "reinit_threshold": est.static.reinit_threshold,
            "reinit_source": est.static.reinit_source,
            "x0_hat": None if est.x0_hat is None
            else np.asarray(est.x0_hat, float).tolist(),
            "P0": None if est.P0 is None
            else np.asarray(est.P0, float).tolist(),
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
