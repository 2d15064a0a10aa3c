"""Run configuration: one JSON document covering every module.

Sections: params (physical constants), sim (scenario), mhe (estimator),
road (profile database), network (channel + localization error), output
(artifact directory).  Validation is strict: unknown keys anywhere are
rejected with a path-qualified error.  Angles may be written with a
"deg" or "rad" suffix; everything is stored in SI radians internally.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass

from .mhe import MheConfig
from .road import RoadDatabase, RoadProfile, RoadSegment
from .simulate import SimConfig
from .suspension import SuspensionParams, N_STATES, N_WHEELS, N_OUTPUTS
from .v2c2v.channel import ChannelConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "paper_scenario_path"]

_V_BOX_STD_MULTIPLE = 10.0


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending key path."""


def _check_keys(obj, allowed, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown key")


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _quantity(value, path):
    """A number, or a string like '-5 deg' / '0.1 rad' converted to SI."""
    if isinstance(value, str):
        parts = value.split()
        if len(parts) != 2 or parts[1] not in ("deg", "rad"):
            raise ConfigError(f"{path}: expected 'VALUE deg' or 'VALUE rad', got {value!r}")
        try:
            raw = float(parts[0])
        except ValueError:
            raise ConfigError(f"{path}: bad numeric part in {value!r}") from None
        return raw * math.pi / 180.0 if parts[1] == "deg" else raw
    return _number(value, path)


def _bound(value, path):
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("inf", "+inf"):
            return math.inf
        if lowered == "-inf":
            return -math.inf
        raise ConfigError(f"{path}: expected a number or 'inf'/'-inf', got {value!r}")
    return _number(value, path)


def _vector(value, path, size=None, element=_number):
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list")
    if size is not None and len(value) != size:
        raise ConfigError(f"{path}: expected {size} entries, got {len(value)}")
    return tuple(element(v, f"{path}[{i}]") for i, v in enumerate(value))


def _std_vector(value, path, size):
    """Scalar broadcast or full-length list of non-negative numbers."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (float(value),) * size
    return _vector(value, path, size)


def _emit_bound(value):
    if value is None:
        return None
    out = []
    for v in value:
        if math.isinf(v):
            out.append("inf" if v > 0 else "-inf")
        else:
            out.append(v)
    return out


@dataclass
class RunConfig:
    """Validated composite configuration for one run."""

    params: SuspensionParams
    sim: SimConfig
    mhe: MheConfig
    road: RoadDatabase
    channel: ChannelConfig
    gps_err_std: float = 0.0
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _check_keys(data, ("params", "sim", "mhe", "road", "network", "output"), "config")
        params = _parse_params(data.get("params", {}))
        sim = _parse_sim(data.get("sim", {}))
        mhe = _parse_mhe(data.get("mhe", {}), sim)
        road = _parse_road(data.get("road", {}), params)
        channel, gps_err_std = _parse_network(data.get("network", {}))
        output_dir = data.get("output", "out")
        if not isinstance(output_dir, str):
            raise ConfigError("config.output: expected a string")
        try:
            return cls(params=params, sim=sim, mhe=mhe, road=road,
                       channel=channel, gps_err_std=gps_err_std,
                       output_dir=output_dir)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        """Canonical SI-unit form; from_dict round-trips it exactly."""
        p = self.params
        mhe = self.mhe
        segments = []
        for seg in self.road.left.segments:
            segments.append({"start": seg.start, "end": seg.end,
                             "amplitude": seg.amplitude, "omega": seg.omega,
                             "basis": seg.basis})
        right = []
        for seg in self.road.right.segments:
            right.append({"start": seg.start, "end": seg.end,
                          "amplitude": seg.amplitude, "omega": seg.omega,
                          "basis": seg.basis})
        road = {"speed": self.road.speed, "stagger": self.road.stagger,
                "segments": segments}
        if right != segments:
            road = {"speed": self.road.speed, "stagger": self.road.stagger,
                    "left": segments, "right": right}
        return {
            "params": {k: getattr(p, k) for k in
                       ("ms", "mus", "ks", "kt", "cs", "ix", "iy",
                        "l1", "l2", "l3", "l4")},
            "sim": {
                "duration": self.sim.duration,
                "ts": self.sim.ts,
                "seed": self.sim.seed,
                "w_std": list(self.sim.w_std),
                "v_std": list(self.sim.v_std),
                "initial_state": list(self.sim.initial_state),
                "input_steps": [{"t": t, "u": list(u)} for t, u in self.sim.input_steps],
            },
            "mhe": {
                "horizon": mhe.horizon,
                "q_diag": None if mhe.q_diag is None else list(mhe.q_diag),
                "r_diag": None if mhe.r_diag is None else list(mhe.r_diag),
                "pi0_diag": None if mhe.pi0_diag is None else list(mhe.pi0_diag),
                "x0": None if mhe.x0 is None else list(mhe.x0),
                "x_lo": _emit_bound(mhe.x_lo), "x_hi": _emit_bound(mhe.x_hi),
                "w_lo": _emit_bound(mhe.w_lo), "w_hi": _emit_bound(mhe.w_hi),
                "v_lo": _emit_bound(mhe.v_lo), "v_hi": _emit_bound(mhe.v_hi),
                "cov_reg": mhe.cov_reg,
                "qp_tol": mhe.qp_tol,
                "qp_max_iter": mhe.qp_max_iter,
            },
            "road": road,
            "network": {
                "base_delay": self.channel.base_delay,
                "jitter": self.channel.jitter,
                "drop_prob": self.channel.drop_prob,
                "seed": self.channel.seed,
                "gps_err_std": self.gps_err_std,
            },
            "output": self.output_dir,
        }


def _parse_params(obj) -> SuspensionParams:
    keys = ("ms", "mus", "ks", "kt", "cs", "ix", "iy", "l1", "l2", "l3", "l4")
    _check_keys(obj, keys, "params")
    values = {k: _number(v, f"params.{k}") for k, v in obj.items()}
    try:
        return SuspensionParams(**values)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc


def _parse_sim(obj) -> SimConfig:
    _check_keys(obj, ("duration", "ts", "seed", "w_std", "v_std",
                      "initial_state", "input_steps"), "sim")
    kwargs = {}
    if "duration" in obj:
        kwargs["duration"] = _number(obj["duration"], "sim.duration")
    if "ts" in obj:
        kwargs["ts"] = _number(obj["ts"], "sim.ts")
    if "seed" in obj:
        if not isinstance(obj["seed"], int) or isinstance(obj["seed"], bool):
            raise ConfigError("sim.seed: expected an integer")
        kwargs["seed"] = obj["seed"]
    if "w_std" in obj:
        kwargs["w_std"] = _std_vector(obj["w_std"], "sim.w_std", N_WHEELS)
    if "v_std" in obj:
        kwargs["v_std"] = _std_vector(obj["v_std"], "sim.v_std", N_OUTPUTS)
    if "initial_state" in obj:
        kwargs["initial_state"] = _vector(obj["initial_state"], "sim.initial_state",
                                          N_STATES, element=_quantity)
    if "input_steps" in obj:
        steps = obj["input_steps"]
        if not isinstance(steps, list):
            raise ConfigError("sim.input_steps: expected a list")
        parsed = []
        for i, entry in enumerate(steps):
            path = f"sim.input_steps[{i}]"
            _check_keys(entry, ("t", "u"), path)
            if "t" not in entry or "u" not in entry:
                raise ConfigError(f"{path}: needs both 't' and 'u'")
            parsed.append((_number(entry["t"], f"{path}.t"),
                           _vector(entry["u"], f"{path}.u", N_WHEELS)))
        kwargs["input_steps"] = tuple(parsed)
    try:
        return SimConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc


def _parse_mhe(obj, sim: SimConfig) -> MheConfig:
    _check_keys(obj, ("horizon", "q_diag", "r_diag", "pi0_diag", "x0",
                      "x_lo", "x_hi", "w_lo", "w_hi", "v_lo", "v_hi",
                      "cov_reg", "qp_tol", "qp_max_iter"), "mhe")
    kwargs = {}
    if "horizon" in obj:
        if not isinstance(obj["horizon"], int) or isinstance(obj["horizon"], bool):
            raise ConfigError("mhe.horizon: expected an integer")
        kwargs["horizon"] = obj["horizon"]
    for key, size in (("q_diag", None), ("r_diag", N_OUTPUTS), ("pi0_diag", None)):
        if key in obj and obj[key] is not None:
            value = obj[key]
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                value = [value]
            kwargs[key] = _vector(value, f"mhe.{key}", size)
    if "x0" in obj and obj["x0"] is not None:
        kwargs["x0"] = _vector(obj["x0"], "mhe.x0", N_STATES, element=_quantity)
    for key, size in (("x_lo", N_STATES), ("x_hi", N_STATES),
                      ("w_lo", N_WHEELS), ("w_hi", N_WHEELS),
                      ("v_lo", N_OUTPUTS), ("v_hi", N_OUTPUTS)):
        if key in obj and obj[key] is not None:
            kwargs[key] = _vector(obj[key], f"mhe.{key}", size, element=_bound)
    # residual box defaults to +-10 measurement-noise std; explicit null disables
    if "v_lo" not in obj:
        kwargs.setdefault("v_lo", tuple(-_V_BOX_STD_MULTIPLE * s for s in sim.v_std))
    if "v_hi" not in obj:
        kwargs.setdefault("v_hi", tuple(_V_BOX_STD_MULTIPLE * s for s in sim.v_std))
    for key in ("cov_reg", "qp_tol"):
        if key in obj:
            kwargs[key] = _number(obj[key], f"mhe.{key}")
    if "qp_max_iter" in obj:
        if not isinstance(obj["qp_max_iter"], int) or isinstance(obj["qp_max_iter"], bool):
            raise ConfigError("mhe.qp_max_iter: expected an integer")
        kwargs["qp_max_iter"] = obj["qp_max_iter"]
    try:
        return MheConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"mhe: {exc}") from exc


def _parse_segments(entries, path):
    segments = []
    for i, entry in enumerate(entries):
        seg_path = f"{path}[{i}]"
        _check_keys(entry, ("start", "end", "amplitude", "omega", "basis"), seg_path)
        for needed in ("start", "end", "amplitude", "omega"):
            if needed not in entry:
                raise ConfigError(f"{seg_path}.{needed}: missing")
        basis = entry.get("basis", "time")
        if basis not in ("time", "arclength"):
            raise ConfigError(f"{seg_path}.basis: expected 'time' or 'arclength'")
        try:
            segments.append(RoadSegment(
                start=_number(entry["start"], f"{seg_path}.start"),
                end=_number(entry["end"], f"{seg_path}.end"),
                amplitude=_number(entry["amplitude"], f"{seg_path}.amplitude"),
                omega=_number(entry["omega"], f"{seg_path}.omega"),
                basis=basis))
        except ValueError as exc:
            raise ConfigError(f"{seg_path}: {exc}") from exc
    return tuple(segments)


def _parse_road(obj, params: SuspensionParams) -> RoadDatabase:
    _check_keys(obj, ("speed", "stagger", "segments", "left", "right"), "road")
    if "segments" in obj and ("left" in obj or "right" in obj):
        raise ConfigError("road.segments: give either 'segments' or 'left'/'right', not both")
    try:
        if "segments" in obj:
            left = RoadProfile(_parse_segments(obj["segments"], "road.segments"))
            right = left
        else:
            left = RoadProfile(_parse_segments(obj.get("left", []), "road.left"))
            right = RoadProfile(_parse_segments(obj.get("right", []), "road.right"))
        speed = _number(obj.get("speed", 15.0), "road.speed")
        stagger = obj.get("stagger", False)
        if not isinstance(stagger, bool):
            raise ConfigError("road.stagger: expected a boolean")
        return RoadDatabase(left=left, right=right, speed=speed,
                            wheelbase=params.wheelbase, stagger=stagger)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"road: {exc}") from exc


def _parse_network(obj):
    _check_keys(obj, ("base_delay", "jitter", "drop_prob", "seed", "gps_err_std"),
                "network")
    kwargs = {}
    for key in ("base_delay", "jitter", "drop_prob"):
        if key in obj:
            kwargs[key] = _number(obj[key], f"network.{key}")
    if "seed" in obj:
        if not isinstance(obj["seed"], int) or isinstance(obj["seed"], bool):
            raise ConfigError("network.seed: expected an integer")
        kwargs["seed"] = obj["seed"]
    gps_err_std = _number(obj.get("gps_err_std", 0.0), "network.gps_err_std")
    if gps_err_std < 0:
        raise ConfigError("network.gps_err_std: must be non-negative")
    try:
        return ChannelConfig(**kwargs), gps_err_std
    except ValueError as exc:
        raise ConfigError(f"network: {exc}") from exc


def load_config(path) -> RunConfig:
    return RunConfig.from_file(path)


def paper_scenario_path():
    """Filesystem path of the bundled demonstration scenario."""
    return importlib.resources.files("cloudmhe").joinpath("data/paper_scenario.json")
