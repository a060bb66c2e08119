"""Flat key=value run configuration: parsing, defaults, validation, assembly.

Every invariant is checked before any solving starts, and errors name the
offending key.  Defaults mirror the reference experiment settings
(alpha = theta = 0.01, tol_J = tol_eta = 1e-4, K_max = 3500, epsilon = 0.1,
tau = 1e-3).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .adjoint import Observation
from .datasets import (
    DATASET_NAMES,
    builtin_dataset,
    dataset_spec,
    default_control_mode,
    parse_control_mode,
)
from .fieldio import read_field
from .geometry import (
    ImplicitCurve,
    Polygon,
    indicator_field,
    read_pgm,
    smooth_indicator,
    smoothing_params,
)
from .mesh import Rectangle, build_mesh
from .model import ModelParams
from .optimize import OptimizationConfig
from .problem import TrackingProblem


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _parse_floats(text: str, n: int | None = None):
    parts = [p for p in text.replace(",", " ").split() if p]
    vals = [float(p) for p in parts]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _parse_shapes(text: str):
    shapes = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        kind, _, arg = item.partition(":")
        kind = kind.strip()
        if kind == "circle":
            cx, cy, r = _parse_floats(arg, 3)
            shapes.append(ImplicitCurve.circle(cx, cy, r))
        elif kind == "pcurve":
            sx, cx, cy, r, b1, w1, b2, w2 = _parse_floats(arg, 8)
            shapes.append(
                ImplicitCurve(
                    cx=cx, cy=cy, radius=r, x_scale=sx,
                    amp_x=b1, freq_x=w1, amp_y=b2, freq_y=w2,
                )
            )
        elif kind == "polygon":
            with open(arg.strip(), "r", encoding="ascii") as fh:
                pts = [tuple(_parse_floats(ln, 2)) for ln in fh if ln.strip()]
            shapes.append(Polygon(tuple(pts)))
        else:
            raise ValueError(f"unknown shape kind {kind!r}")
    if not shapes:
        raise ValueError("empty shape list")
    return shapes


# key -> (parser, default); None defaults resolve against the dataset later
_KEYS = {
    "dataset": (str, None),
    "domain": (lambda s: _parse_floats(s, 4), None),
    "nx": (int, None),
    "ny": (int, None),
    "epsilon": (float, 0.1),
    "tau": (float, 1e-3),
    "T": (float, None),
    "theta": (float, 0.01),
    "alpha": (float, 0.01),
    "tol_J": (float, 1e-4),
    "tol_eta": (float, 1e-4),
    "K_max": (int, 3500),
    "lambda_tol": (float, 1e-8),
    "constraint": (_parse_bool, True),
    "initial_control": (str, None),
    "smoothing_steps": (int, 10),
    "initial_field": (str, None),
    "target_field": (str, None),
    "initial_shapes": (_parse_shapes, None),
    "target_shapes": (_parse_shapes, None),
    "initial_raster": (str, None),
    "target_raster": (str, None),
    "raster_threshold": (float, 0.5),
    "observation_times": (_parse_floats, None),
    "target_fields": (lambda s: [p for p in s.replace(",", " ").split() if p], None),
    "output_dir": (str, "phasetrack_out"),
    "snapshot_stride": (int, 20),
    "dump_trajectory": (_parse_bool, False),
}


@dataclass
class RunConfig:
    values: dict = dc_field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def optimization_config(self) -> OptimizationConfig:
        return OptimizationConfig(
            alpha=self.alpha, tol_J=self.tol_J, tol_eta=self.tol_eta, K_max=self.K_max
        )

    def control_mode(self):
        if self.initial_control is not None:
            return parse_control_mode(self.initial_control)
        if self.dataset is not None:
            return parse_control_mode(default_control_mode(self.dataset))
        return ("zero",)


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse a key=value file (optional) plus overrides into a validated RunConfig."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
            raw[key.strip()] = value.strip()
    if overrides:
        for key, value in overrides.items():
            if value is not None:
                raw[key] = value

    values = {key: default for key, (_, default) in _KEYS.items()}
    for key, text in raw.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = _KEYS[key]
        if isinstance(text, str):
            try:
                values[key] = parser(text)
            except (ValueError, OSError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
        else:
            values[key] = text

    cfg = RunConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    v = cfg.values
    if v["dataset"] is not None and v["dataset"] not in DATASET_NAMES:
        raise ConfigError(
            f"unknown dataset {v['dataset']!r}; choose from {', '.join(DATASET_NAMES)}"
        )
    for key in ("epsilon", "tau", "theta", "alpha", "tol_J", "tol_eta", "lambda_tol"):
        if not v[key] > 0:
            raise ConfigError(f"config key {key!r} must be positive")
    for key in ("K_max", "snapshot_stride", "smoothing_steps"):
        if v[key] < (1 if key != "smoothing_steps" else 0):
            raise ConfigError(f"config key {key!r} out of range")
    for key in ("nx", "ny"):
        if v[key] is not None and v[key] < 1:
            raise ConfigError(f"config key {key!r} must be a positive cell count")

    T = v["T"]
    if T is None and v["dataset"] is not None:
        T = dataset_spec(v["dataset"])["T"]
    if T is not None:
        if not T > 0:
            raise ConfigError("config key 'T' must be positive")
        n = round(T / v["tau"])
        if n < 1 or abs(n * v["tau"] - T) > 1e-12 * max(T, 1.0):
            raise ConfigError(
                f"T = {T} must be an integer multiple of tau = {v['tau']} (T = M*tau)"
            )
    elif v["dataset"] is None:
        raise ConfigError("either 'dataset' or 'T' must be given")

    if v["initial_control"] is not None:
        try:
            parse_control_mode(v["initial_control"])
        except ValueError as exc:
            raise ConfigError(f"bad value for 'initial_control': {exc}") from exc

    if v["dataset"] is None:
        sources = [
            v["initial_field"] is not None,
            v["initial_shapes"] is not None,
            v["initial_raster"] is not None,
        ]
        if sum(sources) != 1:
            raise ConfigError(
                "custom problems need exactly one of initial_field / "
                "initial_shapes / initial_raster (or set 'dataset')"
            )
        target_sources = [
            v["target_field"] is not None,
            v["target_shapes"] is not None,
            v["target_raster"] is not None,
            v["target_fields"] is not None,
        ]
        if sum(target_sources) != 1:
            raise ConfigError(
                "custom problems need exactly one of target_field / target_shapes "
                "/ target_raster / target_fields"
            )
        if v["initial_field"] is None:
            if v["domain"] is None:
                raise ConfigError("custom shape/raster problems need 'domain'")
            if v["nx"] is None or v["ny"] is None:
                raise ConfigError("custom shape/raster problems need 'nx' and 'ny'")
        if v["target_fields"] is not None and v["observation_times"] is None:
            raise ConfigError("'target_fields' requires 'observation_times'")
        if v["observation_times"] is not None:
            times = v["observation_times"]
            paths = v["target_fields"]
            if paths is None or len(paths) != len(times):
                raise ConfigError(
                    "'observation_times' and 'target_fields' must pair up"
                )


def assemble_problem(cfg: RunConfig) -> TrackingProblem:
    """Build the TrackingProblem a validated config describes."""
    v = cfg.values
    if v["dataset"] is not None:
        return builtin_dataset(
            v["dataset"],
            nx=v["nx"],
            ny=v["ny"],
            epsilon=v["epsilon"],
            tau=v["tau"],
            T=v["T"],
            theta=v["theta"],
            constrained=v["constraint"],
            smoothing_steps=v["smoothing_steps"],
        )

    if v["initial_field"] is not None:
        phi0, meta = read_field(v["initial_field"])
        mesh = phi0.mesh
        params = ModelParams(
            epsilon=v["epsilon"], tau=v["tau"], T=v["T"], theta=v["theta"]
        )
        observations = []
        if v["target_fields"] is not None:
            for t, pth in zip(v["observation_times"], v["target_fields"]):
                obs_f, _ = read_field(pth, mesh=mesh)
                observations.append(Observation(t, obs_f))
        else:
            obs_f, _ = read_field(v["target_field"], mesh=mesh)
            observations.append(Observation(params.T, obs_f))
        return TrackingProblem(
            mesh=mesh,
            phi0=phi0,
            observations=observations,
            params=params,
            constrained=v["constraint"],
            name="custom",
        )

    x0, y0, x1, y1 = v["domain"]
    try:
        rect = Rectangle(x0, y0, x1, y1)
    except ValueError as exc:
        raise ConfigError(f"bad value for 'domain': {exc}") from exc
    mesh = build_mesh(rect, v["nx"], v["ny"])
    params = ModelParams(epsilon=v["epsilon"], tau=v["tau"], T=v["T"], theta=v["theta"])
    smooth = smoothing_params(params)

    def build_side(shapes_key, raster_key):
        if v[shapes_key] is not None:
            ind = indicator_field(mesh, v[shapes_key])
        else:
            raster = read_pgm(v[raster_key], x0, y0, x1, y1)
            ind = indicator_field(mesh, raster, threshold=v["raster_threshold"])
        return smooth_indicator(ind, smooth, v["smoothing_steps"])

    phi0 = build_side("initial_shapes", "initial_raster")
    phi_obs = build_side("target_shapes", "target_raster")
    return TrackingProblem(
        mesh=mesh,
        phi0=phi0,
        observations=[Observation(params.T, phi_obs)],
        params=params,
        constrained=v["constraint"],
        name="custom",
    )
