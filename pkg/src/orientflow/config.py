"""Line-based run configuration.

Format::

    # comment
    [model]
    dims = 64x64
    kappa = 1.0

``[section]`` headers group keys for readability; every key name is unique
across sections and may appear under any header.  Parsing collects a
diagnostic with its line number for every malformed line and raises once,
so a config is either accepted whole or rejected whole.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import Thresholds
from .flow import SCHEMES, StepperConfig
from .grid import FieldPair, Grid, default_grains, make_initial
from .model import ModelParams, ParameterError, default_model_functions

REQUIRED = ("dims", "M", "kappa", "eps", "nu", "delta", "scheme", "initial")
DEFAULT_DT = {"explicit": 0.005, "semi-implicit": 0.005, "minimizing-movement": 0.02, "projected": 0.01}
INITIAL_KINDS = ("constant", "bicrystal", "random-cap", "vortex")
STAGES = ("delta", "nu", "eps")


class ConfigError(ValueError):
    """Invalid configuration; ``diagnostics`` lists one message per problem."""

    def __init__(self, diagnostics: list[str], key: str | None = None):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics
        self.key = key


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _dims(text: str) -> tuple[int, ...]:
    dims = tuple(int(x) for x in text.lower().split("x"))
    if not 1 <= len(dims) <= 3 or any(d < 1 for d in dims):
        raise ValueError("expected 1 to 3 positive cell counts like 64x64")
    return dims


def _seed(text: str) -> int:
    s = int(text, 0)
    if not 0 <= s < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return s


def _choice(options):
    def conv(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return conv


def _optional_float(text: str) -> float | None:
    return None if text.lower() in ("", "none") else float(text)


# key -> (section, converter, default); _REQ marks required keys
_REQ = object()
SCHEMA: dict[str, tuple[str, object, object]] = {
    "dims": ("model", _dims, _REQ),
    "h": ("model", _floats, (1.0,)),
    "M": ("model", int, _REQ),
    "kappa": ("model", float, _REQ),
    "eps": ("model", float, _REQ),
    "nu": ("model", float, _REQ),
    "delta": ("model", float, _REQ),
    "T": ("model", float, 0.5),
    "alpha": ("model", _choice(("quadratic", "constant-alpha")), "quadratic"),
    "alpha_c0": ("model", float, 0.1),
    "alpha_c1": ("model", float, 1.0),
    "scheme": ("stepper", _choice(SCHEMES + ("projected-constrained",)), _REQ),
    "dt": ("stepper", _optional_float, None),
    "cfl_safety": ("stepper", float, 0.5),
    "cg_tol": ("stepper", float, 1e-12),
    "cg_maxiter": ("stepper", int, 2000),
    "mm_maxiter": ("stepper", int, 500),
    "mm_tol": ("stepper", _optional_float, None),
    "initial": ("initial", _choice(INITIAL_KINDS), _REQ),
    "seed": ("initial", _seed, 0),
    "eta0": ("initial", float, 1.0),
    "r": ("initial", float, 0.5),
    "sigma": ("initial", float, 0.3),
    "sweeps": ("initial", int, 2),
    "grain_angle": ("initial", float, 1.2),
    "grain_a": ("initial", _floats, None),
    "grain_b": ("initial", _floats, None),
    "width": ("initial", float, 2.0),
    "eta_min": ("initial", float, 0.5),
    "axis": ("initial", int, 0),
    "position": ("initial", float, 0.5),
    "output": ("output", str, "out"),
    "record_stride": ("output", int, 1),
    "snapshot_stride": ("output", int, 0),
    "cap_r": ("check", _optional_float, None),
    "cap_tol": ("check", float, 1e-3),
    "energy_tol": ("check", float, 1e-8),
    "gl_slack": ("check", float, 0.1),
    "schedule_delta": ("continuation", _floats, ()),
    "schedule_nu": ("continuation", _floats, ()),
    "schedule_eps": ("continuation", _floats, ()),
    "match_points": ("continuation", int, 10),
    "delta_scheme": ("continuation", _choice(SCHEMES), "semi-implicit"),
    "nu_scheme": ("continuation", _choice(SCHEMES), "projected"),
    "eps_scheme": ("continuation", _choice(SCHEMES), "projected"),
}

_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")
_SECTION = re.compile(r"^\s*\[\s*([A-Za-z_][A-Za-z0-9_-]*)\s*\]\s*$")


def parse_text(text: str, source: str = "<config>") -> dict[str, tuple[object, int]]:
    """Parse and convert every line; returns ``key -> (value, line number)``."""
    values: dict[str, tuple[object, int]] = {}
    errors: list[str] = []
    sections = {s for s, _, _ in SCHEMA.values()}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            if m.group(1) not in sections:
                errors.append(f"{source}:{n}: unknown section [{m.group(1)}]")
            continue
        m = _LINE.match(line)
        if not m:
            errors.append(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, val = m.group(1), m.group(2)
        if key not in SCHEMA:
            errors.append(f"{source}:{n}: unknown key {key!r}")
            continue
        if key in values:
            errors.append(f"{source}:{n}: duplicate key {key!r} (first set on line {values[key][1]})")
            continue
        if val == "":
            errors.append(f"{source}:{n}: key {key!r} has no value")
            continue
        try:
            values[key] = (SCHEMA[key][1](val), n)
        except ValueError as exc:
            errors.append(f"{source}:{n}: bad value for {key!r}: {val!r} ({exc})")
    if errors:
        raise ConfigError(errors)
    return values


def _format(value) -> str:
    if isinstance(value, tuple):
        if value and all(isinstance(v, int) for v in value):
            return "x".join(str(v) for v in value)
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict[str, object]
    lines: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    # -- derived objects ---------------------------------------------------------

    @property
    def grid(self) -> Grid:
        dims, h = self["dims"], self["h"]
        if len(h) == 1:
            h = h * len(dims)
        return Grid(dims, h)

    @property
    def params(self) -> ModelParams:
        funcs = default_model_functions(self["alpha"], self["alpha_c0"], self["alpha_c1"])
        return ModelParams(kappa=self["kappa"], eps=self["eps"], nu=self["nu"], delta=self["delta"],
                           M=self["M"], dimN=len(self["dims"]), T=self["T"], funcs=funcs)

    @property
    def stepper(self) -> StepperConfig:
        return self.stepper_for(self["scheme"])

    def stepper_for(self, scheme: str) -> StepperConfig:
        scheme = "projected" if scheme == "projected-constrained" else scheme
        dt = self["dt"] if self["dt"] is not None else DEFAULT_DT[scheme]
        return StepperConfig(scheme, dt, self["cfl_safety"], self["cg_tol"], self["cg_maxiter"],
                             self["mm_maxiter"], self["mm_tol"])

    @property
    def run_params(self) -> ModelParams:
        """Model parameters for the configured scheme (``delta = 0`` for the constrained flow)."""
        p = self.params
        return p.with_(delta=0.0) if self.stepper.mode == "constrained" else p

    @property
    def thresholds(self) -> Thresholds:
        cap_r = self["cap_r"]
        if cap_r is None and self["initial"] == "random-cap":
            cap_r = self["r"]
        return Thresholds(energy_tol=self["energy_tol"], gl_slack=self["gl_slack"],
                          cap_r=cap_r, cap_tol=self["cap_tol"])

    @property
    def schedule(self) -> dict[str, list[float]]:
        return {s: list(self[f"schedule_{s}"]) for s in STAGES if self[f"schedule_{s}"]}

    def initial_state(self, seed: int | None = None) -> FieldPair:
        seed = self["seed"] if seed is None else seed
        params = self.params
        grains = {}
        if self["initial"] == "bicrystal":
            da, db = default_grains(params.M, self["grain_angle"])
            grains = {"grain_a": self["grain_a"] or da, "grain_b": self["grain_b"] or db}
        return make_initial(self["initial"], self.grid, params, seed, eta0=self["eta0"], r=self["r"],
                            sigma=self["sigma"], sweeps=self["sweeps"], width=self["width"],
                            eta_min=self["eta_min"], axis=self["axis"], position=self["position"],
                            **grains)

    def with_seed(self, seed: int) -> "RunConfig":
        return RunConfig({**self.values, "seed": _seed(str(seed))}, dict(self.lines))

    def resolved_text(self) -> str:
        """The full configuration with defaults filled in, as config text."""
        out, section = [], None
        for key, (sec, _, _) in SCHEMA.items():
            if sec != section:
                out.append(f"{'' if section is None else chr(10)}[{sec}]")
                section = sec
            val = self.values[key]
            if key == "dt" and val is None:
                val = DEFAULT_DT[self.stepper.scheme]
            if val is None or val == ():
                continue
            out.append(f"{key} = {_format(val)}")
        return "\n".join(out) + "\n"


def _fail(key: str, message: str, lines: dict[str, int]) -> ConfigError:
    where = f"line {lines[key]}: " if key in lines else ""
    return ConfigError([f"{where}{key}: {message}"], key)


def build(values: dict[str, tuple[object, int]], require_schedule: bool = False) -> RunConfig:
    """Fill defaults and validate against the module preconditions."""
    lines = {k: n for k, (_, n) in values.items()}
    for key in REQUIRED:
        if key not in values:
            raise ConfigError([f"missing required key {key!r}"], key)
    full = {k: (values[k][0] if k in values else default) for k, (_, _, default) in SCHEMA.items()}
    cfg = RunConfig(full, lines)

    dims, h = full["dims"], full["h"]
    if len(h) not in (1, len(dims)):
        raise _fail("h", f"give one spacing or one per axis ({len(dims)})", lines)
    checks = [
        ("h", all(x > 0 for x in h), "spacings must be positive"),
        ("T", full["T"] > 0, "final time must be positive"),
        ("dt", full["dt"] is None or full["dt"] > 0, "time step must be positive"),
        ("record_stride", full["record_stride"] >= 1, "must be >= 1"),
        ("snapshot_stride", full["snapshot_stride"] >= 0, "must be >= 0"),
        ("match_points", full["match_points"] >= 1, "must be >= 1"),
        ("axis", 0 <= full["axis"] < len(dims), "must name a grid axis"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise _fail(key, msg, lines)
    for stage in STAGES:
        sched = full[f"schedule_{stage}"]
        if any(b >= a for a, b in zip(sched, sched[1:])) or any(v < 0 for v in sched):
            raise _fail(f"schedule_{stage}", "must be a strictly decreasing list of nonnegative values", lines)
    if require_schedule and not any(full[f"schedule_{s}"] for s in STAGES):
        raise ConfigError(["continuation needs at least one of schedule_delta, schedule_nu, schedule_eps"],
                          "schedule_delta")

    ranges = [
        ("M", full["M"] >= 2, "target dimension must be at least 2"),
        ("kappa", full["kappa"] > 0, "must be positive"),
        ("eps", full["eps"] >= 0, "must be >= 0"),
        ("nu", full["nu"] >= 0, "must be >= 0"),
        ("delta", full["delta"] >= 0, "must be >= 0"),
        ("alpha_c0", full["alpha_c0"] > 0, "must be positive"),
        ("alpha_c1", full["alpha_c1"] >= 0, "must be >= 0"),
        ("cfl_safety", 0 < full["cfl_safety"] <= 1, "must lie in (0, 1]"),
    ]
    for key, ok, msg in ranges:
        if not ok:
            raise _fail(key, msg, lines)
    params = cfg.params
    stepper = cfg.stepper
    try:
        stepper.validate(cfg.run_params)
    except ParameterError as exc:
        key = "dt" if exc.tag == "R0" else ("eps" if full["eps"] <= 0 else "delta")
        raise _fail(key, str(exc), lines) from None
    grain_keys = [k for k in ("grain_a", "grain_b") if full[k] is not None]
    for k in grain_keys:
        g = np.asarray(full[k])
        if g.size != params.M or abs(np.linalg.norm(g) - 1.0) > 1e-12:
            raise _fail(k, f"must be a unit vector with M = {params.M} components", lines)
    if full["cap_r"] is not None and not 0 < full["cap_r"] < 1:
        raise _fail("cap_r", "cap parameter must lie in (0, 1)", lines)
    try:
        U0 = cfg.initial_state()
    except (ValueError, ParameterError) as exc:
        raise _fail("initial", str(exc), lines) from None
    if stepper.mode == "constrained":
        defect = float(np.max(np.abs(np.linalg.norm(U0.u, axis=-1) - 1.0)))
        if defect > 1e-8:
            raise _fail("initial", f"constrained schemes need |u0| = 1 (defect {defect:.3e})", lines)
    if not math.isfinite(float(np.sum(U0.eta))):
        raise _fail("initial", "initial data is not finite", lines)
    return cfg


def load(path, require_schedule: bool = False) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {p}: {exc.strerror}"], "config") from None
    return build(parse_text(text, str(p)), require_schedule)


def loads(text: str, require_schedule: bool = False) -> RunConfig:
    return build(parse_text(text), require_schedule)
