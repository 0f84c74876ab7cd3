"""Typed INI configuration for the command-line experiments.

A config is a set of ``[section]`` blocks of ``key = value`` lines.  Every
key has a declared type, default and admissible range; unknown sections or
keys are rejected with the offending ``section.key`` path in the message.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional

from .errors import ConfigError

__all__ = ["SCHEMA", "RunConfig", "load_config", "preset_path", "PRESETS"]


def _floats(text: str):
    text = text.strip()
    if not text:
        return []
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Key:
    kind: Callable[[str], Any]
    default: str
    check: Optional[Callable[[Any], bool]] = None
    hint: str = ""


def _pos(v):
    return v > 0


def _choice(*opts):
    return lambda v: v in opts


SCHEMA: Dict[str, Dict[str, Key]] = {
    "medium": {
        "g_mean": Key(float, "1.0", _pos, "must be positive"),
        "g_cos": Key(_floats, "", lambda v: len(v) <= 16, "at most 16 modes"),
        "g_sin": Key(_floats, "", lambda v: len(v) <= 16, "at most 16 modes"),
    },
    "reaction": {
        "kind": Key(str, "logistic", _choice("logistic", "polynomial"), "logistic or polynomial"),
        "coeffs": Key(_floats, "", None, "ascending polynomial coefficients of f"),
    },
    "spectral": {
        "N": Key(int, "512", lambda v: 32 <= v <= 8192 and v % 2 == 0, "even, in [32, 8192]"),
        "richardson": Key(_bool, "false"),
        "identity_tol": Key(float, "1e-6", _pos, "must be positive"),
    },
    "solver": {
        "h": Key(float, "0.02", lambda v: 0 < v <= 0.1 and abs(1 / v - round(1 / v)) < 1e-9,
                 "in (0, 0.1] with 1/h an integer"),
        "dt": Key(float, "0.01", lambda v: 0 < v <= 0.1, "in (0, 0.1]"),
        "width": Key(float, "300", lambda v: v >= 50, "at least 50"),
        "back": Key(float, "30", _pos, "must be positive"),
        "horizon": Key(float, "1500", _pos, "must be positive"),
        "trace_every": Key(float, "1.0", _pos, "must be positive"),
    },
    "initial": {
        "a": Key(float, "-1.0"),
        "b": Key(float, "1.0"),
        "height": Key(float, "1.0", lambda v: 0 <= v <= 1, "in [0, 1]"),
    },
    "delay": {
        "t_min": Key(float, "100", _pos, "must be positive"),
        "t_max": Key(float, "1500", _pos, "must be positive"),
        "eps": Key(float, "0.5", lambda v: 0 < v < 1, "in (0, 1)"),
    },
    "linear": {
        "t_end": Key(float, "500", _pos, "must be positive"),
        "t_min": Key(float, "50", _pos, "must be positive"),
        "n_out": Key(int, "91", lambda v: v >= 3, "at least 3"),
        "sigmas": Key(_floats, "0.25, 0.5, 1, 1.5, 2, 3, 4", lambda v: len(v) >= 1 and min(v) > 0,
                      "positive values"),
        "conservation_t_end": Key(float, "200", _pos, "must be positive"),
    },
    "shifted": {
        "tau_end": Key(float, "1000", _pos, "must be positive"),
        "tau_min": Key(float, "100", _pos, "must be positive"),
        "width": Key(float, "400", lambda v: v >= 50, "at least 50"),
        "dt": Key(float, "0.02", lambda v: 0 < v <= 0.1, "in (0, 0.1]"),
        "h": Key(float, "0.05", lambda v: 0 < v <= 0.1, "in (0, 0.1]"),
        "k": Key(float, "1.0", _pos, "must be positive"),
        "y_min": Key(float, "0.5", _pos, "must be positive"),
    },
    "theta_app": {
        "chi_bar": Key(float, "0.0"),
        "sigma": Key(float, "1.0", _pos, "must be positive"),
        "tau_min": Key(float, "100", lambda v: v >= 10, "at least 10"),
        "tau_max": Key(float, "1600", _pos, "must be positive"),
        "n_tau": Key(int, "6", lambda v: v >= 2, "at least 2"),
        "n_colloc": Key(int, "128", lambda v: v >= 16 and v % 2 == 0, "even, at least 16"),
        "hx": Key(float, "5e-3", _pos, "must be positive"),
        "p0_form": Key(str, "derived", _choice("derived", "alternate"), "derived or alternate"),
    },
    "front": {
        "relax_horizon": Key(float, "1500", _pos, "must be positive"),
        "n_phase": Key(int, "50", lambda v: v >= 4, "at least 4"),
        "t_min": Key(float, "200", _pos, "must be positive"),
        "t_end": Key(float, "1000", _pos, "must be positive"),
        "n_out": Key(int, "17", lambda v: v >= 2, "at least 2"),
        "shift_window": Key(float, "5.0", _pos, "half-width in periods of the medium"),
    },
    "bbm": {
        "T": Key(float, "4.0", _pos, "must be positive"),
        "dt": Key(float, "0.01", lambda v: 0 < v <= 0.01, "in (0, 0.01]"),
        "trials": Key(int, "20000", lambda v: v >= 100, "at least 100"),
        "x_min": Key(float, "0.0"),
        "x_max": Key(float, "8.0"),
        "n_x": Key(int, "9", lambda v: v >= 1, "at least 1"),
        "max_particles": Key(int, "2000000", _pos, "must be positive"),
    },
    "run": {
        "seed": Key(int, "0", lambda v: 0 <= v < 2**64, "a 64-bit unsigned integer"),
        "threads": Key(int, "1", _pos, "must be positive"),
        "plot_script": Key(_bool, "true"),
    },
}

PRESETS = ("homogeneous", "periodic")


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return Path(str(resources.files("kpplab") / "presets" / f"{name}.ini"))


class RunConfig:
    """Resolved configuration: typed values for every schema key.

    ``raw`` keeps the textual values so the config can be written back
    exactly as it was resolved.
    """

    def __init__(self, values: Dict[str, Dict[str, Any]], raw: Dict[str, Dict[str, str]], source: str = ""):
        self.values = values
        self.raw = raw
        self.source = source

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.values[section]

    def get(self, path: str):
        sec, key = path.split(".", 1)
        return self.values[sec][key]

    def as_dict(self) -> Dict[str, Dict[str, Any]]:
        return {s: dict(v) for s, v in self.values.items()}

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for s, kv in self.raw.items():
            cp[s] = kv
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    # typed helpers -------------------------------------------------------
    def coefficient(self):
        from .periodic import PeriodicFunction

        m = self["medium"]
        return PeriodicFunction.from_coeffs(m["g_mean"], m["g_cos"], m["g_sin"], N=self["spectral"]["N"])

    def reaction(self):
        from .rd_solver import ReactionSpec

        r = self["reaction"]
        if r["kind"] == "logistic":
            return ReactionSpec.logistic()
        return ReactionSpec("custom-polynomial", tuple(r["coeffs"]))

    def initial_data(self):
        from .rd_solver import indicator

        i = self["initial"]
        a, b, hgt = i["a"], i["b"], i["height"]
        return lambda x: indicator(x, a, b, hgt)

    @property
    def is_homogeneous(self) -> bool:
        m = self["medium"]
        return not any(abs(v) > 0 for v in list(m["g_cos"]) + list(m["g_sin"]))


def _read(parser: configparser.ConfigParser, text: str, origin: str):
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None


def load_config(path=None, overrides: Iterable[str] = (), seed: Optional[int] = None,
                threads: Optional[int] = None) -> RunConfig:
    """Parse ``path`` (a file or a preset name), apply ``section.key=value`` overrides and validate."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    source = ""
    if path is not None:
        p = Path(path)
        if not p.exists() and str(path) in PRESETS:
            p = preset_path(str(path))
        if not p.exists():
            raise ConfigError(f"config file {path} not found")
        _read(parser, p.read_text(), str(p))
        source = str(p)
    raw: Dict[str, Dict[str, str]] = {s: {k: v.default for k, v in keys.items()} for s, keys in SCHEMA.items()}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{sec}: unknown section")
        for key, val in parser[sec].items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}: unknown key")
            raw[sec][key] = val
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, val = item.split("=", 1)
        lhs = lhs.strip()
        if "." not in lhs:
            raise ConfigError(f"{lhs}: override keys need the form section.key")
        sec, key = lhs.split(".", 1)
        if sec not in SCHEMA:
            raise ConfigError(f"{sec}: unknown section")
        if key not in SCHEMA[sec]:
            raise ConfigError(f"{sec}.{key}: unknown key")
        raw[sec][key] = val.strip()
    if seed is not None:
        raw["run"]["seed"] = str(seed)
    if threads is not None:
        raw["run"]["threads"] = str(threads)
    values: Dict[str, Dict[str, Any]] = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, spec in keys.items():
            text = raw[sec][key]
            try:
                v = spec.kind(text)
            except (TypeError, ValueError):
                raise ConfigError(f"{sec}.{key}: cannot parse {text!r} as {spec.kind.__name__}") from None
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f"{sec}.{key}: value must be finite")
            if spec.check is not None and not spec.check(v):
                raise ConfigError(f"{sec}.{key}: {text!r} is out of range ({spec.hint})")
            values[sec][key] = v
    _cross_checks(values)
    return RunConfig(values, raw, source)


def _cross_checks(v):
    init = v["initial"]
    if init["height"] <= 0 or init["b"] <= init["a"]:
        raise ConfigError("initial: u0 must be ≢ 0")
    if v["reaction"]["kind"] == "polynomial" and not v["reaction"]["coeffs"]:
        raise ConfigError("reaction.coeffs: polynomial reaction needs coefficients")
    for sec, lo, hi in (("delay", "t_min", "t_max"), ("linear", "t_min", "t_end"), ("shifted", "tau_min", "tau_end"),
                        ("theta_app", "tau_min", "tau_max"), ("front", "t_min", "t_end"), ("bbm", "x_min", "x_max")):
        if v[sec][hi] < v[sec][lo]:
            raise ConfigError(f"{sec}.{hi}: must not be smaller than {sec}.{lo}")
    if v["delay"]["t_max"] > v["solver"]["horizon"]:
        raise ConfigError("delay.t_max: must not exceed solver.horizon")
