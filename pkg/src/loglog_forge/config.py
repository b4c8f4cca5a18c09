"""Run configuration: an INI file with fixed sections and typed keys.
Unknown sections or keys are rejected; ``serialize`` and ``parse`` round-trip
exactly (floats are written with repr)."""
from __future__ import annotations

import configparser
import copy
import math
from pathlib import Path

from .errors import ConfigError
from .geometry import KINDS

_F, _I, _B, _S, _FL = "float", "int", "bool", "str", "float-list"

SCHEMA = {
    "metric": {"kind": (_S, "round-sphere")},
    "grid": {"r_lo": (_F, 0.5), "r_hi": (_F, 1.5), "n": (_I, 10000)},
    "profile": {"b": (_FL, [0.05, 0.1, 0.2]), "eta": (_F, 0.01)},
    "radiation": {"b": (_FL, [0.18, 0.22, 0.27, 0.33]), "dps": (_I, 34)},
    "evolution": {
        "lambda0": (_F, 0.02), "r0": (_F, 1.0), "gamma0": (_F, 0.0), "b0": (_F, 0.25),
        "nu": (_F, 0.0), "width": (_F, 1.0), "alpha_star": (_F, 0.01), "strict": (_B, False),
        "c_dt": (_F, 0.01), "t_max": (_F, 1.0), "lam_floor_cells": (_F, 4.0),
        "grad_ceiling": (_F, 1000.0), "max_steps": (_I, 10_000_000), "record_every": (_I, 10),
        "snapshot_every": (_I, 0), "tracking": (_B, True), "focusing": (_B, True),
    },
    "diagnostics": {"a_param": (_F, 0.3), "delta": (_F, 0.25), "slack_lo": (_F, 0.5),
                    "slack_hi": (_F, 2.0)},
    "output": {"dir": (_S, "out"), "snapshot_format": (_S, "binary"), "seed": (_I, 0)},
}


def _convert(kind, text, where):
    try:
        if kind == _F:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == _I:
            return int(text)
        if kind == _B:
            t = text.strip().lower()
            if t in ("true", "yes", "1", "on"):
                return True
            if t in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if kind == _FL:
            return [float(x) for x in text.replace(",", " ").split()]
        return text.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {kind}") from None


def _render(kind, value) -> str:
    if kind == _F:
        return repr(float(value))
    if kind == _B:
        return "true" if value else "false"
    if kind == _FL:
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = {s: {k: copy.copy(d) for k, (_, d) in keys.items()}
                       for s, keys in SCHEMA.items()}
        for s, keys in (values or {}).items():
            for k, v in keys.items():
                self.set(s, k, v)
        self.validate()

    def set(self, section, key, value):
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        self.values[section][key] = value

    def __getitem__(self, section):
        return self.values[section]

    def validate(self):
        v = self.values
        if v["metric"]["kind"] not in KINDS or v["metric"]["kind"] == "custom":
            raise ConfigError(f"metric kind must be one of {KINDS[:-1]}")
        g = v["grid"]
        if not 0 <= g["r_lo"] < g["r_hi"] or g["n"] < 16:
            raise ConfigError("grid needs 0 <= r_lo < r_hi and n >= 16")
        if v["output"]["snapshot_format"] not in ("binary", "csv"):
            raise ConfigError("snapshot_format must be binary or csv")
        e = v["evolution"]
        if e["lambda0"] <= 0 or e["c_dt"] <= 0 or e["record_every"] < 1:
            raise ConfigError("lambda0, c_dt and record_every must be positive")

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values


def parse(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[section][key] = _convert(SCHEMA[section][key][0], raw, f"[{section}] {key}")
    return RunConfig(values)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse(text)


def serialize(cfg: RunConfig) -> str:
    lines = []
    for s, keys in SCHEMA.items():
        lines.append(f"[{s}]")
        for k, (kind, _) in keys.items():
            lines.append(f"{k} = {_render(kind, cfg.values[s][k])}")
        lines.append("")
    return "\n".join(lines)
