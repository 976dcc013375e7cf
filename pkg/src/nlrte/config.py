"""Line-oriented configuration: `section.key = value` with `#` comments.

The grammar is deliberately tiny so manifests can embed a bit-stable
serialization: scalars (int, float, bool, bare string) and flat comma
lists of numbers.  Keys are checked against a fixed schema; unknown keys
are rejected with the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None):
        location = ""
        if line is not None:
            location = f"line {line}"
            if column is not None:
                location += f", column {column}"
            location = f" ({location})"
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class _Key:
    kind: str  # int | float | bool | str | list
    default: object = None
    choices: tuple | None = None
    positive: bool = False


SCHEMA = {
    "grid.dimension": _Key("int", 1, choices=(1, 2)),
    "grid.extent": _Key("list", [1.0]),
    "grid.cells": _Key("list", [64]),
    "evolution.horizon": _Key("float", 0.5, positive=True),
    "evolution.steps": _Key("int", 200, positive=True),
    "angular.count": _Key("int", 8, positive=True),
    "phase.family": _Key("str", "isotropic", choices=("isotropic", "linear")),
    "phase.g": _Key("float", 0.0),
    "transport.sigma_s": _Key("float", 1.0),
    "transport.epsilon": _Key("float", 1.0, positive=True),
    "absorption.order": _Key("int", 1),
    "absorption.c0": _Key("float", 0.1),
    "absorption.c1": _Key("float", 0.2),
    "absorption.c2": _Key("float", 0.0),
    "absorption.c3": _Key("float", 0.0),
    "absorption.c4": _Key("float", 0.0),
    "absorption.c0_file": _Key("str", None),
    "absorption.c1_file": _Key("str", None),
    "absorption.c2_file": _Key("str", None),
    "absorption.c3_file": _Key("str", None),
    "absorption.c4_file": _Key("str", None),
    "initial.kind": _Key("str", "sine-squared",
                         choices=("constant", "sine", "sine-squared",
                                  "gaussian")),
    "initial.amplitude": _Key("float", 1.0),
    "initial.width": _Key("float", 0.25, positive=True),
    "initial.floor": _Key("float", 0.0),
    "solver.tol_picard": _Key("float", 1e-10, positive=True),
    "solver.max_picard": _Key("int", 200, positive=True),
    "solver.si_tol": _Key("float", 1e-12, positive=True),
    "solver.si_max": _Key("int", 10_000, positive=True),
    "solver.nonlinearity": _Key("str", "picard", choices=("picard", "lagged")),
    "solver.driver": _Key("str", "march", choices=("march", "fixed-point")),
    "study.epsilons": _Key("list", [0.4, 0.2, 0.1, 0.05]),
    "study.degenerate": _Key("bool", False),
    "study.interior_margin": _Key("float", 0.3),
    "study.boundary_cells": _Key("int", 2),
    "study.max_refinements": _Key("int", 3),
    "conditions.f_sup": _Key("float", None),
    "inverse.sources": _Key("list", [0.5, 1.0]),
    "inverse.noise": _Key("float", 0.0),
    "inverse.seed": _Key("int", 0),
    "inverse.tol_m": _Key("float", 1e-8, positive=True),
    "inverse.max_iter": _Key("int", 100, positive=True),
    "inverse.smooth": _Key("float", None),
    "inverse.cond_max": _Key("float", 1e8, positive=True),
    "inequality.trials": _Key("int", 10_000, positive=True),
    "inequality.seed": _Key("int", 42),
    "inequality.g": _Key("float", 0.3),
    "wigner.epsilon": _Key("float", 0.05, positive=True),
    "wigner.sigma_v": _Key("float", 1.0),
    "wigner.correlation": _Key("float", 1.0, positive=True),
    "wigner.decorrelation": _Key("float", None),
    "wigner.absorption": _Key("float", 0.3),
    "wigner.ensemble": _Key("int", 1024, positive=True),
    "wigner.seed": _Key("int", 2718),
    "wigner.length": _Key("float", 32.0, positive=True),
    "wigner.points": _Key("int", 2048, positive=True),
    "wigner.dz": _Key("float", 0.0125, positive=True),
    "wigner.beam_width": _Key("float", 3.0, positive=True),
    "wigner.targets": _Key("list", [0.25, 0.5, 0.75, 1.0]),
    "wigner.threshold": _Key("float", 0.15, positive=True),
    "output.prefix": _Key("str", "run"),
}


class Config:
    """Validated view of a parsed configuration file."""

    def __init__(self, values: dict | None = None):
        self._values = dict(values or {})
        for key in self._values:
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")

    def get(self, key: str):
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        if key in self._values:
            return self._values[key]
        return SCHEMA[key].default

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        self._values[key] = _validate(key, value)

    def as_dict(self) -> dict:
        """All keys at their effective values (set or default)."""
        return {key: self.get(key) for key in SCHEMA}

    def explicit(self) -> dict:
        return dict(self._values)

    def __eq__(self, other) -> bool:
        return isinstance(other, Config) and self._values == other._values

    def dumps(self) -> str:
        lines = []
        for key in sorted(self._values):
            lines.append(f"{key} = {_format_value(self._values[key])}")
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.dumps())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "%.17g" % value
    if isinstance(value, list):
        return ",".join("%.17g" % v for v in value)
    return str(value)


def _parse_scalar(text: str):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _validate(key: str, value, line: int | None = None):
    spec = SCHEMA[key]
    kind = spec.kind
    if kind == "list":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [float(value)]
        if not isinstance(value, list) or \
                not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{key} expects a comma list of numbers", line)
        value = [float(v) for v in value]
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} expects an integer", line)
    elif kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number", line)
        value = float(value)
        if not np.isfinite(value):
            raise ConfigError(f"{key} must be finite", line)
    elif kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true or false", line)
    elif kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key} expects a bare string", line)
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(f"{key} must be one of {spec.choices}", line)
    if spec.positive and not (isinstance(value, str) or value > 0):
        raise ConfigError(f"{key} must be positive", line)
    return value


def loads(text: str) -> Config:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("expected `section.key = value`", lineno,
                              raw.find(line) + 1)
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, raw.find(key) + 1)
        if not rhs:
            raise ConfigError(f"missing value for {key}", lineno,
                              raw.find("=") + 2)
        if "," in rhs:
            parts = [p.strip() for p in rhs.split(",")]
            parsed = [_parse_scalar(p) for p in parts]
            if not all(isinstance(p, (int, float)) and not isinstance(p, bool)
                       for p in parsed):
                raise ConfigError(f"{key}: lists may contain numbers only",
                                  lineno, raw.find(rhs) + 1)
            value = [float(p) for p in parsed]
        else:
            value = _parse_scalar(rhs)
        values[key] = _validate(key, value, lineno)
    return Config(values)


def load(path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
