"""Run configuration: an INI file with a fixed, versioned schema.

Every section and key is listed in ``SCHEMA``; unknown ones are rejected.
Rock fields and initial pressures accept either a number or
``file:<path>`` (one value per cell, whitespace separated, path relative
to the config file).
"""
from __future__ import annotations

import configparser
import copy
import hashlib
import io
import os
import re
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, msg, line=None, column=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where += f":{line}" + (f":{column}" if column is not None else "")
        super().__init__(f"{where}: {msg}" if where else msg)
        self.line, self.column = line, column


def _floats(text):
    return tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def _ints(text):
    return tuple(int(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _field(text):
    t = text.strip()
    if t.startswith("file:"):
        return t
    return float(t)


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _str(text):
    return text.strip()


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# section -> key -> (parser, default); default None means "not set"
SCHEMA = {
    "meta": {"schema": (int, SCHEMA_VERSION), "name": (_str, "case")},
    "grid": {"lengths": (_floats, (1.0,)), "cells": (_ints, (50,)),
             "boundary": (_str, "left=dirichlet, rest=noflux"), "gravity": (_floats, ()),
             "bc_pg": (float, 0.0), "bc_pl": (float, 0.0), "allow_closed": (_bool, False)},
    "rock": {"porosity": (_field, 0.3), "permeability": (_field, 1.0),
             "r_g": (_field, 0.0), "r_g_box": (_floats, ()),
             "r_w": (_field, 0.0), "r_w_box": (_floats, ())},
    "fluid": {"mu_l": (float, 1.0e-3), "mu_g": (float, 9.0e-6), "M_h": (float, 2.016e-3),
              "R": (float, 8.314), "T": (float, 303.0), "C1": (float, 52.51),
              "rho_l_w": (float, 1000.0), "rho_min": (float, 1.0e-5), "rho_max": (float, 1.0)},
    "closures": {"P_e": (float, 2.0e6), "pc_law": (_str, "linear"), "pc_lambda": (float, 2.0),
                 "n_l": (float, 2.0), "n_g": (float, 2.0), "d_star": (float, 3.0e-9)},
    "scheme": {"weighting": (_str, "upwind"), "eps": (float, 1.0e-4), "eta": (float, 1.0e-3),
               "tol": (float, 1.0e-9), "max_iter": (int, 30)},
    "time": {"T": (float, 1.0), "steps": (int, 50), "adaptive": (_bool, False),
             "h_min": (float, 0.0), "h_max": (float, 0.0)},
    "initial": {"p_g": (_field, 0.0), "p_l": (_field, 0.0)},
    "output": {"cadence": (int, 10), "checkpoint": (_bool, True)},
    "sweep": {"eta": (_floats, (1e-2, 1e-3, 1e-4)), "eps": (_floats, (1e-3, 1e-4, 1e-5)),
              "h": (_ints, (25, 50, 100))},
    "audit": {"waive": (_names, ()), "m0_floor": (float, 0.0)},
}


@dataclass
class RunConfig:
    """Parsed configuration: ``values[section][key]`` with every default filled."""

    values: dict
    base_dir: str = "."
    source: str = "<memory>"
    _lines: dict = field(default_factory=dict, repr=False, compare=False)

    def __getitem__(self, section):
        return self.values[section]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def replace(self, **overrides):
        """Copy with ``section__key=value`` overrides."""
        new = RunConfig(copy.deepcopy(self.values), self.base_dir, self.source)
        for k, v in overrides.items():
            sec, _, key = k.partition("__")
            if sec not in SCHEMA or key not in SCHEMA[sec]:
                raise ConfigError(f"unknown setting {sec}.{key}")
            new.values[sec][key] = v
        return new

    def serialize(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec in SCHEMA:
            cp[sec] = {k: _fmt(v) for k, v in self.values[sec].items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def hash(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]

    def where(self, section, key):
        return self._lines.get((section, key), (None, None))

    def load_field(self, value, n):
        """Scalar -> constant array; ``file:path`` -> per-cell array."""
        if isinstance(value, str):
            path = os.path.join(self.base_dir, value[5:])
            if not os.path.exists(path):
                raise ConfigError(f"field file not found: {path}")
            arr = np.loadtxt(path, dtype=float).ravel()
            if arr.size != n:
                raise ConfigError(f"{path}: expected {n} values, found {arr.size}")
            return arr
        return np.full(n, float(value))


def _line_index(text):
    """(section, key) -> (line, column of value) for error messages."""
    idx = {}
    sec = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            sec = m.group(1).strip()
            idx[(sec, None)] = (ln, 1)
            continue
        m = re.match(r"\s*([^=:]+?)\s*[=:]\s*", raw)
        if m and sec is not None:
            idx[(sec, m.group(1).strip())] = (ln, m.end() + 1)
    return idx


def parse_text(text, base_dir=".", source="<string>", validate_physics=True, waive=()):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.ParsingError as exc:
        ln = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line=ln, column=1, path=source) from exc
    except configparser.Error as exc:
        ln = getattr(exc, "lineno", None)
        raise ConfigError(exc.message.splitlines()[0], line=ln, column=1, path=source) from exc
    lines = _line_index(text)
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            ln, col = lines.get((sec, None), (None, None))
            raise ConfigError(f"unknown section [{sec}]", ln, col, source)
        for key, raw in cp[sec].items():
            ln, col = lines.get((sec, key), (None, None))
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", ln, col, source)
            conv = SCHEMA[sec][key][0]
            try:
                values[sec][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {exc}", ln, col, source) from exc
    cfg = RunConfig(values, base_dir, source, lines)
    validate(cfg, physics=validate_physics, waive=waive)
    return cfg


def parse_config(path, validate_physics=True, waive=()):
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_text(text, os.path.dirname(os.path.abspath(path)), path, validate_physics, waive)


def _fail(cfg, sec, key, msg):
    ln, col = cfg.where(sec, key)
    raise ConfigError(msg, ln, col, cfg.source)


def validate(cfg, physics=True, waive=()):
    """Structural checks always; cheap physical bounds unless ``physics`` is False.

    Physical failures name the violated hypothesis (H1..H8); the full
    dense-sampling audit runs when the case is built.
    """
    v = cfg.values
    if v["meta"]["schema"] != SCHEMA_VERSION:
        _fail(cfg, "meta", "schema", f"unsupported schema version {v['meta']['schema']}")
    g = v["grid"]
    if len(g["cells"]) not in (1, 2) or len(g["lengths"]) != len(g["cells"]):
        _fail(cfg, "grid", "cells", "grid must be 1D or 2D with matching lengths/cells")
    if any(n <= 0 for n in g["cells"]) or any(L <= 0 for L in g["lengths"]):
        _fail(cfg, "grid", "cells", "cells and lengths must be positive")
    if g["gravity"] and len(g["gravity"]) != len(g["cells"]):
        _fail(cfg, "grid", "gravity", "gravity vector has the wrong dimension")
    dim = len(g["cells"])
    for key in ("r_g_box", "r_w_box"):
        if v["rock"][key] and len(v["rock"][key]) != 2 * dim:
            _fail(cfg, "rock", key, f"{key} needs {2 * dim} numbers (min, max per axis)")
    if v["scheme"]["weighting"] not in ("upwind", "centered"):
        _fail(cfg, "scheme", "weighting", "weighting must be upwind or centered")
    if v["closures"]["pc_law"] not in ("linear", "exponential"):
        _fail(cfg, "closures", "pc_law", "pc_law must be linear or exponential")
    t = v["time"]
    if not t["T"] > 0:
        _fail(cfg, "time", "T", "final time must be positive")
    if t["steps"] <= 0:
        _fail(cfg, "time", "steps", "steps must be positive")
    if v["scheme"]["eps"] < 0 or v["scheme"]["eta"] < 0:
        _fail(cfg, "scheme", "eps", "eps and eta must be nonnegative")
    if not v["scheme"]["tol"] > 0:
        _fail(cfg, "scheme", "tol", "tol must be positive")
    if v["output"]["cadence"] <= 0:
        _fail(cfg, "output", "cadence", "cadence must be positive")
    for key in ("eta", "eps", "h"):
        if len(v["sweep"][key]) < 3:
            _fail(cfg, "sweep", key, "a sweep ladder needs at least 3 values")
    for name in v["audit"]["waive"]:
        if name not in {f"H{i}" for i in range(1, 9)}:
            _fail(cfg, "audit", "waive", f"unknown assumption {name!r}")
    for sec, key in (("rock", "porosity"), ("rock", "permeability"), ("rock", "r_g"),
                     ("rock", "r_w"), ("initial", "p_g"), ("initial", "p_l")):
        val = v[sec][key]
        if isinstance(val, str) and not os.path.exists(os.path.join(cfg.base_dir, val[5:])):
            _fail(cfg, sec, key, f"field file not found: {val[5:]}")
    if not physics:
        return cfg
    waived = set(v["audit"]["waive"]) | set(waive)
    f, c, r = v["fluid"], v["closures"], v["rock"]

    def check(name, ok, sec, key, msg):
        if not ok and name not in waived:
            _fail(cfg, sec, key, f"{name} violated: {msg}")

    por = r["porosity"]
    if not isinstance(por, str):
        check("H1", 0 < por <= 1, "rock", "porosity", f"porosity {por} outside (0, 1]")
    K = r["permeability"]
    if not isinstance(K, str):
        check("H2", K > 0, "rock", "permeability", f"permeability {K} must be positive")
    check("H3", f["mu_l"] > 0 and f["mu_g"] > 0 and c["n_l"] > 0 and c["n_g"] > 0,
          "fluid", "mu_l", "viscosities and relative-permeability exponents must be positive")
    check("H4", 0 < f["rho_min"] < f["rho_max"], "fluid", "rho_min", "need 0 < rho_min < rho_max")
    check("H5", c["P_e"] > 0, "closures", "P_e", "entry pressure must be positive")
    for key in ("r_g", "r_w"):
        val = r[key]
        if not isinstance(val, str):
            check("H6", val >= 0, "rock", key, f"source {key}={val} is negative")
    check("H7", c["d_star"] > 0, "closures", "d_star", "diffusion floor must be positive")
    for key in ("mu_l", "mu_g", "M_h", "R", "T", "C1", "rho_l_w"):
        if not f[key] > 0:
            _fail(cfg, "fluid", key, f"{key} must be positive")
    return cfg


def default_config():
    return parse_text("", source="<defaults>")
