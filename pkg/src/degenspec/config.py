"""Run configuration: JSON schema, defaults, line-aware validation and object builders."""
from __future__ import annotations

import copy
import json
import os
import re
from pathlib import Path

import jsonschema

from .potentials import Potential
from .symbols import KineticSymbol, build_momentum_grid, build_surface_quadrature, load_surface_quadrature

THREADS_ENV = "DEGENSPEC_THREADS"


class ConfigError(ValueError):
    """Invalid configuration; maps to exit status 2."""


_POS = {"type": "number", "exclusiveMinimum": 0}
_NUM = {"type": "number"}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["symbol", "potential"],
    "properties": {
        "symbol": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "n"],
            "properties": {
                "kind": {"enum": ["bcs", "roton", "custom-radial"]},
                "n": {"type": "integer", "minimum": 2, "maximum": 3},
                "r": {"type": "number", "minimum": 1},
                "mu": _POS,
                "p0": _POS,
                "mass": _POS,
                "delta": {"type": "number", "minimum": 0},
                "coeffs": {"type": "array", "items": _NUM, "minItems": 2},
                "tau": {"oneOf": [_POS, {"type": "null"}]},
                "s": {"oneOf": [_POS, {"type": "null"}]},
            },
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["gaussian", "gaussian-mix", "tabulated", "zero"]},
                "A": _NUM,
                "w": _POS,
                "amplitudes": {"type": "array", "items": _NUM, "minItems": 1},
                "widths": {"type": "array", "items": _POS, "minItems": 1},
                "table": {"type": "string"},
                "attractive": {"type": "boolean"},
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "surface_resolution": {"type": "integer", "minimum": 4},
                "surface_file": {"oneOf": [{"type": "string"}, {"type": "null"}]},
                "e_min": _POS,
                "shells": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
                "angular": {"type": "integer", "minimum": 4},
                "cutoff": _POS,
                "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "order": {"type": "integer", "minimum": 2},
                "outer_panels": {"type": "integer", "minimum": 1},
                "core_panels": {"type": "integer", "minimum": 1},
            },
        },
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda_list": {"oneOf": [
                    {"type": "array", "items": _POS, "minItems": 1},
                    {"type": "null"}]},
                "geometric": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "e_hi": _POS, "e_lo": _POS,
                        "min_points": {"type": "integer", "minimum": 2},
                        "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    },
                },
                "index": {"type": "integer", "minimum": 1},
                "eigen_count": {"type": "integer", "minimum": 1},
                "bisection_tol": _POS,
                "e_sequence": {"oneOf": [
                    {"type": "array", "items": _POS, "minItems": 3},
                    {"type": "null"}]},
                "cross_check": {"type": "boolean"},
                "certify": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "second_order": {"type": "boolean"},
                "reduced_operator": {"type": "boolean"},
                "eigenvectors": {"type": "boolean"},
            },
        },
        "surface": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "with_ws": {"oneOf": [{"type": "boolean"}, {"type": "null"}]},
                "eigenvectors": {"type": "integer", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"oneOf": [{"type": "string"}, {"type": "null"}]},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]},
                            "minItems": 1, "uniqueItems": True},
            },
        },
    },
}

DEFAULTS = {
    "symbol": {"r": 1.0, "mu": 1.0, "p0": 1.0, "mass": 0.5, "delta": 0.0, "tau": None, "s": None},
    "potential": {"A": 1.0, "w": 1.0, "attractive": True},
    "grids": {
        "surface_resolution": 64, "surface_file": None, "e_min": 1e-5, "shells": None,
        "angular": 32, "cutoff": 8.0, "ratio": 0.75, "order": 6, "outer_panels": 10,
        "core_panels": 4,
    },
    "solve": {
        "lambda_list": None,
        "geometric": {"e_hi": 0.1, "e_lo": 1e-4, "min_points": 5, "ratio": 2.0 ** -0.5},
        "index": 1, "eigen_count": 5, "bisection_tol": 1e-8, "e_sequence": None,
        "cross_check": True, "certify": True,
    },
    "sweep": {"second_order": True, "reduced_operator": True, "eigenvectors": True},
    "surface": {"with_ws": None, "eigenvectors": 8},
    "output": {"directory": None, "formats": ["csv", "json"]},
}


def thread_cap() -> int:
    """Worker cap from DEGENSPEC_THREADS (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return max(1, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


# -- locating JSON paths in the source text ----------------------------------

_TOKEN = re.compile(r'"(?:[^"\\]|\\.)*"|[{}\[\],:]|[^\s{}\[\],:"]+')


def json_line_map(text: str) -> dict:
    """Map each key/element path (tuple) to the 1-based line where it starts."""
    lines = {}
    stack = []  # entries: [kind, key_or_index, expecting_key]
    tokens = [(m.group(), m.start()) for m in _TOKEN.finditer(text)]

    def line_of(pos):
        return text.count("\n", 0, pos) + 1

    def path():
        return tuple(entry[1] for entry in stack if entry[1] is not None)

    def value_start(pos):
        if stack and stack[-1][0] == "arr":
            stack[-1][1] += 1
            lines.setdefault(path(), line_of(pos))

    for k, (tok, pos) in enumerate(tokens):
        if tok == "{":
            value_start(pos)
            stack.append(["obj", None, True])
        elif tok == "[":
            value_start(pos)
            stack.append(["arr", -1, False])
        elif tok in "}]":
            if stack:
                stack.pop()
        elif tok == ",":
            if stack and stack[-1][0] == "obj":
                stack[-1][2] = True
        elif tok == ":":
            continue
        elif stack and stack[-1][0] == "obj" and stack[-1][2] and k + 1 < len(tokens) \
                and tokens[k + 1][0] == ":":
            stack[-1][1] = json.loads(tok)
            stack[-1][2] = False
            lines[path()] = line_of(pos)
        else:
            value_start(pos)
    return lines


def _describe(error: jsonschema.ValidationError, lines: dict, source: str) -> str:
    if error.context:
        # oneOf alternatives: report the most specific sub-error
        error = max(error.context, key=lambda e: (len(e.absolute_path), e.validator != "type"))
    path = tuple(error.absolute_path)
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        parts = []
        for key in extra:
            line = lines.get(path + (key,), lines.get(path, 1))
            where = "/".join(str(p) for p in path + (key,))
            parts.append(f"{source}:{line}: unknown key '{where}'")
        return "\n".join(parts)
    line = lines.get(path, 1)
    where = "/".join(str(p) for p in path) or "<root>"
    return f"{source}:{line}: {where}: {error.message}"


def merge_defaults(cfg: dict) -> dict:
    out = copy.deepcopy(DEFAULTS)
    for block, values in cfg.items():
        if isinstance(values, dict) and isinstance(out.get(block), dict):
            for key, val in values.items():
                if isinstance(val, dict) and isinstance(out[block].get(key), dict):
                    out[block][key] = {**out[block][key], **val}
                else:
                    out[block][key] = val
        else:
            out[block] = values
    return out


def parse_config(text: str, source: str = "<config>") -> dict:
    """Validate JSON text against the schema and return it with defaults filled in."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        lines = json_line_map(text)
        raise ConfigError("\n".join(_describe(err, lines, source) for err in errors))
    cfg = merge_defaults(raw)
    _semantic_checks(cfg, json_line_map(text), source)
    return cfg


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config(text, str(path))
    cfg["_base_dir"] = str(path.resolve().parent)
    return cfg


def _semantic_checks(cfg: dict, lines: dict, source: str) -> None:
    sym, pot = cfg["symbol"], cfg["potential"]

    def fail(path, msg):
        line = lines.get(path, lines.get(path[:1], 1))
        raise ConfigError(f"{source}:{line}: {'/'.join(path)}: {msg}")

    if sym["kind"] == "custom-radial" and "coeffs" not in sym:
        fail(("symbol",), "custom-radial symbol needs 'coeffs'")
    if pot["kind"] == "gaussian-mix":
        if "amplitudes" not in pot or "widths" not in pot:
            fail(("potential",), "gaussian-mix needs 'amplitudes' and 'widths'")
        if len(pot["amplitudes"]) != len(pot["widths"]):
            fail(("potential", "widths"), "must match the length of 'amplitudes'")
    if pot["kind"] == "tabulated" and "table" not in pot:
        fail(("potential",), "tabulated potential needs 'table'")
    seq = cfg["solve"]["lambda_list"]
    if seq is not None and any(b >= a for a, b in zip(seq, seq[1:])):
        fail(("solve", "lambda_list"), "couplings must be strictly decreasing")
    geo = cfg["solve"]["geometric"]
    if geo["e_lo"] >= geo["e_hi"]:
        fail(("solve", "geometric"), "e_lo must be below e_hi")
    eseq = cfg["solve"]["e_sequence"]
    if eseq is not None and any(b >= a for a, b in zip(eseq, eseq[1:])):
        fail(("solve", "e_sequence"), "must be strictly decreasing")
    if cfg["surface"]["with_ws"] and sym["r"] >= 2:
        fail(("surface", "with_ws"), "the second-order operator is undefined for r >= 2")


# -- builders ----------------------------------------------------------------

def build_symbol(cfg: dict) -> KineticSymbol:
    s = cfg["symbol"]
    try:
        return KineticSymbol(n=s["n"], kind=s["kind"], r=s["r"], mu=s["mu"], p0=s["p0"],
                             mass=s["mass"], delta=s["delta"], coeffs=tuple(s.get("coeffs", ())),
                             tau=s["tau"], s=s["s"])
    except ValueError as exc:
        raise ConfigError(f"symbol: {exc}") from None


def build_potential(cfg: dict) -> Potential:
    p, n = cfg["potential"], cfg["symbol"]["n"]
    try:
        if p["kind"] == "zero":
            return Potential.zero(n)
        if p["kind"] == "gaussian":
            return Potential.gaussian(n, p["A"], p["w"])
        if p["kind"] == "gaussian-mix":
            return Potential(n, "gaussian-mix", tuple(p["amplitudes"]), tuple(p["widths"]))
        table = Path(p["table"])
        if not table.is_absolute():
            table = Path(cfg.get("_base_dir", ".")) / table
        return Potential.from_table(n, table, attractive=p["attractive"])
    except (ValueError, OSError) as exc:
        raise ConfigError(f"potential: {exc}") from None


def build_surface(cfg: dict, sym: KineticSymbol):
    g = cfg["grids"]
    try:
        if g["surface_file"]:
            path = Path(g["surface_file"])
            if not path.is_absolute():
                path = Path(cfg.get("_base_dir", ".")) / path
            return load_surface_quadrature(path)
        return build_surface_quadrature(sym, 0.0, g["surface_resolution"])
    except (ValueError, OSError) as exc:
        raise ConfigError(f"grids: {exc}") from None


def build_grid(cfg: dict, sym: KineticSymbol):
    g = cfg["grids"]
    try:
        return build_momentum_grid(sym, g["e_min"], cutoff=g["cutoff"], shells=g["shells"],
                                   angular=g["angular"], ratio=g["ratio"], order=g["order"],
                                   outer_panels=g["outer_panels"], core_panels=g["core_panels"])
    except ValueError as exc:
        raise ConfigError(f"grids: {exc}") from None


def resolved_echo(cfg: dict, sym: KineticSymbol, grid=None) -> dict:
    """Valid config with every default resolved to the value actually used."""
    from .surface_ops import default_e_sequence
    out = {k: copy.deepcopy(v) for k, v in cfg.items() if not k.startswith("_")}
    out["symbol"].update({"tau": sym.tau, "s": sym.s})
    if grid is not None and out["grids"]["shells"] is None:
        out["grids"]["shells"] = len(grid.levels) - 1
    if out["solve"]["e_sequence"] is None:
        out["solve"]["e_sequence"] = list(default_e_sequence())
    if out["surface"]["with_ws"] is None:
        out["surface"]["with_ws"] = sym.r < 2
    return out


def derived_constants(sym: KineticSymbol) -> dict:
    return {"c1": sym.c1, "c2": sym.c2, "fermi_radius": sym.fermi_radius}
