"""Run configuration: schema validation, default filling, canonical serialization and input loading.

A configuration is plain JSON.  ``load_config`` validates it against the
packaged schema and returns a :class:`RunConfig` with every default filled;
``save_config`` writes the canonical form (sorted keys, two-space indent,
trailing newline), so saving a loaded canonical file reproduces it byte for
byte.  The SHA-256 of the canonical bytes identifies a run.
"""
from __future__ import annotations

import copy
import hashlib
import inspect
import json
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match
from referencing import Registry, Resource

from .boundary_region import BoundaryRegion
from .errors import SchemaError
from .framed_curve import SampledFramedCurve
from .geometry_core import SampledCurve
from .presets import CATALOG, Preset

CONFIG_VERSION = "1.0"
SPACING_RTOL = 1e-6
SCHEMA_FILES = ("config.schema.json", "sampled_curve.schema.json", "report.schema.json")


@lru_cache(maxsize=None)
def schema(name: str) -> dict:
    """Packaged JSON schema by file name."""
    text = resources.files("unroll").joinpath("schemas").joinpath(name).read_text(encoding="utf-8")
    return json.loads(text)


@lru_cache(maxsize=None)
def _registry() -> Registry:
    pairs = [(schema(n)["$id"], Resource.from_contents(schema(n))) for n in SCHEMA_FILES]
    return Registry().with_resources(pairs)


def validator(name: str) -> Draft202012Validator:
    return Draft202012Validator(schema(name), registry=_registry())


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path) if path else "/"


def validate_instance(instance, name: str, prefix: str = "") -> None:
    """Raise :class:`SchemaError` at the most relevant violation, if any."""
    err = best_match(validator(name).iter_errors(instance))
    if err is not None:
        where = _pointer(err.absolute_path)
        raise SchemaError(err.message, prefix + (where if where != "/" or not prefix else ""))


def _fill(node_schema: dict, instance):
    """Insert schema defaults for missing keys, descending into nested objects."""
    if not isinstance(instance, dict):
        return instance
    for key, sub in node_schema.get("properties", {}).items():
        if key not in instance:
            if "default" in sub:
                instance[key] = copy.deepcopy(sub["default"])
            elif _has_defaults(sub):
                instance[key] = {}
        if key in instance and isinstance(sub, dict):
            _fill(sub, instance[key])
    return instance


def _has_defaults(node_schema: dict) -> bool:
    if node_schema.get("type") != "object" or "required" in node_schema:
        return False
    return any("default" in sub or _has_defaults(sub) for sub in node_schema.get("properties", {}).values())


def preset_defaults(name: str) -> dict:
    sig = inspect.signature(CATALOG[name])
    out = {}
    for k, p in sig.parameters.items():
        v = p.default
        out[k] = float(v) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool) else v
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class RunConfig:
    """Validated, default-filled configuration; ``data`` is the canonical JSON object."""

    data: dict
    base_dir: str = "."

    @property
    def input(self) -> dict:
        return self.data["input"]

    @property
    def preset_name(self) -> str | None:
        p = self.input.get("preset")
        return p["name"] if p else None

    @property
    def n_alpha(self) -> int:
        return self.data["n_alpha"]

    @property
    def tolerances(self) -> dict:
        return self.data["tolerances"]

    @property
    def quadrature(self) -> dict:
        return self.data["quadrature"]

    @property
    def options(self) -> dict:
        return self.data["options"]

    @property
    def outputs(self) -> dict:
        return self.data["outputs"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def canonical(self) -> str:
        return canonical_json(self.data)

    @property
    def sha256(self) -> str:
        return sha256_text(self.canonical())

    def stem(self) -> str:
        return self.preset_name or "sampled"


def config_from_dict(raw, base_dir: str = ".") -> RunConfig:
    """Validate ``raw`` and fill defaults (preset parameters included)."""
    if not isinstance(raw, dict):
        raise SchemaError("configuration must be a JSON object", "/")
    data = copy.deepcopy(raw)
    validate_instance(data, "config.schema.json")
    _fill(schema("config.schema.json"), data)
    preset = data["input"].get("preset")
    if preset is not None:
        params = preset_defaults(preset["name"])
        params.update(preset.get("params", {}))
        preset["params"] = params
    sampled = data["input"].get("sampled")
    if sampled is not None and "data" in sampled:
        _fill(schema("sampled_curve.schema.json"), sampled["data"])
        check_sampled(sampled["data"], "/input/sampled/data")
    validate_instance(data, "config.schema.json")
    return RunConfig(data, base_dir)


def load_config(path) -> RunConfig:
    """Validated, default-filled configuration read from ``path``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", "/") from None
    return config_from_dict(raw, os.path.dirname(os.path.abspath(path)))


def save_config(cfg: RunConfig, path) -> str:
    text = cfg.canonical()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


def preset_config(name: str, params: dict | None = None, **overrides) -> RunConfig:
    """Configuration for a catalog preset, with top-level keys overridden by keyword."""
    raw = {"input": {"preset": {"name": name, "params": dict(params or {})}}}
    raw.update(overrides)
    return config_from_dict(raw)


# --------------------------------------------------------------------------
# sampled curves
# --------------------------------------------------------------------------

def check_sampled(data: dict, prefix: str = "") -> None:
    """Checks the schema cannot express, such as matching array lengths and uniform spacing."""
    validate_instance(data, "sampled_curve.schema.json", prefix)
    n = len(data["alpha"])
    for key in ("c", "d", "n"):
        if len(data[key]) != n:
            raise SchemaError(f"array length {len(data[key])} differs from alpha length {n}", f"{prefix}/{key}")
    alpha = np.asarray(data["alpha"], dtype=float)
    steps = np.diff(alpha)
    h = float(np.mean(steps))
    if not h > 0:
        raise SchemaError("alpha must be increasing", f"{prefix}/alpha")
    worst = int(np.argmax(np.abs(steps - h)))
    if abs(steps[worst] - h) > SPACING_RTOL * h:
        raise SchemaError(f"alpha spacing is not uniform within {SPACING_RTOL:g} relative", f"{prefix}/alpha/{worst + 1}")
    length = data.get("length", n * h)
    if abs(length - n * h) > SPACING_RTOL * length:
        raise SchemaError("length must equal N times the spacing", f"{prefix}/length")
    for i, a in enumerate(data.get("corners", [])):
        if not (alpha[0] <= a < alpha[0] + length):
            raise SchemaError("corner outside the parameter range", f"{prefix}/corners/{i}")
    zero = np.flatnonzero(np.linalg.norm(np.asarray(data["n"], dtype=float), axis=1) == 0)
    if zero.size:
        raise SchemaError("normals must be nonzero", f"{prefix}/n/{int(zero[0])}")


def read_sampled(path) -> tuple[dict, str]:
    """Load and check a sampled-curve file; returns the data and the SHA-256 of the file bytes."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"invalid sampled-curve JSON: {exc}", "/") from None
    _fill(schema("sampled_curve.schema.json"), data)
    check_sampled(data)
    return data, hashlib.sha256(raw).hexdigest()


def sampled_preset(data: dict, name: str = "sampled") -> Preset:
    alpha = np.asarray(data["alpha"], dtype=float)
    n = len(alpha)
    h = float(np.mean(np.diff(alpha)))
    length = float(data.get("length", n * h))
    corners = np.asarray(data.get("corners", []), dtype=float) - alpha[0]
    region = BoundaryRegion(SampledCurve(np.asarray(data["c"], dtype=float), length, corners))
    fc = SampledFramedCurve(np.asarray(data["d"], dtype=float), np.asarray(data["n"], dtype=float), length, corners)
    return Preset(name, {"samples": n, "length": length}, region, fc)


def sample_preset(preset: Preset, n: int) -> dict:
    """Uniform samples of an analytic preset in the sampled-curve format."""
    length = preset.region.length
    alpha = np.arange(n) * (length / n)
    jet = preset.framed.jet(alpha, 1)
    return {"alpha": alpha.tolist(), "c": preset.region.boundary.point(alpha, 1).tolist(),
            "d": jet.position.tolist(), "n": jet.normal.tolist(),
            "corners": [float(a) for a in preset.region.corners], "length": float(length)}


def resolve_input(cfg: RunConfig) -> tuple[Preset, str]:
    """(preset, input hash) for a configuration.

    The hash covers the sampled file bytes for file input and the canonical
    input block otherwise.
    """
    src = cfg.input
    if "preset" in src:
        p = src["preset"]
        return CATALOG[p["name"]](**p["params"]), sha256_text(canonical_json(src))
    sampled = src["sampled"]
    if "data" in sampled:
        return sampled_preset(sampled["data"]), sha256_text(canonical_json(sampled["data"]))
    path = sampled["path"]
    if not os.path.isabs(path):
        path = os.path.join(cfg.base_dir, path)
    if not os.path.exists(path):
        raise SchemaError(f"sampled-curve file not found: {path}", "/input/sampled/path")
    data, digest = read_sampled(path)
    return sampled_preset(data), digest
