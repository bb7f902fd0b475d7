"""Experiment configuration: JSON schema validation and object construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigurationError
from .harness import AttackSpec, Scenario, Strategy, preset
from .io import load_key
from .watermark import SecretKey

__all__ = ["ExperimentConfig", "SchemaError", "schema", "validate", "load_config",
           "build_scenario", "from_dict"]


class SchemaError(ConfigurationError):
    """The config document does not match the schema; names the field path."""


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("conoco").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


def validate(doc) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"config field {where}: {err.message}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings."""

    scenario: Scenario
    strategy: Strategy
    key: SecretKey | None = None
    experiment: str = "roc"
    n: int = 100
    master_seed: int = 0
    workers: int = 1
    ci_level: float = 0.95
    ci_replicates: int = 1000
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)


def _pair(v):
    return None if v is None else (float(v[0]), float(v[1]))


def build_scenario(doc: dict) -> Scenario:
    doc = dict(doc)
    base = preset(doc.pop("preset")) if "preset" in doc else Scenario()
    kw = {}
    for name in ("name", "task", "steps", "policy_rate", "plant_dt", "process_noise",
                 "saturation", "offset_handling"):
        if name in doc:
            kw[name] = doc[name]
    if "task_params" in doc:
        kw["task_params"] = dict(doc["task_params"])
    if "rate_bounds" in doc:
        kw["rate_bounds"] = _pair(doc["rate_bounds"])
    if "band" in doc:
        kw["band"] = _pair(doc["band"])
    if "scale" in doc:
        s = dict(doc["scale"])
        if "values" in s:
            s["values"] = tuple(s["values"])
        kw["scale"] = replace(base.scale, **s)
    if "sensor" in doc:
        s = dict(doc["sensor"])
        if s.get("projection") is not None:
            s["projection"] = _pair(s["projection"])
        if s.get("channels") is not None:
            s["channels"] = tuple(s["channels"])
        kw["sensor"] = replace(base.sensor, **s)
    if "detection" in doc:
        s = dict(doc["detection"])
        if "grid" in s:
            s["grid"] = tuple(s["grid"])
        kw["detection"] = replace(base.detection, **s)
    if "attack" in doc:
        a = doc["attack"]
        kw["attack"] = None if a is None else AttackSpec(
            a["kind"], float(a.get("strength", 0.0)), int(a.get("order", 4)), a.get("clip"),
            _pair(a.get("band_hz")))
    return replace(base, **kw)


def from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate ``doc`` against the schema and build the experiment objects."""
    validate(doc)
    key = None
    if "key" in doc:
        ref = doc["key"]
        if isinstance(ref, str):
            path = Path(ref)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            key = load_key(path)
        else:
            key = SecretKey(ref["seed"], _pair(ref["band_hz"]))
    sdoc = dict(doc["scenario"])
    if key is not None:
        if "band" in sdoc and _pair(sdoc["band"]) != key.band:
            raise ConfigurationError("scenario band and key band differ")
        sdoc["band"] = list(key.band)
    scenario = build_scenario(sdoc)
    st = doc["strategy"]
    strategy = Strategy(st["name"], dict(st.get("params", {})))
    h = doc.get("harness", {})
    sw = h.get("sweep")
    experiment = h.get("experiment", "roc")
    if experiment == "sweep" and sw is None:
        raise SchemaError("config field harness/sweep: required for the sweep experiment")
    return ExperimentConfig(
        scenario, strategy, key, experiment, int(h.get("n", 100)), int(h.get("master_seed", 0)),
        int(h.get("workers", 1)), float(h.get("ci_level", 0.95)),
        int(h.get("ci_replicates", 1000)), sw["axis"] if sw else None,
        tuple(tuple(v) if isinstance(v, list) else v for v in sw["values"]) if sw else (),
        doc.get("output_dir"), doc,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno} ({exc.msg})") from exc
    return from_dict(doc, path.parent)
