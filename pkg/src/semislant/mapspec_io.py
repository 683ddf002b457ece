"""JSON mapspec files.

Schema (all keys except ``components`` and ``dim_source`` optional)::

    {
      "name": "my_map",
      "dim_source": 4,
      "dim_target": 2,
      "components": ["sqrt(x1^2 + x2^2)", "x3"],
      "metric_source": "euclidean" | [["1", "0", ...], ...],
      "metric_target": "euclidean" | [[...]],
      "J": "canonical" | [[...]],
      "params": {"alpha": 0.5},
      "box": {"min": [...], "max": [...]},
      "exclude": "0.01 - x1^2 - x2^2",
      "description": "free text"
    }

The excluded region is where ``exclude`` evaluates to a value >= 0.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

from . import exprlang as el
from .geometry import AlmostComplexField, GeometryError, MetricField
from .mapcore import MapSpec, SpecError

KEYS = {"name", "dim_source", "dim_target", "components", "metric_source", "metric_target", "J",
        "params", "box", "exclude", "description"}


def from_dict(data: Mapping, params: Mapping[str, float] | None = None) -> MapSpec:
    """Build and validate a spec; ``params`` override the file's parameter values."""
    if not isinstance(data, Mapping):
        raise SpecError("mapspec must be a JSON object")
    unknown = set(data) - KEYS
    if unknown:
        raise SpecError(f"unknown mapspec keys: {sorted(unknown)}")
    for key in ("dim_source", "components"):
        if key not in data:
            raise SpecError(f"mapspec is missing {key!r}")
    comps = data["components"]
    if not isinstance(comps, list) or not all(isinstance(c, (str, int, float)) for c in comps):
        raise SpecError("components must be a list of expression strings")
    m = int(data["dim_source"])
    n = int(data.get("dim_target", len(comps)))
    box = data.get("box") or {}
    lo = box.get("min", [-1.0] * m)
    hi = box.get("max", [1.0] * m)
    merged = {**{k: float(v) for k, v in (data.get("params") or {}).items()}, **dict(params or {})}
    try:
        spec = MapSpec(
            name=str(data.get("name", "unnamed")),
            dim_source=m,
            dim_target=n,
            components=tuple(str(c) for c in comps),
            metric_source=MetricField.from_json(data.get("metric_source", "euclidean"), m),
            metric_target=MetricField.from_json(data.get("metric_target", "euclidean"), n),
            J=AlmostComplexField.from_json(data.get("J", "canonical"), m),
            params=merged,
            box_lo=tuple(lo),
            box_hi=tuple(hi),
            exclude=data.get("exclude"),
            description=str(data.get("description", "")),
        )
    except (GeometryError, el.ExpressionError) as exc:
        raise SpecError(str(exc)) from None
    return spec


def load(path, params: Mapping[str, float] | None = None) -> MapSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data, params)


def to_dict(spec: MapSpec) -> dict:
    d = spec.to_json()
    if d["exclude"] is None:
        del d["exclude"]
    if spec.description:
        d["description"] = spec.description
    return d


def save(spec: MapSpec, path) -> None:
    Path(path).write_text(json.dumps(to_dict(spec), indent=2) + "\n")
