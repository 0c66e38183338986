"""Model files and the JSON schemas shipped with the package."""

from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import SchemaError, ValidationError
from .measure import AtomicMeasure, WishartModel, validate_gamma

SCHEMA_VERSION = "v1"
NORMALIZE_TOL = 1e-9


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """Schema ``name`` (``model``, ``support``, ``edges``, ``spike``, ``table`` or ``simulation``)."""
    text = resources.files("wishart_edges").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate_document(doc, name: str) -> None:
    validator = jsonschema.Draft202012Validator(load_schema(name))
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        path = "/" + "/".join(str(p) for p in error.absolute_path)
        raise SchemaError(f"{name} schema violation at {path}: {error.message}")


def model_from_document(doc: dict) -> tuple[AtomicMeasure | WishartModel, float]:
    validate_document(doc, "model")
    if "atoms" in doc:
        lams = [float(a["lambda"]) for a in doc["atoms"]]
        wts = [float(a["weight"]) for a in doc["atoms"]]
        total = math.fsum(wts)
        if abs(total - 1.0) > NORMALIZE_TOL:
            raise ValidationError(f"atom weights must sum to 1, got {total!r}")
        measure = AtomicMeasure.from_arrays(lams, [w / total for w in wts])
        return measure, validate_gamma(doc["gamma"])
    lams: list[float] = []
    for item in doc["lambdas"]:
        if isinstance(item, dict):
            lams.extend([float(item["value"])] * int(item["multiplicity"]))
        else:
            lams.append(float(item))
    if len(lams) != doc["n"]:
        raise ValidationError(f"n = {doc['n']} but the lambda list expands to {len(lams)} values")
    model = WishartModel(doc["n"], doc["N"], tuple(lams))
    return model, model.gamma


def parse_model(path: str | Path) -> tuple[AtomicMeasure | WishartModel, float]:
    """Read a limit measure or a finite model from a JSON file.

    Returns the parsed object and its shape ratio (``n/N`` for a finite model).
    """
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"model file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return model_from_document(doc)


def measure_of(obj: AtomicMeasure | WishartModel) -> AtomicMeasure:
    return obj.measure() if isinstance(obj, WishartModel) else obj
