"""Frozen artifact schemas (version 1) and their validation.

The renderer consumes only these files, produced by the ``genwave`` runner:

* ``energies.csv``      columns m,tau,eps,E,sobolev_slice,sobolev_volume
* ``sup_norms.csv``     columns quantity,order,eps,value
* ``verdicts.json``     keys schema_version, nets[], checks, pass
* ``conditions.json``   keys schema_version, quantities, det, pass
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
ENERGIES_COLUMNS = ["m", "tau", "eps", "E", "sobolev_slice", "sobolev_volume"]
SUP_NORMS_COLUMNS = ["quantity", "order", "eps", "value"]


class SchemaError(Exception):
    """Input artifact does not match the frozen schema (version 1)."""


def _expect_file(path: Path) -> Path:
    if not path.is_file():
        raise SchemaError(
            f"missing artifact {path.name} (schema version {SCHEMA_VERSION})")
    return path


def load_energies(directory: Path) -> dict[str, np.ndarray]:
    path = _expect_file(Path(directory) / "energies.csv")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ENERGIES_COLUMNS:
        raise SchemaError(
            f"energies.csv header must be {','.join(ENERGIES_COLUMNS)} "
            f"(schema version {SCHEMA_VERSION})")
    if len(rows) < 2:
        raise SchemaError(
            f"energies.csv has no data rows (schema version {SCHEMA_VERSION})")
    body = np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(ENERGIES_COLUMNS)}


def load_sup_norms(directory: Path) -> list[dict]:
    path = _expect_file(Path(directory) / "sup_norms.csv")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SUP_NORMS_COLUMNS:
        raise SchemaError(
            f"sup_norms.csv header must be {','.join(SUP_NORMS_COLUMNS)} "
            f"(schema version {SCHEMA_VERSION})")
    return [{"quantity": q, "order": int(o), "eps": float(e),
             "value": float(v)} for q, o, e, v in rows[1:]]


def _load_json(directory: Path, name: str) -> dict:
    path = _expect_file(Path(directory) / name)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{name} is not valid JSON: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"{name} has schema_version {doc.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}")
    return doc


def load_verdicts(directory: Path) -> dict:
    doc = _load_json(directory, "verdicts.json")
    if "nets" not in doc:
        raise SchemaError("verdicts.json lacks the nets list "
                          f"(schema version {SCHEMA_VERSION})")
    return doc


def load_conditions(directory: Path) -> dict:
    doc = _load_json(directory, "conditions.json")
    if "quantities" not in doc:
        raise SchemaError("conditions.json lacks the quantities map "
                          f"(schema version {SCHEMA_VERSION})")
    return doc
