"""
Export service - CSV, flat binary and JSON artifacts.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from pydantic import BaseModel

from sgbh.core.exceptions import GridMismatchError, ValidationError
from sgbh.schemas.fields import DerivativeField, FieldPath, IntegratedDerivative
from sgbh.schemas.grid import SpatialGrid, TimeGrid

logger = logging.getLogger(__name__)

# field-type tags of the binary layout
FIELD_TAGS = {"field": 1, "derivative": 2, "integrated-derivative": 3}
_INT = np.dtype("<i8")
_FLOAT = np.dtype("<f8")

ArrayField = Union[FieldPath, DerivativeField, IntegratedDerivative]


def _kind(field: ArrayField) -> str:
    if isinstance(field, DerivativeField):
        return "derivative"
    if isinstance(field, IntegratedDerivative):
        return "integrated-derivative"
    return "field"


def field_metadata(field: ArrayField) -> Dict[str, Any]:
    """Everything except the arrays, JSON-ready."""
    meta: Dict[str, Any] = {
        "kind": _kind(field),
        "N": field.tgrid.N,
        "T": field.tgrid.T,
        "m": field.sgrid.m,
    }
    if isinstance(field, FieldPath):
        meta.update({"scheme": field.scheme, "truncation": field.truncation, "seed": field.seed,
                     **field.metadata})
    elif isinstance(field, DerivativeField):
        meta.update({"r_index": field.r_index, "z_index": field.z_index, "source_time": field.source_time,
                     "method": field.method, "epsilon": field.epsilon})
    else:
        meta.update({"r_index": field.r_index, "a": field.a, "b": field.b, "z_indices": field.z_indices})
    return meta


def write_csv(field: ArrayField, path: Union[str, Path]) -> Path:
    """Long-format CSV with header t,x,u."""
    path = Path(path)
    t, x = field.tgrid.nodes, field.sgrid.nodes
    T, X = np.meshgrid(t, x, indexing="ij")
    rows = np.column_stack([T.ravel(), X.ravel(), field.values.ravel()])
    np.savetxt(path, rows, delimiter=",", header="t,x,u", comments="", fmt="%.17g", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def write_binary(field: ArrayField, path: Union[str, Path]) -> Path:
    """int64 header (tag, rows, m) then float64 values row-major."""
    path = Path(path)
    rows, m = field.values.shape
    with open(path, "wb") as fh:
        fh.write(np.array([FIELD_TAGS[_kind(field)], rows, m], dtype=_INT).tobytes())
        fh.write(np.ascontiguousarray(field.values, dtype=_FLOAT).tobytes())
    return path


def read_binary(path: Union[str, Path], T: float) -> FieldPath:
    """Read a tagged field written by write_binary back as a FieldPath."""
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise ValidationError("file too short for a field header", field="path")
    tag, rows, m = (int(v) for v in np.frombuffer(raw[:24], dtype=_INT))
    if tag not in FIELD_TAGS.values():
        raise ValidationError(f"unknown field tag {tag}", field="path")
    body = np.frombuffer(raw[24:], dtype=_FLOAT)
    if body.size != rows * m:
        raise GridMismatchError("field body", (rows * m,), (body.size,))
    values = body.reshape(rows, m).copy()
    kind = next(k for k, v in FIELD_TAGS.items() if v == tag)
    return FieldPath(values=values, u0=values[0].copy(), tgrid=TimeGrid(N=rows - 1, T=T),
                     sgrid=SpatialGrid(m=m), scheme=f"imported-{kind}")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def write_json(payload: Union[BaseModel, Dict[str, Any]], path: Union[str, Path]) -> Path:
    path = Path(path)
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    path.write_text(json.dumps(payload, indent=2, default=_jsonable), encoding="utf-8")
    return path


def write_field(field: ArrayField, directory: Union[str, Path], stem: str, formats=("csv",)) -> Dict[str, str]:
    """Write a field in the requested formats plus its JSON sidecar; returns format -> path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = {}
    if "csv" in formats:
        written["csv"] = str(write_csv(field, directory / f"{stem}.csv"))
    if "binary" in formats:
        written["binary"] = str(write_binary(field, directory / f"{stem}.bin"))
    written["meta"] = str(write_json(field_metadata(field), directory / f"{stem}.json"))
    return written


def write_table(path: Union[str, Path], header: str, columns) -> Path:
    """CSV of equal-length columns (density curves, error tables)."""
    path = Path(path)
    np.savetxt(path, np.column_stack(columns), delimiter=",", header=header, comments="", fmt="%.17g",
               encoding="utf-8")
    return path


class ExportService:
    """Service for writing run artifacts into one output directory."""

    def __init__(self, directory: Union[str, Path], formats=("csv",)):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.formats = tuple(formats)
        self.artifacts: Dict[str, str] = {}

    def field(self, field: ArrayField, stem: str) -> Dict[str, str]:
        written = write_field(field, self.directory, stem, self.formats)
        for fmt, path in written.items():
            self.artifacts[f"{stem}.{fmt}"] = path
        return written

    def json(self, payload: Union[BaseModel, Dict[str, Any]], name: str) -> Path:
        path = write_json(payload, self.directory / name)
        self.artifacts[name] = str(path)
        return path

    def table(self, name: str, header: str, columns) -> Path:
        path = write_table(self.directory / name, header, columns)
        self.artifacts[name] = str(path)
        logger.debug(f"Wrote table {name} ({len(columns)} columns)")
        return path
