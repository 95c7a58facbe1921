"""Reading and writing result files"""
import json
import math
import re
from pathlib import Path
from typing import Any, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from hauslev.exceptions import DataFormatError, DomainError
from hauslev.logging_config import get_logger
from hauslev.models import GridSetPayload, RateFit, RatePoint, SelectionDiagnostics, SweepRow
from hauslev.services.grid import DyadicGrid, GridSet
from hauslev.services.synth import SampleSet

logger = get_logger(__name__)

PathLike = Union[str, Path]

SWEEP_COLUMNS = ("n", "rep", "method", "j_hat", "hausdorff", "symdiff", "raster_bias", "seconds")
_SAMPLE_HEADER = re.compile(r"^#\s*d=(\d+)\s+n=(\d+)\s+seed=(\d+)\s*$")


def format_float(value: float) -> str:
    """17 significant digits; round-trips every float64"""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def _json(value: Any) -> str:
    """Compact JSON with floats at 17 significant digits; non-finite floats become null"""
    if isinstance(value, float):
        return format_float(value) if math.isfinite(value) else "null"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_json(v) for v in value) + "]"
    return json.dumps(value)


def _write(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info(f"Wrote {path}")
    return path


def _read(path: PathLike) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise DataFormatError(f"cannot read file: {e.strerror or e}", path=str(path))


# Grid sets

def gridset_to_payload(gridset: GridSet) -> GridSetPayload:
    return GridSetPayload(d=gridset.d, j=gridset.j, cells=[list(cell) for cell in gridset])


def gridset_from_payload(payload: GridSetPayload) -> GridSet:
    grid = DyadicGrid(payload.d, payload.j)
    if any(len(cell) != payload.d for cell in payload.cells):
        raise DomainError(f"every cell needs {payload.d} coordinates")
    return GridSet(grid, np.array(payload.cells, dtype=np.int64).reshape(-1, payload.d))


def write_gridset(path: PathLike, gridset: GridSet) -> Path:
    """{"d": int, "j": int, "cells": [[...], ...]} with cells in lexicographic order"""
    return _write(path, gridset_to_payload(gridset).model_dump_json() + "\n")


def read_gridset(path: PathLike) -> GridSet:
    try:
        payload = GridSetPayload.model_validate_json(_read(path))
        return gridset_from_payload(payload)
    except ValidationError as e:
        raise DataFormatError(f"not a grid set: {e.errors()[0]['msg']}", path=str(path))
    except DomainError as e:
        raise DataFormatError(e.message, path=str(path))


# Samples

def write_samples(path: PathLike, samples: SampleSet) -> Path:
    lines = [f"# d={samples.d} n={samples.n} seed={samples.seed}"]
    lines.extend(",".join(format_float(float(v)) for v in row) for row in samples.points)
    return _write(path, "\n".join(lines) + "\n")


def read_samples(path: PathLike) -> SampleSet:
    """
    Parse a sample CSV: a `# d= n= seed=` header, then one row per point.

    Raises:
        DataFormatError: with the 1-based line number of the first bad line
    """
    lines = _read(path).splitlines()
    if not lines:
        raise DataFormatError("empty sample file", path=str(path), line=1)
    header = _SAMPLE_HEADER.match(lines[0].strip())
    if header is None:
        raise DataFormatError("expected header '# d=<int> n=<int> seed=<int>'", path=str(path), line=1)
    d, n, seed = (int(g) for g in header.groups())

    rows: List[List[float]] = []
    for number, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text:
            continue
        fields = text.split(",")
        if len(fields) != d:
            raise DataFormatError(f"expected {d} values, got {len(fields)}", path=str(path), line=number)
        try:
            row = [float(field) for field in fields]
        except ValueError:
            raise DataFormatError(f"not a number in {text!r}", path=str(path), line=number)
        if not all(0.0 <= v <= 1.0 for v in row):
            raise DataFormatError(f"coordinates must lie in [0, 1], got {text!r}", path=str(path), line=number)
        rows.append(row)

    if len(rows) != n:
        raise DataFormatError(f"header announces n={n} but {len(rows)} rows follow", path=str(path), line=1)
    points = np.array(rows, dtype=float).reshape(n, d)
    return SampleSet(d=d, n=n, points=points, seed=seed)


# Selection diagnostics

def diagnostics_to_json(diagnostics: SelectionDiagnostics) -> str:
    """Array of per-resolution records closed by {"chosen_j", "mode"}"""
    entries: List[dict] = []
    for record in diagnostics.records:
        entry = {
            "j": record.j,
            "j_prime": record.j_prime,
            "vernier": record.vernier,
            "penalty": record.penalty,
            "objective": record.objective,
        }
        if record.epsilon is not None:
            entry["epsilon"] = record.epsilon
        entries.append(entry)
    entries.append({"chosen_j": diagnostics.chosen_j, "mode": diagnostics.mode})
    return "[\n" + ",\n".join("  " + _json(entry) for entry in entries) + "\n]\n"


def write_diagnostics(path: PathLike, diagnostics: SelectionDiagnostics) -> Path:
    return _write(path, diagnostics_to_json(diagnostics))


# Sweeps

def write_sweep_csv(path: PathLike, rows: Sequence[SweepRow]) -> Path:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join([
            str(row.n), str(row.rep), row.method, str(row.j_hat),
            format_float(row.hausdorff), format_float(row.symdiff),
            format_float(row.raster_bias), format_float(row.seconds),
        ]))
    return _write(path, "\n".join(lines) + "\n")


def read_sweep_csv(path: PathLike) -> List[SweepRow]:
    lines = _read(path).splitlines()
    if not lines or tuple(lines[0].strip().split(",")) != SWEEP_COLUMNS:
        raise DataFormatError(f"expected header {','.join(SWEEP_COLUMNS)}", path=str(path), line=1)
    rows = []
    for number, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = raw.strip().split(",")
        if len(fields) != len(SWEEP_COLUMNS):
            raise DataFormatError(f"expected {len(SWEEP_COLUMNS)} fields", path=str(path), line=number)
        try:
            rows.append(SweepRow(**dict(zip(SWEEP_COLUMNS, fields))))
        except ValidationError as e:
            raise DataFormatError(f"bad row: {e.errors()[0]['msg']}", path=str(path), line=number)
    return rows


def rate_to_json(fit: RateFit) -> str:
    document = {
        "quantity": fit.quantity,
        "slope": fit.slope,
        "stderr": fit.slope_stderr,
        "intercept": fit.intercept,
        "target": fit.target_exponent,
        "points": [_point(p) for p in fit.points],
    }
    if fit.error is not None:
        document["error"] = fit.error
    return _json(document) + "\n"


def _point(point: RatePoint) -> dict:
    return {
        "n": point.n, "x": point.x, "y": point.y,
        "mean": point.mean, "median": point.median, "count": point.count,
    }


def write_rate(path: PathLike, fit: RateFit) -> Path:
    return _write(path, rate_to_json(fit))


def write_tsv(path: PathLike, x: Sequence[float], y: Sequence[float], header: Optional[Sequence[str]] = None) -> Path:
    """Two-column data file for external plotting"""
    lines = []
    if header:
        lines.append("# " + "\t".join(header))
    lines.extend(f"{format_float(float(a))}\t{format_float(float(b))}" for a, b in zip(x, y))
    return _write(path, "\n".join(lines) + "\n")
