import csv
import io
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Type, TypeVar

import numpy as np
import orjson
from numpy.typing import NDArray
from pydantic import BaseModel, ValidationError

from app.core.config import AnalysisConfig, settings
from app.core.exceptions import ElastishapeException, IncompleteResult, INPUT_ERROR, ManifestError
from app.models.contour import Contour
from app.models.ensemble import ShapeEnsemble
from app.models.registration import DistanceMatrix
from app.schemas.manifest import Manifest
from app.services import contour as contour_service

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY
DIGEST_PREFIX = "# config_digest="

Schema = TypeVar("Schema", bound=BaseModel)


def fmt(value: Any) -> str:
    """Stable text for table cells."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "%.10g" % float(value)
    return str(value)


def load_manifest(path: Path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(None, f"manifest file '{path}' not found")
    try:
        return Manifest.model_validate(orjson.loads(path.read_bytes()))
    except (orjson.JSONDecodeError, ValidationError) as e:
        raise ManifestError(None, f"cannot parse '{path}': {e}") from e


def read_points(path: Path, shape_id: Optional[str] = None) -> NDArray:
    """Reads x,y rows; a non-numeric first row is treated as a header."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(shape_id, f"contour file '{path}' not found")
    rows = []
    header_seen = False
    with path.open(newline="", encoding="utf-8") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if rows or header_seen:
                    raise ManifestError(shape_id, f"bad row {line_no} in '{path}': {row}")
                header_seen = True
    return np.array(rows, dtype=float).reshape(-1, 2)


def load_contour(points: NDArray, shape_id: str, config: AnalysisConfig) -> Contour:
    normalized = contour_service.validate_and_normalize(points, shape_id=shape_id)
    return contour_service.resample_arclength(normalized, config.m)


def load_ensemble(manifest_path: Path, config: Optional[AnalysisConfig] = None) -> ShapeEnsemble:
    """Reads every manifest entry into an SRVF ensemble; all failing ids are reported together."""
    config = config or settings
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    if not manifest.shapes:
        raise ManifestError(None, "manifest lists no shapes")
    logger.info(f"STEP 1: Loading {len(manifest.shapes)} contours from '{manifest_path}' (m={config.m})")

    shapes, failed = [], []
    for entry in manifest.shapes:
        try:
            points = read_points(manifest_path.parent / entry.path, entry.id)
            shapes.append(contour_service.to_srvf(load_contour(points, entry.id, config), config.m, config))
        except ElastishapeException as e:
            logger.error(f"Shape '{entry.id}': {e.detail}")
            failed.append((entry.id, e))
    if len(failed) == 1:
        shape_id, error = failed[0]
        raise ManifestError(shape_id, error.detail)
    if failed:
        raise IncompleteResult("ensemble", [shape_id for shape_id, _ in failed], INPUT_ERROR)
    covariates = {entry.id: dict(entry.covariates) for entry in manifest.shapes}
    return ShapeEnsemble(shapes=tuple(shapes), covariates=covariates)


def write_points(path: Path, points: NDArray) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["x", "y"])
    for x, y in points:
        writer.writerow([fmt(float(x)), fmt(float(y))])
    Path(path).write_text(buffer.getvalue(), encoding="utf-8")


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], digest: str) -> None:
    buffer = io.StringIO()
    buffer.write(f"{DIGEST_PREFIX}{digest}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    Path(path).write_text(buffer.getvalue(), encoding="utf-8")


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(None, f"table '{path}' not found")
    with path.open(newline="", encoding="utf-8") as f:
        rows = [row for row in csv.reader(f) if row and not row[0].startswith("#")]
    if not rows:
        raise ManifestError(None, f"table '{path}' is empty")
    return rows[0], rows[1:]


def write_distance_matrix(path: Path, matrix: DistanceMatrix, digest: str) -> None:
    rows = [[shape_id, *matrix.values[i]] for i, shape_id in enumerate(matrix.ids)]
    write_table(path, ["id", *matrix.ids], rows, digest)


def write_json(path: Path, payload: BaseModel | dict) -> None:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    Path(path).write_bytes(orjson.dumps(payload, option=JSON_OPTIONS) + b"\n")


def read_json(path: Path, schema: Type[Schema]) -> Schema:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(None, f"file '{path}' not found")
    try:
        return schema.model_validate(orjson.loads(path.read_bytes()))
    except (orjson.JSONDecodeError, ValidationError) as e:
        raise ManifestError(None, f"cannot parse '{path}': {e}") from e
