"""
Readers and writers for the on-disk formats.

    observations.csv  location_id,visit_date,species_id,count
    locations.csv     location_id,lon,lat   (or location_id,x_m,y_m)
    labels.csv        location_id,<species name>...
    features.csv      location_id,f0,f1,...
    features.bin      b"PECLFEAT", uint32 version, uint64 rows, uint64 dims,
                      then per row: uint16 id byte length, UTF-8 id, dims float64
                      (all little-endian)
    splits.json       {location_id: {"split": "train"|"val"|"test", "cluster_id": int}}

CSV floats are written with Python's shortest round-trip repr.
"""

import json
import logging
import re
import struct
import warnings
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dateutil.parser import isoparse

from ..exceptions import DataError, MalformedInputError, ShapeMismatchError
from .observations import LocationRecord, ObservationRecord
from .spatial import SplitAssignment, project_equirectangular
from ..utils.error_handling import log_errors
from .tables import LocationTable

logger = logging.getLogger(__name__)

FEATURES_MAGIC = b"PECLFEAT"
FEATURES_VERSION = 1
_HEADER = struct.Struct("<8sIQQ")
_ID_LENGTH = struct.Struct("<H")

OBSERVATION_COLUMNS = ["location_id", "visit_date", "species_id", "count"]

# pandas reports skipped rows as "Skipping line N: expected A fields, saw B"
_SKIPPED_LINE = re.compile(r"Skipping line (\d+): ([^\n]*)")
_PARSER_LINE = re.compile(r"(?:line|row) (\d+)")


class CsvRows(NamedTuple):
    """String cells of a CSV file plus where each row came from."""

    frame: pd.DataFrame
    line_numbers: List[int]
    bad_lines: List[Tuple[int, str]]

    def bad_line_errors(self) -> List[str]:
        return [f"line {number}: {problem}" for number, problem in self.bad_lines]


def _data_line_numbers(path: Path, skipped: Dict[int, str], n_rows: int) -> List[int]:
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        numbers = [
            number
            for number, text in enumerate(f, start=1)
            if number > 1 and text.rstrip("\r\n") and number not in skipped
        ]
    if len(numbers) != n_rows:
        # quoted fields spanning lines; fall back to row order
        numbers = list(range(2, n_rows + 2))
    return numbers


def _read_text_csv(path) -> CsvRows:
    """Read every cell as a string.

    Rows with too many fields are skipped by pandas and returned in
    ``bad_lines``; callers decide whether they are fatal.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", pd.errors.ParserWarning)
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False, on_bad_lines="warn")
        except pd.errors.EmptyDataError:
            return CsvRows(pd.DataFrame(), [], [])
        except pd.errors.ParserError as e:
            match = _PARSER_LINE.search(str(e))
            where = f"line {match.group(1)}: " if match else ""
            raise MalformedInputError(f"{path}: cannot parse CSV: {e}", [f"{where}{e}"]) from e

    skipped: Dict[int, str] = {}
    for w in caught:
        if issubclass(w.category, pd.errors.ParserWarning):
            for m in _SKIPPED_LINE.finditer(str(w.message)):
                skipped[int(m.group(1))] = m.group(2).strip()
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    bad_lines = sorted(skipped.items())
    return CsvRows(frame, _data_line_numbers(path, skipped, len(frame)), bad_lines)


def _raise_bad_lines(path, rows: CsvRows):
    if rows.bad_lines:
        errors = rows.bad_line_errors()
        raise MalformedInputError(f"{len(errors)} malformed rows in {path}", errors)


def read_observations(path, lenient: bool = False) -> Tuple[List[ObservationRecord], List[str]]:
    """Parse observation rows; returns records and ``line N: problem`` messages.

    Any malformed row raises MalformedInputError unless ``lenient``, in which
    case bad rows are skipped and reported.
    """
    rows = _read_text_csv(path)
    frame = rows.frame
    if frame.empty and not rows.bad_lines:
        raise DataError(f"{path} has no observation records")
    missing = [c for c in OBSERVATION_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedInputError(f"{path} is missing columns {missing}")

    records = []
    problems = list(rows.bad_lines)
    for line, row in zip(rows.line_numbers, frame.to_dict("records")):
        try:
            location_id = str(row["location_id"]).strip()
            if not location_id:
                raise ValueError("empty location_id")
            visit_date = isoparse(str(row["visit_date"]).strip()).date()
            species_id = int(str(row["species_id"]).strip())
            count = int(str(row["count"]).strip())
            records.append(ObservationRecord(location_id, visit_date, species_id, count))
        except (ValueError, OverflowError, MalformedInputError) as e:
            problems.append((line, str(e)))

    errors = [f"line {line}: {problem}" for line, problem in sorted(problems, key=lambda p: p[0])]
    if errors:
        for message in errors:
            logger.warning(f"{path}: {message}")
        if not lenient:
            raise MalformedInputError(f"{len(errors)} malformed rows in {path}", errors)
    if not records:
        raise DataError(f"{path} has no valid observation records")
    return records, errors


def read_locations(path, planar: bool = False) -> Dict[str, Tuple[float, float]]:
    """Planar coordinates in metres per location.

    ``x_m,y_m`` columns are used as-is (and required when ``planar``);
    otherwise ``lon,lat`` are projected around their mean.
    """
    rows = _read_text_csv(path)
    _raise_bad_lines(path, rows)
    frame = rows.frame
    if "location_id" not in frame.columns:
        raise MalformedInputError(f"{path} is missing the location_id column")
    try:
        if planar or {"x_m", "y_m"} <= set(frame.columns):
            x = frame["x_m"].astype(float).to_numpy()
            y = frame["y_m"].astype(float).to_numpy()
        else:
            x, y = project_equirectangular(
                frame["lon"].astype(float).to_numpy(), frame["lat"].astype(float).to_numpy()
            )
    except KeyError as e:
        raise MalformedInputError(f"{path} is missing coordinate column {e}") from e
    except ValueError as e:
        raise MalformedInputError(f"{path} has non-numeric coordinates: {e}") from e
    return {loc: (float(a), float(b)) for loc, a, b in zip(frame["location_id"], x, y)}


def write_locations_csv(path, location_ids: Sequence[str], coordinates) -> Path:
    xy = np.asarray(coordinates, dtype=np.float64)
    frame = pd.DataFrame({"location_id": list(location_ids), "x_m": xy[:, 0], "y_m": xy[:, 1]})
    return _write_frame(frame, path)


def _write_frame(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_labels_csv(path, location_ids: Sequence[str], labels, species_names: Sequence[str]) -> Path:
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (len(location_ids), len(species_names)):
        raise ShapeMismatchError(f"labels {y.shape} for {len(location_ids)} ids, {len(species_names)} species")
    frame = pd.DataFrame(y, columns=list(species_names))
    frame.insert(0, "location_id", list(location_ids))
    return _write_frame(frame, path)


def _read_numeric_table(path, what: str) -> Tuple[List[str], np.ndarray, List[str]]:
    rows = _read_text_csv(path)
    _raise_bad_lines(path, rows)
    frame = rows.frame
    if frame.empty or frame.columns[0] != "location_id":
        raise MalformedInputError(f"{path} must start with a location_id column and hold {what}")

    cells = frame.iloc[:, 1:].to_numpy(dtype=object)
    values = np.zeros(cells.shape, dtype=np.float64)
    errors = []
    for r, (line, row) in enumerate(zip(rows.line_numbers, cells)):
        try:
            values[r] = [float(cell) for cell in row]
        except (TypeError, ValueError) as e:
            errors.append(f"line {line}: non-numeric {what}: {e}")
            continue
        if not np.all(np.isfinite(values[r])):
            errors.append(f"line {line}: non-finite {what}")
    if errors:
        raise MalformedInputError(f"{len(errors)} malformed rows in {path}", errors)
    return frame["location_id"].tolist(), values, list(frame.columns[1:])


def read_labels_csv(path) -> Tuple[List[str], np.ndarray, List[str]]:
    """Location ids, the N x S label matrix and species names."""
    ids, labels, names = _read_numeric_table(path, "species probabilities")
    if np.any(labels < 0) or np.any(labels > 1):
        raise MalformedInputError(f"{path} has label values outside [0, 1]")
    return ids, labels, names


def write_features_csv(path, location_ids: Sequence[str], features) -> Path:
    x = np.asarray(features, dtype=np.float64)
    frame = pd.DataFrame(x, columns=[f"f{j}" for j in range(x.shape[1])])
    frame.insert(0, "location_id", list(location_ids))
    return _write_frame(frame, path)


def write_features_bin(path, location_ids: Sequence[str], features) -> Path:
    x = np.ascontiguousarray(features, dtype="<f8")
    if x.ndim != 2 or x.shape[0] != len(location_ids):
        raise ShapeMismatchError(f"features {x.shape} for {len(location_ids)} ids")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FEATURES_MAGIC, FEATURES_VERSION, x.shape[0], x.shape[1]))
        for loc, row in zip(location_ids, x):
            encoded = str(loc).encode("utf-8")
            f.write(_ID_LENGTH.pack(len(encoded)))
            f.write(encoded)
            f.write(row.tobytes())
    return path


def read_features_bin(path) -> Tuple[List[str], np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MalformedInputError(f"{path} is too short for a features header")
    magic, version, rows, dims = _HEADER.unpack_from(data, 0)
    if magic != FEATURES_MAGIC:
        raise MalformedInputError(f"{path} is not a features.bin file")
    if version != FEATURES_VERSION:
        raise MalformedInputError(f"{path} has unsupported version {version}")

    ids, values = [], np.empty((rows, dims), dtype=np.float64)
    pos = _HEADER.size
    row_bytes = 8 * dims
    try:
        for r in range(rows):
            (length,) = _ID_LENGTH.unpack_from(data, pos)
            pos += _ID_LENGTH.size
            ids.append(data[pos : pos + length].decode("utf-8"))
            pos += length
            if pos + row_bytes > len(data):
                raise MalformedInputError(f"{path} is truncated at row {r}")
            values[r] = np.frombuffer(data, dtype="<f8", count=dims, offset=pos)
            pos += row_bytes
    except struct.error as e:
        raise MalformedInputError(f"{path} is truncated: {e}") from e
    non_finite = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if non_finite.size:
        raise MalformedInputError(
            f"{path} has non-finite features", [f"row {int(r)}: non-finite features" for r in non_finite]
        )
    return ids, values


def read_features(path) -> Tuple[List[str], np.ndarray]:
    """Features from ``.bin`` or ``.csv`` by file suffix."""
    if Path(path).suffix.lower() == ".bin":
        return read_features_bin(path)
    ids, values, _ = _read_numeric_table(path, "features")
    return ids, values


def write_splits_json(path, assignment: SplitAssignment) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(assignment.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_splits_json(path) -> SplitAssignment:
    try:
        with open(path, "r") as f:
            return SplitAssignment.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise MalformedInputError(f"cannot read splits from {path}: {e}") from e


def write_location_stats(path, locations: Sequence[LocationRecord]) -> Path:
    frame = pd.DataFrame(
        {
            "location_id": [loc.location_id for loc in locations],
            "n_visits": [loc.n_visits for loc in locations],
            "n_observations": [loc.n_observations for loc in locations],
            "species_richness": [loc.richness for loc in locations],
        }
    )
    return _write_frame(frame, path)


def write_rows_csv(path, rows: List[Dict], columns: Optional[List[str]] = None) -> Path:
    """Write a list of dicts as CSV with a fixed column order."""
    frame = pd.DataFrame(rows, columns=columns)
    return _write_frame(frame, path)


@log_errors()
def load_location_table(features_path, labels_path, locations_path=None, planar: bool = False) -> LocationTable:
    """Join features, labels and optional coordinates on location_id, in labels order."""
    label_ids, labels, species_names = read_labels_csv(labels_path)
    feature_ids, features = read_features(features_path)
    feature_index = {loc: i for i, loc in enumerate(feature_ids)}
    keep = [i for i, loc in enumerate(label_ids) if loc in feature_index]
    if len(keep) < len(label_ids):
        logger.warning(f"{len(label_ids) - len(keep)} labelled locations have no features; dropped")
    ids = [label_ids[i] for i in keep]
    if not ids:
        raise DataError("no location has both features and labels")

    coordinates = None
    if locations_path is not None:
        coords = read_locations(locations_path, planar=planar)
        absent = [loc for loc in ids if loc not in coords]
        if absent:
            raise DataError(f"{len(absent)} locations lack coordinates, e.g. {absent[:3]}")
        coordinates = np.array([coords[loc] for loc in ids])

    return LocationTable(
        location_ids=ids,
        features=features[[feature_index[loc] for loc in ids]],
        labels=labels[keep],
        coordinates=coordinates,
        species_names=species_names,
    )
