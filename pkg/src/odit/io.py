"""CSV ingestion/emission and the model archive format.

Numbers are written with :func:`fmt`, Python's shortest round-trip ``repr``,
so parsing an emitted value gives back the identical double.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import IO, Iterator, Sequence, Tuple, Union

import numpy as np

from odit.errors import ArchiveError, DataError
from odit.gem import GemModel, GemParams
from odit.neighbors import NeighborIndex

PathOrFile = Union[str, Path, IO[str]]

ARCHIVE_FORMAT = "odit-gem-model"
ARCHIVE_VERSION = 1


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@contextlib.contextmanager
def open_text(source: PathOrFile, mode: str = "r"):
    if source is None or source == "-":
        yield sys.stdin if "r" in mode else sys.stdout
    elif isinstance(source, (str, Path)):
        try:
            with open(source, mode, newline="") as fh:
                yield fh
        except FileNotFoundError as exc:
            raise DataError(f"file not found: {source}") from exc
    else:
        yield source


def _parse_row(line: str, rownum: int, dim: int | None) -> np.ndarray:
    cells = line.split(",")
    if dim is not None and len(cells) != dim:
        raise DataError(f"row {rownum}: expected {dim} values, got {len(cells)}")
    try:
        values = [float(c) for c in cells]
    except ValueError:
        raise DataError(f"row {rownum}: non-numeric cell in {line!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise DataError(f"row {rownum}: non-finite value in {line!r}")
    return np.asarray(values, dtype=np.float64)


def iter_csv(source: PathOrFile, has_header: bool = False,
             dim: int | None = None) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(row_number, point)`` one row at a time. Rows are numbered from 1, header excluded."""
    with open_text(source) as fh:
        if has_header:
            fh.readline()
        rownum = 0
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rownum += 1
            point = _parse_row(line, rownum, dim)
            dim = point.size
            yield rownum, point


def load_csv(source: PathOrFile, has_header: bool = False) -> np.ndarray:
    """Read a whole CSV of numeric rows into an (n, d) array."""
    rows = [p for _, p in iter_csv(source, has_header)]
    if not rows:
        raise DataError("no data rows")
    return np.vstack(rows)


def write_csv(target: PathOrFile, header: Sequence[str] | None, rows) -> None:
    with open_text(target, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _checksum(payload) -> str:
    return "sha256:" + hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def model_payload(model: GemModel, source_digest: str | None = None) -> dict:
    p = model.params
    return {
        "params": {"k": int(p.k), "s": int(p.s), "gamma": float(p.gamma), "alpha": float(p.alpha),
                   "K": int(p.K), "partition_fraction": float(p.partition_fraction), "seed": int(p.seed)},
        "dim": model.dim,
        "reference_points": model.reference_index.points.tolist(),
        "baseline_lengths": model.baseline_lengths.tolist(),
        "threshold_length": float(model.threshold_length),
        "selected": [int(i) for i in model.selected],
        "training": {"n1": int(model.training_sizes[0]), "n2": int(model.training_sizes[1]),
                     "seed": int(p.seed), "source_digest": source_digest},
    }


def save_model(model: GemModel, path: PathOrFile, source_digest: str | None = None) -> None:
    payload = model_payload(model, source_digest)
    doc = {"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION,
           "checksum": _checksum(payload), "payload": payload}
    with open_text(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")


def load_model(path: PathOrFile) -> GemModel:
    with open_text(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"model archive is corrupt or truncated (checksum cannot be verified): {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != ARCHIVE_FORMAT:
        raise ArchiveError("not an odit model archive")
    version = doc.get("version")
    if not isinstance(version, int) or version != ARCHIVE_VERSION:
        raise ArchiveError(f"unsupported model archive version {version!r}; "
                           f"this build reads version {ARCHIVE_VERSION}")
    payload = doc.get("payload")
    if doc.get("checksum") != _checksum(payload):
        raise ArchiveError("model archive checksum mismatch (file corrupted or edited)")
    try:
        params = GemParams(**payload["params"])
        points = np.asarray(payload["reference_points"], dtype=np.float64)
        baseline = np.asarray(payload["baseline_lengths"], dtype=np.float64)
        selected = np.asarray(payload["selected"], dtype=np.int64)
        tr = payload["training"]
        model = GemModel(
            reference_index=NeighborIndex(points),
            params=params,
            baseline_lengths=baseline,
            threshold_length=float(payload["threshold_length"]),
            training_sizes=(int(tr["n1"]), int(tr["n2"])),
            selected=selected,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ArchiveError(f"malformed model archive: {exc}") from None
    if model.dim != payload["dim"] or baseline.size != params.K:
        raise ArchiveError("model archive fields are inconsistent")
    baseline.setflags(write=False)
    selected.setflags(write=False)
    return model


def model_digest(model: GemModel) -> str:
    return _checksum(model_payload(model))
