"""On-disk formats

Problem file (``.trp``): a packed little-endian header

    magic  4 bytes  b"TRPB"
    version         uint32
    n, k            uint64
    theta           float64

followed by A (n x n), B (n x n) and D (n x k) as row-major float64.

Dataset directory: ``manifest.json`` listing the views, one CSV per view
(rows = features, columns = samples) and a one-column CSV of integer
labels. Every CSV written here may start with '# key: value' provenance
lines; readers skip them. Text output uses 17 significant digits and is
read back with round-trip float parsing.
"""

import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from .multiview import MultiViewDataset
from .problem import TraceRatioProblem
from .util import DatasetError, FormatError

log = logging.getLogger(__name__)

PROBLEM_MAGIC = b"TRPB"
PROBLEM_VERSION = 1
PROBLEM_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("n", "<u8"),
        ("k", "<u8"),
        ("theta", "<f8"),
    ]
)
DATASET_FORMAT = "trace-ratio-dataset"
DATASET_VERSION = 1
MANIFEST = "manifest.json"
FLOAT_FORMAT = "%.17g"


############################################################
# Problem files
############################################################


def problem_filename(n: int, k: int, seed: int) -> str:
    return f"problem_n{n}_k{k}_seed{seed}.trp"


def write_problem(filename: str, problem: TraceRatioProblem) -> None:
    header = np.array(
        [(PROBLEM_MAGIC, PROBLEM_VERSION, problem.n, problem.k, problem.theta)],
        dtype=PROBLEM_HEADER,
    )
    with open(filename, "wb") as f:
        f.write(header.tobytes())
        for M in (problem.A, problem.B, problem.D):
            f.write(np.ascontiguousarray(M, dtype="<f8").tobytes())
    log.debug("Wrote problem file: %s", filename)


def read_problem(filename: str) -> TraceRatioProblem:
    try:
        with open(filename, "rb") as f:
            data = f.read()
    except OSError as e:
        raise FormatError(f"Failed to read problem file: {filename}\n{e}") from e

    if len(data) < PROBLEM_HEADER.itemsize:
        raise FormatError(f"{filename}: file too short for header")
    header = np.frombuffer(data, dtype=PROBLEM_HEADER, count=1)[0]
    if header["magic"] != PROBLEM_MAGIC:
        raise FormatError(f"{filename}: bad magic {header['magic']!r}")
    if header["version"] != PROBLEM_VERSION:
        raise FormatError(f"{filename}: unsupported version {header['version']}")
    n, k = int(header["n"]), int(header["k"])
    expected = PROBLEM_HEADER.itemsize + 8 * (2 * n * n + n * k)
    if len(data) != expected:
        raise FormatError(
            f"{filename}: expected {expected} bytes for n={n}, k={k}, got {len(data)}"
        )

    body = np.frombuffer(data, dtype="<f8", offset=PROBLEM_HEADER.itemsize)
    A = body[: n * n].reshape(n, n)
    B = body[n * n : 2 * n * n].reshape(n, n)
    D = body[2 * n * n :].reshape(n, k)
    return TraceRatioProblem(A, B, D, float(header["theta"]))


############################################################
# Datasets and projections
############################################################


def _write_header(
    f: TextIO, provenance: Dict[str, Any], timestamp: Union[datetime, None]
) -> None:
    if timestamp is None:
        timestamp = datetime.now(timezone.utc)
    for key, value in provenance.items():
        f.write(f"# {key}: {value}\n")
    f.write(f"# generated: {timestamp.isoformat(timespec='seconds')}\n")


def read_provenance(filename: str) -> Dict[str, str]:
    """The '# key: value' lines at the top of a CSV written here"""
    provenance: Dict[str, str] = {}
    with open(filename) as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(":")
            provenance[key.strip()] = value.strip()
    return provenance


def _write_matrix(
    filename: str,
    M: np.ndarray,
    provenance: Union[Dict[str, Any], None] = None,
    timestamp: Union[datetime, None] = None,
) -> None:
    with open(filename, "w", newline="") as f:
        if provenance is not None:
            _write_header(f, provenance, timestamp)
        pd.DataFrame(M).to_csv(
            f, header=False, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )


def _read_matrix(filename: str) -> np.ndarray:
    try:
        frame = pd.read_csv(
            filename, header=None, comment="#", float_precision="round_trip"
        )
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise DatasetError(f"Failed to read {filename}: {e}") from e
    try:
        return frame.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DatasetError(f"{filename} contains non-numeric entries") from e


def write_dataset(
    directory: str,
    ds: MultiViewDataset,
    provenance: Union[Dict[str, Any], None] = None,
    timestamp: Union[datetime, None] = None,
) -> str:
    os.makedirs(directory, exist_ok=True)
    views = []
    for name, Z in zip(ds.names, ds.views):
        filename = f"{name}.csv"
        _write_matrix(os.path.join(directory, filename), Z, provenance, timestamp)
        views.append({"name": name, "file": filename, "dim": Z.shape[0]})
    _write_matrix(
        os.path.join(directory, "labels.csv"), ds.labels.reshape(-1, 1), provenance, timestamp
    )
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "samples": ds.m,
        "labels": "labels.csv",
        "views": views,
    }
    path = os.path.join(directory, MANIFEST)
    with open(path, "w") as f:
        f.write(json.dumps(manifest, indent=4))
    log.info("Wrote dataset with %d views to %s", ds.v, directory)
    return path


def read_dataset(directory: str) -> MultiViewDataset:
    path = os.path.join(directory, MANIFEST)
    try:
        with open(path) as f:
            manifest = json.load(f)
    except (OSError, ValueError) as e:
        raise DatasetError(f"Failed to read manifest: {path}\n{e}") from e
    for key in ("labels", "views", "samples"):
        if key not in manifest:
            raise DatasetError(f"{path}: missing key '{key}'")
    if manifest.get("format", DATASET_FORMAT) != DATASET_FORMAT:
        raise DatasetError(f"{path}: unknown format {manifest['format']}")

    labels_file = os.path.join(directory, manifest["labels"])
    try:
        labels = pd.read_csv(labels_file, header=None, comment="#").iloc[:, 0].to_numpy()
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise DatasetError(f"Failed to read labels {labels_file}: {e}") from e
    if not np.issubdtype(labels.dtype, np.integer):
        raise DatasetError(f"{labels_file}: labels must be integers")
    if len(labels) != manifest["samples"]:
        raise DatasetError(
            f"{labels_file}: {len(labels)} labels, manifest says {manifest['samples']}"
        )

    names, views = [], []
    for entry in manifest["views"]:
        try:
            name, filename, dim = entry["name"], entry["file"], int(entry["dim"])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"{path}: malformed view entry {entry}") from e
        Z = _read_matrix(os.path.join(directory, filename))
        if Z.shape[0] != dim:
            raise DatasetError(
                f"View {name} ({filename}) has {Z.shape[0]} features, manifest says {dim}"
            )
        names.append(name)
        views.append(Z)
    return MultiViewDataset(views, labels, names)


def projection_filename(name: str) -> str:
    return f"projection_{name}.csv"


def write_projections(
    directory: str,
    names: Sequence[str],
    projections: Sequence[np.ndarray],
    provenance: Union[Dict[str, Any], None] = None,
    timestamp: Union[datetime, None] = None,
) -> List[str]:
    os.makedirs(directory, exist_ok=True)
    written = []
    for name, P in zip(names, projections):
        filename = os.path.join(directory, projection_filename(name))
        _write_matrix(filename, P, provenance, timestamp)
        written.append(filename)
    return written


def read_projections(directory: str, names: Sequence[str]) -> List[np.ndarray]:
    return [_read_matrix(os.path.join(directory, projection_filename(n))) for n in names]


############################################################
# Result tables
############################################################


def write_result_csv(
    filename: str,
    frame: pd.DataFrame,
    provenance: Dict[str, Any],
    timestamp: Union[datetime, None] = None,
) -> None:
    """CSV body preceded by '# key: value' comment lines.

    The timestamp line comes last so that reruns differ only there.
    """
    with open(filename, "w", newline="") as f:
        _write_header(f, provenance, timestamp)
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    log.debug("Wrote %s", filename)


def read_result_csv(filename: str) -> Tuple[Dict[str, str], pd.DataFrame]:
    provenance = read_provenance(filename)
    frame = pd.read_csv(filename, comment="#", float_precision="round_trip")
    return provenance, frame
