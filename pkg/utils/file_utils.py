"""
Run artifacts on disk: binary vorticity snapshots, retried writes and the
run manifest with content digests.

Snapshot layout (little-endian):

    b"W2DS"  u32 version  u32 n  u32 max_mode  u64 count
    count x (i32 l1, i32 l2, f64 c_l)
"""

import os
import json
import hashlib
import logging
from dataclasses import dataclass, field, asdict
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed

from core.exceptions import ArtifactIOError, SnapshotFormatError
from core.spectral import GridSpec, SpectralField

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"W2DS"
SNAPSHOT_VERSION = 1
_HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("n", "<u4"), ("max_mode", "<u4"), ("count", "<u8")])
_RECORD = np.dtype([("l1", "<i4"), ("l2", "<i4"), ("c", "<f8")])

PathLike = Union[str, Path]


@retry(stop=stop_after_attempt(3), wait=wait_fixed(0.2), retry=retry_if_exception_type(OSError), reraise=True)
def _write_bytes_with_retry(path: Path, payload: bytes):
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def write_bytes(path: PathLike, payload: bytes) -> Path:
    """Write through a temporary file, retrying transient OS errors."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_bytes_with_retry(path, payload)
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise ArtifactIOError(f"cannot write {path}: {e}") from e
    return path


def write_text(path: PathLike, text: str) -> Path:
    return write_bytes(path, text.encode("utf-8"))


def file_digest(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- snapshots ---------------------------------------------------------------

def encode_snapshot(omega: SpectralField) -> bytes:
    grid = omega.grid
    nonzero = np.flatnonzero(omega.coeffs)
    header = np.zeros(1, dtype=_HEADER)
    header[0] = (SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n, grid.max_mode, len(nonzero))
    records = np.zeros(len(nonzero), dtype=_RECORD)
    pts = grid.points[nonzero]
    records["l1"] = pts[:, 0]
    records["l2"] = pts[:, 1]
    records["c"] = omega.coeffs[nonzero]
    return header.tobytes() + records.tobytes()


def decode_snapshot(payload: bytes, grid: Optional[GridSpec] = None) -> SpectralField:
    """Inverse of encode_snapshot; grid overrides the dealiasing settings of the stored (n, max_mode)."""
    if len(payload) < _HEADER.itemsize:
        raise SnapshotFormatError(f"truncated snapshot: {len(payload)} bytes, header needs {_HEADER.itemsize}")
    header = np.frombuffer(payload[:_HEADER.itemsize], dtype=_HEADER)[0]
    if bytes(header["magic"]) != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"bad magic {bytes(header['magic'])!r}, expected {SNAPSHOT_MAGIC!r}")
    if int(header["version"]) != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {int(header['version'])}")
    count = int(header["count"])
    body = payload[_HEADER.itemsize:]
    if len(body) != count * _RECORD.itemsize:
        raise SnapshotFormatError(f"truncated snapshot: {count} records announced, "
                                  f"{len(body) / _RECORD.itemsize:g} present")
    records = np.frombuffer(body, dtype=_RECORD)
    pts = np.stack([records["l1"], records["l2"]], axis=1).astype(int)
    if grid is None:
        # the header carries no cutoff shape; a corner mode implies the square cutoff
        max_mode = int(header["max_mode"])
        radial = not np.any(pts[:, 0] ** 2 + pts[:, 1] ** 2 > max_mode ** 2)
        try:
            grid = GridSpec(int(header["n"]), max_mode, radial=radial)
        except ValueError as e:
            raise SnapshotFormatError(f"snapshot header describes an invalid grid: {e}") from e
    elif (grid.n, grid.max_mode) != (int(header["n"]), int(header["max_mode"])):
        raise SnapshotFormatError(f"snapshot grid ({int(header['n'])}, {int(header['max_mode'])}) "
                                  f"differs from ({grid.n}, {grid.max_mode})")
    if np.any((pts[:, 0] == 0) & (pts[:, 1] == 0)):
        raise SnapshotFormatError("snapshot holds a coefficient at l = 0, violating the zero-mean invariant")
    outside = [tuple(p) for p in pts if not grid.contains(p)]
    if outside:
        raise SnapshotFormatError(f"{len(outside)} snapshot modes lie outside the grid, e.g. {outside[0]}")
    coeffs = np.zeros(grid.size)
    idx = grid.index_of(pts) if len(pts) else np.zeros(0, dtype=int)
    if len(np.unique(idx)) != len(idx):
        raise SnapshotFormatError("snapshot repeats a mode")
    coeffs[idx] = records["c"]
    return SpectralField(grid, coeffs)


def write_snapshot(omega: SpectralField, path: PathLike) -> Path:
    return write_bytes(path, encode_snapshot(omega))


def read_snapshot(path: PathLike, grid: Optional[GridSpec] = None) -> SpectralField:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactIOError(f"cannot read snapshot {path}: {e}") from e
    return decode_snapshot(payload, grid)


# --- manifest ----------------------------------------------------------------

@dataclass
class RunManifest:
    """Everything needed to reproduce the files of one command."""

    command: str
    config: Dict[str, Any]
    master_seed: int
    version: str
    path_seeds: List[Dict[str, Any]] = field(default_factory=list)
    files: Dict[str, str] = field(default_factory=dict)
    resources: Dict[str, Any] = field(default_factory=dict)
    created: str = field(default_factory=lambda: datetime.now().isoformat())

    def add_file(self, path: PathLike, root: PathLike):
        self.files[Path(path).relative_to(root).as_posix()] = file_digest(path)

    def verify(self, root: PathLike) -> List[str]:
        """Names of listed files whose digest no longer matches."""
        root = Path(root)
        return [name for name, digest in self.files.items()
                if not (root / name).exists() or file_digest(root / name) != digest]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def write_manifest(manifest: RunManifest, out_dir: PathLike, outputs: List[PathLike]) -> Path:
    """Digest every output, then write manifest.json last."""
    out_dir = Path(out_dir)
    for path in outputs:
        manifest.add_file(path, out_dir)
    text = json.dumps(manifest.to_dict(), indent=2, sort_keys=True, default=str)
    path = write_text(out_dir / "manifest.json", text)
    logger.info(f"manifest written with {len(manifest.files)} files: {path}")
    return path


def load_manifest(path: PathLike) -> RunManifest:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"cannot read manifest {path}: {e}") from e
    return RunManifest(**data)
