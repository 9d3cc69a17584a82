import json
import os
import struct
from unittest.mock import patch

import numpy as np
import pytest

from core.exceptions import ArtifactIOError, SnapshotFormatError
from core.spectral import GridSpec, SpectralField, random_band_limited
from utils.file_utils import (
    RunManifest,
    decode_snapshot,
    encode_snapshot,
    load_manifest,
    read_snapshot,
    write_bytes,
    write_manifest,
    write_snapshot,
)


def _header(version=1, n=32, max_mode=10, count=0, magic=b"W2DS"):
    return magic + struct.pack("<IIIQ", version, n, max_mode, count)


def _record(l1, l2, c):
    return struct.pack("<iid", l1, l2, c)

# --- Unit Tests for the snapshot codec ---

def test_zero_snapshot_is_header_only(grid32):
    payload = encode_snapshot(SpectralField.zeros(grid32))
    assert len(payload) == 24
    assert payload == _header()
    assert decode_snapshot(payload).norm() == 0.0


def test_snapshot_is_bit_exact(grid32):
    rng = np.random.default_rng(4)
    coeffs = np.zeros(grid32.size)
    coeffs[rng.choice(grid32.size, size=50, replace=False)] = rng.standard_normal(50)
    omega = SpectralField(grid32, coeffs)
    payload = encode_snapshot(omega)
    assert len(payload) == 24 + 50 * 16
    back = decode_snapshot(payload)
    assert back.grid.n == 32 and back.grid.max_mode == 10
    np.testing.assert_array_equal(back.coeffs, omega.coeffs)


def test_records_follow_the_grid_order(grid32):
    omega = SpectralField.from_modes(grid32, {(1, 0): 0.5, (0, -2): -1.25})
    payload = encode_snapshot(omega)
    body = payload[24:]
    assert struct.unpack("<iid", body[:16]) == (1, 0, 0.5)
    assert struct.unpack("<iid", body[16:]) == (0, -2, -1.25)


@pytest.mark.parametrize("payload, message", [
    (_header(count=1) + _record(0, 0, 1.0), "zero-mean invariant"),
    (_header(magic=b"W2DX"), "bad magic"),
    (_header(count=2) + _record(1, 0, 1.0), "truncated"),
    (_header()[:10], "truncated"),
    (_header(version=2), "unsupported snapshot version"),
    (_header(count=1) + _record(11, 0, 1.0), "outside the grid"),
    (_header(count=2) + _record(1, 0, 1.0) + _record(1, 0, 2.0), "repeats a mode"),
])
def test_decoder_rejects_malformed_payloads(payload, message):
    with pytest.raises(SnapshotFormatError, match=message):
        decode_snapshot(payload)


def test_decoder_checks_the_expected_grid(grid32, grid64):
    payload = encode_snapshot(SpectralField.zeros(grid32))
    with pytest.raises(SnapshotFormatError, match="differs"):
        decode_snapshot(payload, grid64)
    assert decode_snapshot(payload, grid32).grid == grid32


def test_snapshot_file_round_trip(tmp_path, grid32):
    omega = random_band_limited(grid32, 5.0, 1.0, seed=2)
    path = write_snapshot(omega, tmp_path / "sub" / "w.w2ds")
    assert not (tmp_path / "sub" / "w.w2ds.part").exists()
    np.testing.assert_array_equal(read_snapshot(path).coeffs, omega.coeffs)
    with pytest.raises(ArtifactIOError):
        read_snapshot(tmp_path / "missing.w2ds")


def test_square_cutoff_snapshot_round_trip(tmp_path):
    grid = GridSpec(32, 10, radial=False)
    omega = SpectralField.from_modes(grid, {(10, 10): 1.0, (1, 0): 2.0, (-7, 9): -0.5})
    decoded = decode_snapshot(encode_snapshot(omega))
    assert decoded.grid == grid
    np.testing.assert_array_equal(decoded.coeffs, omega.coeffs)
    path = write_snapshot(omega, tmp_path / "square.w2ds")
    np.testing.assert_array_equal(read_snapshot(path, grid).coeffs, omega.coeffs)


def test_disk_modes_decode_onto_the_disk_cutoff():
    square = GridSpec(32, 10, radial=False)
    omega = SpectralField.from_modes(square, {(6, 8): 1.0})
    assert decode_snapshot(encode_snapshot(omega)).grid == GridSpec(32, 10)

# --- Unit Tests for write_bytes ---

def test_write_retries_transient_errors(tmp_path):
    real_replace = os.replace
    attempts = []

    def flaky_replace(src, dst):
        attempts.append(src)
        if len(attempts) == 1:
            raise OSError("busy")
        return real_replace(src, dst)

    with patch("utils.file_utils.os.replace", side_effect=flaky_replace) as mock_replace:
        path = write_bytes(tmp_path / "a.bin", b"abc")
    assert mock_replace.call_count == 2
    assert path.read_bytes() == b"abc"


def test_write_gives_up_after_three_attempts(tmp_path):
    with patch("utils.file_utils.os.replace", side_effect=OSError("read-only")) as mock_replace:
        with pytest.raises(ArtifactIOError, match="read-only"):
            write_bytes(tmp_path / "a.bin", b"abc")
    assert mock_replace.call_count == 3
    assert ArtifactIOError("x").exit_code == 3

# --- Unit Tests for RunManifest ---

def test_manifest_digests_and_verify(tmp_path):
    first = write_bytes(tmp_path / "a.csv", b"time,l2_norm\n")
    second = write_bytes(tmp_path / "plots" / "b.dat", b"0 1\n")
    manifest = RunManifest(command="simulate", config={"dt": 0.01}, master_seed=3, version="0.1.0",
                           path_seeds=[{"path_index": 0}])
    path = write_manifest(manifest, tmp_path, [first, second])
    assert path.name == "manifest.json"
    assert set(manifest.files) == {"a.csv", "plots/b.dat"}
    assert all(len(d) == 64 for d in manifest.files.values())
    assert manifest.verify(tmp_path) == []

    loaded = load_manifest(path)
    assert loaded.files == manifest.files
    assert loaded.master_seed == 3
    assert json.loads(path.read_text())["command"] == "simulate"

    (tmp_path / "a.csv").write_bytes(b"tampered\n")
    (tmp_path / "plots" / "b.dat").unlink()
    assert sorted(loaded.verify(tmp_path)) == ["a.csv", "plots/b.dat"]


def test_load_manifest_errors(tmp_path):
    with pytest.raises(ArtifactIOError):
        load_manifest(tmp_path / "manifest.json")
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(ArtifactIOError):
        load_manifest(tmp_path / "manifest.json")
