"""LENS1 binary snapshots of spectral fields.

Layout::

    b"LENS1" | version (1 byte) | metadata length (uint32 LE) | metadata JSON (UTF-8)
    | coefficients as little-endian float64 (re, im) pairs in basis order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hermite import SpectralField, build_basis

MAGIC = b"LENS1"
VERSION = 1
_COMPLEX_LE = np.dtype("<c16")


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Snapshot:
    metadata: dict
    coeffs: np.ndarray

    def field(self) -> SpectralField:
        """Rebuild the field on the basis named in the metadata."""
        m = self.metadata
        try:
            basis = build_basis(m["n"], m["J"], m["M"], truncation=m.get("truncation", "cluster"))
        except KeyError as exc:
            raise SnapshotFormatError(f"metadata lacks {exc.args[0]!r}") from None
        if basis.size != self.coeffs.size:
            raise SnapshotFormatError(f"basis has {basis.size} modes, snapshot holds {self.coeffs.size}")
        return SpectralField(basis, self.coeffs)


def encode(coeffs: np.ndarray, metadata: dict) -> bytes:
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    body = np.ascontiguousarray(coeffs, dtype=_COMPLEX_LE).tobytes()
    return MAGIC + bytes([VERSION]) + struct.pack("<I", len(meta)) + meta + body


def decode(blob: bytes) -> Snapshot:
    head = len(MAGIC) + 1 + 4
    if len(blob) < head or blob[: len(MAGIC)] != MAGIC:
        raise SnapshotFormatError("not a LENS1 snapshot (bad magic)")
    version = blob[len(MAGIC)]
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    (size,) = struct.unpack_from("<I", blob, len(MAGIC) + 1)
    if head + size > len(blob):
        raise SnapshotFormatError("truncated metadata block")
    try:
        metadata = json.loads(blob[head : head + size].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError(f"corrupt metadata: {exc}") from None
    body = blob[head + size :]
    if len(body) % _COMPLEX_LE.itemsize:
        raise SnapshotFormatError("coefficient block is not a whole number of complex values")
    coeffs = np.frombuffer(body, dtype=_COMPLEX_LE).astype(complex)
    return Snapshot(metadata, coeffs)


def snapshot_metadata(field: SpectralField, **extra) -> dict:
    b = field.basis
    meta = {"n": b.n, "J": b.J, "M": b.M, "truncation": b.truncation}
    meta.update(extra)
    return meta


def save_snapshot(path, field: SpectralField, **extra) -> Path:
    """Write ``field`` with metadata {n, J, M, truncation} plus ``extra`` keys."""
    path = Path(path)
    path.write_bytes(encode(field.coeffs, snapshot_metadata(field, **extra)))
    return path


def load_snapshot(path) -> Snapshot:
    return decode(Path(path).read_bytes())
