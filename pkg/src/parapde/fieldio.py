"""Bit-exact on-disk formats: PFLD fields, CSV diagnostics, run manifests.

The PFLD layout is fixed little-endian regardless of host:

    bytes 0..4   magic "PFLD1"
    byte  5      format version (1)
    byte  6      spatial dimension d
    next 4*d     points per dimension, uint32 LE
    next 8       period, float64 LE
    payload      row-major float64 LE grid values (8 * n**d bytes)

CSV files carry a header row and repr-formatted floats (shortest exact
round trip), so identical runs produce identical bytes.  Manifests list
every produced file with a checksum.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from . import __version__
from .errors import ConfigurationError, LatticeMismatchError
from .spectral import SpectralField, TorusGrid

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "write_field",
    "read_field",
    "write_csv",
    "read_csv",
    "write_manifest",
    "file_checksum",
]

MAGIC = b"PFLD1"
FORMAT_VERSION = 1


def write_field(path: str | Path, field: SpectralField) -> Path:
    """Serialize a field; round trips are bit-identical."""
    path = Path(path)
    grid = field.grid
    head = MAGIC + bytes([FORMAT_VERSION, grid.d])
    head += b"".join(struct.pack("<I", grid.n) for _ in range(grid.d))
    head += struct.pack("<d", grid.period)
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(payload)
    return path


def read_field(path: str | Path) -> SpectralField:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:5] != MAGIC:
        raise ConfigurationError(f"{path}: not a PFLD file (bad magic)")
    if raw[5] != FORMAT_VERSION:
        raise ConfigurationError(f"{path}: unsupported format version {raw[5]}")
    d = raw[6]
    off = 7
    ns = []
    for _ in range(d):
        ns.append(struct.unpack_from("<I", raw, off)[0])
        off += 4
    if len(set(ns)) != 1:
        raise ConfigurationError(f"{path}: anisotropic grids are not supported")
    period = struct.unpack_from("<d", raw, off)[0]
    off += 8
    n = ns[0]
    expected = 8 * n**d
    if len(raw) - off != expected:
        raise LatticeMismatchError(
            f"{path}: payload is {len(raw) - off} bytes, expected {expected}")
    grid = TorusGrid(d=d, n=n, period=period)
    values = np.frombuffer(raw, dtype="<f8", count=n**d, offset=off)
    return SpectralField.from_values(grid, values.reshape(grid.shape).astype(float))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: str | Path, header: Sequence[str],
              rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ConfigurationError(
                f"row width {len(row)} does not match header width {len(header)}")
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines:
        raise ConfigurationError(f"{path}: empty CSV")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def file_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(path: str | Path, command: str, config_echo: dict,
                   statuses: dict, files: Sequence[Path],
                   wall_clock_seconds: float, rng_algorithm: str) -> Path:
    """Write the run manifest next to the produced files.

    Everything except ``wall_clock_seconds`` is deterministic for a fixed
    config and seed.
    """
    path = Path(path)
    base = path.parent
    inventory = []
    for f in sorted(Path(f) for f in files):
        inventory.append({
            "path": str(f.relative_to(base)) if f.is_relative_to(base) else str(f),
            "sha256": file_checksum(f),
            "bytes": f.stat().st_size,
        })
    doc = {
        "artifact": {"name": "parapde", "version": __version__},
        "command": command,
        "rng_algorithm": rng_algorithm,
        "config": config_echo,
        "statuses": statuses,
        "files": inventory,
        "wall_clock_seconds": round(wall_clock_seconds, 3),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(doc, sort_keys=True, default_flow_style=False))
    return path
