"""Persistence formats and run manifests.

Binary layouts are little-endian IEEE-754 throughout; every file is
written to a temporary sibling and atomically renamed into place.  The
tensor cache carries a trailing SHA-256 digest that is verified on every
load — a corrupted cache is a hard error, never a silent recompute.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from datetime import datetime, timezone
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np

from .basis import CorrelationTensor
from .dynamics import IntegratorConfig, RadialState, Trajectory
from .errors import DomainError, StorageError

ARTIFACT_VERSION = "1.0.0"
SCHEMA_VERSION = 1
TENSOR_MAGIC = b"BBNLS3D1"
TENSOR_FORMAT_VERSION = 1
UNIT_TAG = "model-units-e2pi"  # exactly 16 bytes of ASCII
CACHE_DIR_ENV = "BALLNLS_CACHE_DIR"

__all__ = [
    "ARTIFACT_VERSION",
    "SCHEMA_VERSION",
    "UNIT_TAG",
    "CACHE_DIR_ENV",
    "cache_dir",
    "default_cache_path",
    "write_tensor_cache",
    "read_tensor_cache",
    "file_sha256",
    "write_trajectory",
    "read_trajectory",
    "build_manifest",
    "write_manifest",
    "read_manifest",
    "parse_config_file",
    "write_csv",
    "atomic_write_bytes",
    "format_g17",
]


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    except OSError as err:
        raise StorageError(f"cannot write {path}: {err}") from err


def file_sha256(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as err:
        raise StorageError(f"cannot read {path}: {err}") from err


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_DIR_ENV, ".ballnls-cache"))


def default_cache_path(n_max: int, quad_order: int = 0) -> Path:
    return cache_dir() / f"tensor-n{n_max}-q{quad_order}.bin"


# ---------------------------------------------------------------------------
# Tensor cache:
#   magic "BBNLS3D1" | u32 format version | u32 n_max | u32 quad order |
#   f64 bound constant | canonical values (f64, lexicographic sorted-tuple
#   order) | 32-byte SHA-256 of everything preceding.


def write_tensor_cache(tensor: CorrelationTensor, path) -> str:
    """Serialize; returns the hex digest of the payload."""
    keys = list(combinations_with_replacement(range(1, tensor.n_max + 1), 4))
    body = bytearray()
    body += TENSOR_MAGIC
    body += struct.pack(
        "<IIId",
        TENSOR_FORMAT_VERSION,
        tensor.n_max,
        tensor.quad_order,
        tensor.bound_constant,
    )
    vals = np.array([tensor.values[k] for k in keys], dtype="<f8")
    body += vals.tobytes()
    digest = hashlib.sha256(bytes(body)).digest()
    atomic_write_bytes(path, bytes(body) + digest)
    return digest.hex()


def read_tensor_cache(path) -> CorrelationTensor:
    try:
        raw = Path(path).read_bytes()
    except OSError as err:
        raise StorageError(f"cannot read tensor cache {path}: {err}") from err
    if len(raw) < len(TENSOR_MAGIC) + 20 + 32 or raw[:8] != TENSOR_MAGIC:
        raise StorageError(f"{path}: not a tensor cache file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise StorageError(f"{path}: cache digest mismatch (corrupted file)")
    version, n_max, quad_order, bound_constant = struct.unpack(
        "<IIId", body[8:28]
    )
    if version != TENSOR_FORMAT_VERSION:
        raise StorageError(f"{path}: unsupported cache format version {version}")
    keys = list(combinations_with_replacement(range(1, n_max + 1), 4))
    vals = np.frombuffer(body[28:], dtype="<f8")
    if vals.size != len(keys):
        raise StorageError(
            f"{path}: expected {len(keys)} values, found {vals.size}"
        )
    return CorrelationTensor(
        n_max=int(n_max),
        values={k: float(v) for k, v in zip(keys, vals)},
        bound_constant=float(bound_constant),
        quad_order=int(quad_order),
    )


# ---------------------------------------------------------------------------
# Trajectory file:
#   u32 N | f64 dt_record | u64 sample count | 16-byte unit tag |
#   coefficients per recorded time (complex interleaved f64) |
#   mass log (f64 * count) | energy log (f64 * count).


def write_trajectory(traj: Trajectory, path) -> None:
    A = traj.coeff_matrix()
    count, N = A.shape
    tag = UNIT_TAG.encode("ascii")
    if len(tag) != 16:
        raise StorageError("unit tag must be exactly 16 bytes")
    body = bytearray()
    body += struct.pack("<IdQ", N, traj.dt_record, count)
    body += tag
    body += np.ascontiguousarray(A, dtype="<c16").tobytes()
    body += np.asarray(traj.mass_log, dtype="<f8").tobytes()
    body += np.asarray(traj.energy_log, dtype="<f8").tobytes()
    atomic_write_bytes(path, bytes(body))


def read_trajectory(path) -> Trajectory:
    try:
        raw = Path(path).read_bytes()
    except OSError as err:
        raise StorageError(f"cannot read trajectory {path}: {err}") from err
    head = struct.calcsize("<IdQ")
    if len(raw) < head + 16:
        raise StorageError(f"{path}: truncated trajectory file")
    N, dt_record, count = struct.unpack("<IdQ", raw[:head])
    tag = raw[head : head + 16].decode("ascii", errors="replace")
    if tag != UNIT_TAG:
        raise DomainError(
            f"{path}: unit tag {tag!r} does not match {UNIT_TAG!r}; refusing "
            "to reinterpret units"
        )
    offset = head + 16
    need = count * N * 16 + 2 * count * 8
    if len(raw) != offset + need:
        raise StorageError(f"{path}: length inconsistent with header")
    A = np.frombuffer(raw, dtype="<c16", count=count * N, offset=offset)
    A = A.reshape(count, N)
    offset += count * N * 16
    mass = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    energy = np.frombuffer(raw, dtype="<f8", count=count, offset=offset + count * 8)
    dt = dt_record if dt_record > 0 else 1.0
    states = tuple(
        RadialState(N=int(N), coeffs=A[j].copy(), time=j * dt_record)
        for j in range(count)
    )
    config = IntegratorConfig(dt=dt, dt_record=dt_record if dt_record > 0 else None)
    return Trajectory(
        states=states, mass_log=mass.copy(), energy_log=energy.copy(), config=config
    )


# ---------------------------------------------------------------------------
# Manifests and config files


def build_manifest(
    command: str,
    config_snapshot: dict,
    seed: int | None,
    algorithm_id: str | None,
    tensor_cache_hash: str | None = None,
    timestamps: dict | None = None,
) -> dict:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        "config_snapshot": dict(sorted(config_snapshot.items())),
        "seed": seed,
        "algorithm_id": algorithm_id,
        "tensor_cache_hash": tensor_cache_hash,
    }
    if timestamps is not None:
        manifest["timestamps"] = timestamps
    return manifest


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(manifest: dict, path) -> None:
    payload = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, payload.encode("utf-8"))


def read_manifest(path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text("utf-8"))
    except (OSError, ValueError) as err:
        raise StorageError(f"cannot read manifest {path}: {err}") from err
    if "command" not in manifest or "config_snapshot" not in manifest:
        raise StorageError(f"{path}: not a run manifest")
    return manifest


def parse_config_file(path) -> dict:
    """One `key = value` per line; `#` starts a comment; values stay strings."""
    out = {}
    try:
        text = Path(path).read_text("utf-8")
    except OSError as err:
        raise StorageError(f"cannot read config {path}: {err}") from err
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"{path}:{lineno}: expected `key = value`")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_g17(x: float) -> str:
    """Decimal round-trip formatting for CSV floats."""
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(
                format_g17(v) if isinstance(v, float) else str(v) for v in row
            )
        )
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))
