# File: app/storage.py
"""
Binary snapshots and trajectories, operator files, observables CSV and JSON
reports. All formats carry schema version 1.

Snapshot record: magic b"SNLS1", little-endian doubles [d, N, periods..., t],
then (2N+1)^d little-endian complex128 coefficients in row-major centered order.
A trajectory file is a concatenation of snapshot records.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from pathlib import Path

import numpy as np

from models import NoiseError, SpectralError, SpectralField, TorusSpec, Trajectory
from noise import OperatorKind, SmoothingOperator, hs_norm

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAGIC = b"SNLS1"
_DOUBLE = np.dtype("<f8")
_COMPLEX = np.dtype("<c16")


def _ensure_parent(path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def encode_snapshot(f: SpectralField, t: float) -> bytes:
    header = np.array([f.spec.d, f.spec.cutoff, *f.spec.periods, t], dtype=_DOUBLE)
    return MAGIC + header.tobytes() + np.ascontiguousarray(f.coeffs, dtype=_COMPLEX).tobytes()


def _decode_one(buffer: bytes, offset: int) -> tuple[SpectralField, float, int]:
    if buffer[offset:offset + len(MAGIC)] != MAGIC:
        raise SpectralError(f"bad snapshot magic at byte {offset}")
    offset += len(MAGIC)
    d, cutoff = np.frombuffer(buffer, _DOUBLE, 2, offset)
    d, cutoff = int(d), int(cutoff)
    offset += 2 * _DOUBLE.itemsize
    tail = np.frombuffer(buffer, _DOUBLE, d + 1, offset)
    offset += (d + 1) * _DOUBLE.itemsize
    spec = TorusSpec(d, cutoff, tuple(float(p) for p in tail[:d]))
    count = spec.mode_count
    if len(buffer) < offset + count * _COMPLEX.itemsize:
        raise SpectralError("truncated snapshot record")
    coeffs = np.frombuffer(buffer, _COMPLEX, count, offset).reshape(spec.shape)
    offset += count * _COMPLEX.itemsize
    return SpectralField(spec, coeffs), float(tail[d]), offset


def write_snapshot(path, f: SpectralField, t: float) -> Path:
    path = _ensure_parent(path)
    path.write_bytes(encode_snapshot(f, t))
    return path


def read_snapshot(path) -> tuple[SpectralField, float]:
    field, t, _ = _decode_one(Path(path).read_bytes(), 0)
    return field, t


def write_trajectory(path, traj: Trajectory) -> Path:
    path = _ensure_parent(path)
    with path.open("wb") as handle:
        for t, coeffs in zip(traj.times, traj.coeffs):
            handle.write(encode_snapshot(SpectralField(traj.spec, coeffs), float(t)))
    logger.info("wrote %d snapshots to %s", len(traj), path)
    return path


def read_trajectory(path) -> Trajectory:
    buffer = Path(path).read_bytes()
    fields, times, offset = [], [], 0
    while offset < len(buffer):
        f, t, offset = _decode_one(buffer, offset)
        fields.append(f)
        times.append(t)
    return Trajectory.from_fields(times, fields)


def write_operator(path, op: SmoothingOperator, s_values=(0.0, 1.0)) -> Path:
    """Text header with kind, d, N and HS norms, a '---' line, then the data."""
    path = _ensure_parent(path)
    lines = [
        f"# schema_version={SCHEMA_VERSION}",
        f"# kind={op.kind.value}",
        f"# d={op.spec.d}",
        f"# N={op.spec.cutoff}",
        f"# periods={','.join(repr(p) for p in op.spec.periods)}",
    ]
    lines += [f"# hs[{s}]={hs_norm(op, s)!r}" for s in s_values]
    header = ("\n".join(lines) + "\n---\n").encode("utf-8")
    if op.is_diagonal:
        rows = io.StringIO()
        for n, value in zip(op.spec.modes.reshape(op.spec.d, -1).T, op.data.ravel()):
            rows.write(" ".join(str(int(v)) for v in n) + f" {float(value.real)!r} {float(value.imag)!r}\n")
        body = rows.getvalue().encode("utf-8")
    else:
        body = np.ascontiguousarray(op.data, dtype=_COMPLEX).tobytes()
    path.write_bytes(header + body)
    return path


def read_operator(path) -> SmoothingOperator:
    raw = Path(path).read_bytes()
    marker = raw.find(b"\n---\n")
    if marker < 0:
        raise NoiseError(f"{path}: operator file has no '---' separator")
    meta = {}
    for line in raw[:marker].decode("utf-8").splitlines():
        if line.startswith("#") and "=" in line:
            key, value = line[1:].strip().split("=", 1)
            meta[key.strip()] = value.strip()
    try:
        spec = TorusSpec(int(meta["d"]), int(meta["N"]), tuple(float(p) for p in meta["periods"].split(",")))
        kind = OperatorKind(meta["kind"])
    except (KeyError, ValueError) as exc:
        raise NoiseError(f"{path}: malformed operator header ({exc})") from exc
    body = raw[marker + len(b"\n---\n"):]
    if kind is OperatorKind.DENSE:
        expected = spec.mode_count ** 2 * _COMPLEX.itemsize
        if len(body) != expected:
            raise NoiseError(f"{path}: dense operator body has {len(body)} bytes, expected {expected}")
        return SmoothingOperator.dense(spec, np.frombuffer(body, _COMPLEX).reshape(spec.mode_count, -1))
    data = np.zeros(spec.shape, dtype=np.complex128)
    for line in body.decode("utf-8").splitlines():
        if not line.strip():
            continue
        parts = line.split()
        n, (re, im) = parts[:spec.d], parts[spec.d:spec.d + 2]
        data[spec.index([int(v) for v in n])] = complex(float(re), float(im))
    return SmoothingOperator.diagonal(spec, data)


def _comment_header(config_hash: str, seed) -> list[str]:
    return [f"# schema_version={SCHEMA_VERSION}", f"# config_hash={config_hash}", f"# seed={seed}"]


def write_csv(path, columns, rows, config_hash: str, seed=None) -> Path:
    """CSV with '#' comment lines carrying schema, config hash and seed."""
    path = _ensure_parent(path)
    with path.open("w", newline="") as handle:
        for line in _comment_header(config_hash, seed):
            handle.write(line + "\n")
        writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: ("" if value is None else value) for key, value in row.items()})
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """Comment metadata and data rows of a CSV written by `write_csv`."""
    meta, lines = {}, []
    with Path(path).open(newline="") as handle:
        for line in handle:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            else:
                lines.append(line)
    return meta, list(csv.DictReader(lines))


def write_observables(path, rows, config_hash: str, seed=None) -> Path:
    return write_csv(path, ("t", "mass", "energy", "hs_norm", "running_xsb"), rows, config_hash, seed)


def write_ratios(path, results, config_hash: str, seed=None) -> Path:
    """Verifier CSV: one (N, sample_id, ratio) row per sample."""
    rows = [{"N": stats.cutoff, "sample_id": sample_id, "ratio": repr(float(ratio))}
            for stats in results for sample_id, ratio in stats.ratios]
    return write_csv(path, ("N", "sample_id", "ratio"), rows, config_hash, seed)


def write_json(path, payload: dict) -> Path:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    path = _ensure_parent(path)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")
