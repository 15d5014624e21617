"""Embedding and label file formats.

Binary layout: ``b"EMB1"``, u32 count, u32 dimension, then per record a u64
id followed by ``dimension`` little-endian float32 values. The CSV form has a
header ``<id column>,v1,...,vd``. Values from either format pass through
float32 so both parse to identical arrays.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"EMB1"


def _record_dtype(d: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("vec", "<f4", (d,))])


def write_embeddings(path, ids, vectors, id_column: str = "item_id") -> None:
    """Write to ``path``; the format follows the suffix (``.csv`` or binary)."""
    ids = np.asarray(ids, dtype=np.int64)
    vectors = np.asarray(vectors, dtype=np.float32)
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([id_column] + [f"v{j + 1}" for j in range(vectors.shape[1])])
            for i, v in zip(ids, vectors):
                w.writerow([int(i)] + [repr(float(x)) for x in v])
        return
    rec = np.empty(len(ids), dtype=_record_dtype(vectors.shape[1]))
    rec["id"] = ids
    rec["vec"] = vectors
    with path.open("wb") as fh:
        fh.write(MAGIC + struct.pack("<II", len(ids), vectors.shape[1]))
        fh.write(rec.tobytes())


def read_embeddings(path, id_column: str = "item_id") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(ids, vectors)`` with vectors as float64 (float32-exact values)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == MAGIC:
        return _parse_binary(raw, path)
    return _parse_csv(raw.decode("utf-8", errors="replace"), path, id_column)


def _parse_binary(raw: bytes, path) -> tuple[np.ndarray, np.ndarray]:
    if len(raw) < 12:
        raise ParseError(f"{path}: truncated header")
    n, d = struct.unpack("<II", raw[4:12])
    if d < 1:
        raise ParseError(f"{path}: header dimension must be >= 1")
    dt = _record_dtype(d)
    body = raw[12:]
    if len(body) != n * dt.itemsize:
        raise ParseError(f"{path}: expected {n} records of {dt.itemsize} bytes, got {len(body)} bytes")
    rec = np.frombuffer(body, dtype=dt, count=n)
    ids = rec["id"].astype(np.int64)
    vecs = rec["vec"].astype(np.float64)
    _check(ids, vecs, path)
    return ids, vecs


def _parse_csv(text: str, path, id_column: str) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header[1:] != [f"v{j + 1}" for j in range(d)]:
        raise ParseError(f"{path}: line 1: header must be <id>,v1..vd")
    if header[0] != id_column:
        raise ParseError(f"{path}: line 1: first column must be '{id_column}', got '{header[0]}'")
    ids, vecs = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise ParseError(f"{path}: line {lineno}: expected {d + 1} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
        except ValueError:
            raise ParseError(f"{path}: line {lineno}, field {id_column}: not an integer") from None
        try:
            vecs.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
    ids = np.array(ids, dtype=np.int64)
    vecs = np.array(vecs, dtype=np.float32).astype(np.float64).reshape(len(ids), d)
    _check(ids, vecs, path)
    return ids, vecs


def _check(ids, vecs, path):
    if len(np.unique(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate ids")
    if not np.all(np.isfinite(vecs)):
        raise ParseError(f"{path}: non-finite vector entries")


def read_labels(path) -> dict[int, str]:
    """Category label CSV with header ``item_id,category``."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["item_id", "category"]:
        raise ParseError(f"{path}: line 1: header must be item_id,category")
    labels = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"{path}: line {lineno}: expected 2 fields")
        try:
            labels[int(row[0])] = row[1]
        except ValueError:
            raise ParseError(f"{path}: line {lineno}, field item_id: not an integer") from None
    return labels


def write_labels(path, labels: dict) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "category"])
        for k in sorted(labels):
            w.writerow([k, labels[k]])
