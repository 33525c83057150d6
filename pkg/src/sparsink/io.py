"""File formats: measure CSV, PGM frames, dense matrix binary, sketch triplets."""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import InputError
from .measures import FrameImage, new_measure

MATRIX_MAGIC = b"SPSKMAT1"
_HEADER = struct.Struct("<8sQQ")


def read_measure_csv(path, require_simplex=False):
    """Read ``weight,x1,...,xd`` rows (a header line is optional)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows:
                    raise InputError(f"{path}: non-numeric row {rec!r}")
                continue  # header
    if not rows:
        raise InputError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InputError(f"{path}: rows have differing numbers of columns")
    arr = np.asarray(rows)
    support = arr[:, 1:] if arr.shape[1] > 1 else None
    return new_measure(arr[:, 0], support, require_simplex=require_simplex)


def write_measure_csv(path, measure):
    d = measure.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["weight"] + [f"x{k + 1}" for k in range(d)])
        for wt, x in zip(measure.weights, measure.support):
            w.writerow([repr(float(wt))] + [repr(float(v)) for v in x])


def _pgm_tokens(data, count, pos):
    out = []
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InputError("truncated PGM header")
        out.append(data[start:pos])
    return out, pos


def read_pgm(path):
    """Read a binary (P5) or ASCII (P2) PGM as a :class:`FrameImage` in [0, 1]."""
    data = Path(path).read_bytes()
    (magic,), pos = _pgm_tokens(data, 1, 0)
    if magic not in (b"P2", b"P5"):
        raise InputError(f"{path}: not a PGM file")
    (w, h, maxval), pos = _pgm_tokens(data, 3, pos)
    w, h, maxval = int(w), int(h), int(maxval)
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise InputError(f"{path}: bad PGM header")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        px = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    else:
        vals, _ = _pgm_tokens(data, w * h, pos)
        px = np.array([int(v) for v in vals])
    return FrameImage(px.reshape(h, w).astype(np.float64) / maxval)


def write_pgm(path, frame, maxval=255):
    """Write a frame as binary PGM (P5)."""
    px = np.rint(np.asarray(frame.pixels) * maxval).astype(">u2" if maxval > 255 else "u1")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.width} {frame.height}\n{maxval}\n".encode())
        fh.write(px.tobytes())


def read_frames(directory):
    """All ``.pgm`` frames in a directory, sorted by file name."""
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".pgm")
    if not paths:
        raise InputError(f"{directory}: no .pgm frames")
    return [read_pgm(p) for p in paths]


def write_matrix(path, mat):
    """Dense float64 matrix: 8-byte magic, rows and cols as uint64, row-major data."""
    a = np.ascontiguousarray(mat, dtype="<f8")
    if a.ndim != 2:
        raise InputError("expected a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MATRIX_MAGIC, a.shape[0], a.shape[1]))
        fh.write(a.tobytes())


def read_matrix(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InputError(f"{path}: truncated matrix file")
    magic, r, c = _HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise InputError(f"{path}: bad magic")
    if len(data) != _HEADER.size + 8 * r * c:
        raise InputError(f"{path}: expected {r}x{c} entries")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(r, c).copy()


def write_matrix_csv(path, mat):
    np.savetxt(path, np.asarray(mat, dtype=np.float64), delimiter=",", fmt="%.17g")


def write_sketch(path, sketch):
    """Triplets ``row,col,value`` plus a ``.json`` sidecar with sketch metadata."""
    coo = sketch.matrix.tocoo()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for i, j, v in zip(coo.row, coo.col, coo.data):
            w.writerow([int(i), int(j), repr(float(v))])
    meta = {
        "seed": sketch.seed,
        "s": sketch.s,
        "theta": sketch.theta,
        "kind": sketch.kind,
        "realized_nnz": sketch.realized_nnz,
        "shape": list(sketch.shape),
    }
    write_json(os.fspath(path) + ".json", meta)


def read_sketch_triplets(path):
    """Return ``(rows, cols, values, meta)`` from a triplet CSV and its sidecar."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    side = os.fspath(path) + ".json"
    meta = json.loads(Path(side).read_text()) if os.path.exists(side) else {}
    return arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2], meta


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def read_weights_csv(path):
    """A plain column (or single row) of numbers; a header line is skipped."""
    vals = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            for v in rec:
                v = v.strip()
                if not v:
                    continue
                try:
                    vals.append(float(v))
                except ValueError:
                    if vals:
                        raise InputError(f"{path}: non-numeric value {v!r}")
    if not vals:
        raise InputError(f"{path}: no values")
    return np.asarray(vals)


def write_weights_csv(path, weights, meta=None):
    """Barycenter weights, one per line, with an optional ``.json`` metadata sidecar."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["weight"])
        for v in np.asarray(weights, dtype=np.float64):
            w.writerow([repr(float(v))])
    if meta is not None:
        write_json(os.fspath(path) + ".json", meta)
