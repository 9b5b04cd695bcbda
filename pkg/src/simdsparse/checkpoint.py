"""Checkpoint persistence and matrix exports (canonical JSON, CSV, PGM).

Checkpoints are single JSON documents with sorted keys and fixed
separators, so saving the result of a load reproduces the original file
byte for byte. Weights are stored as decimal text (shortest round-trip
representation of each float32), masks as per-group bitsets.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = [
    "FORMAT_VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "heatmap_image",
    "write_pgm",
    "write_matrix_csv",
    "write_trace_csv",
]

FORMAT_VERSION = 1


def _group_bits(mask: np.ndarray, group_size: int) -> np.ndarray:
    rows, cols = mask.shape
    if cols % group_size != 0:
        raise ValueError(
            f"mask with {cols} columns is not divisible by group size "
            f"{group_size}"
        )
    grouped = (np.asarray(mask) != 0).reshape(rows, cols // group_size,
                                              group_size)
    per_group = grouped.all(axis=2)
    if (grouped.any(axis=2) != per_group).any():
        raise ValueError("mask is not group-constant")
    return per_group.astype(np.uint8)


def save_checkpoint(path: str, config: dict, step: int,
                    params: dict[str, np.ndarray],
                    masks: dict[str, np.ndarray], group_size: int) -> None:
    """Write a canonical-JSON checkpoint file."""
    matrices = {}
    vectors = {}
    for name, w in params.items():
        w = np.asarray(w, dtype=np.float32)
        if w.ndim == 2:
            matrices[name] = {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "values": [float(v) for v in w.ravel()],
            }
        elif w.ndim == 1:
            vectors[name] = {
                "size": int(w.shape[0]),
                "values": [float(v) for v in w],
            }
        else:
            raise ValueError(f"parameter {name} must be 1-D or 2-D")
    mask_obj = {}
    for name, mask in masks.items():
        bits = _group_bits(np.asarray(mask), group_size)
        mask_obj[name] = {
            "rows": int(mask.shape[0]),
            "cols": int(mask.shape[1]),
            "group_size": int(group_size),
            "bits": [int(b) for b in bits.ravel()],
        }
    obj = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "step": int(step),
        "matrices": matrices,
        "vectors": vectors,
        "masks": mask_obj,
    }
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False) + "\n"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ValueError(f"checkpoint is missing field {key!r} in {where}")
    return obj[key]


def load_checkpoint(path: str) -> dict:
    """Read a checkpoint; returns config, step, params, masks, group sizes."""
    with open(path, "r", encoding="ascii") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"checkpoint is not valid JSON: {exc}") from exc
    version = _require(obj, "format_version", "checkpoint root")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version}")
    config = _require(obj, "config", "checkpoint root")
    step = _require(obj, "step", "checkpoint root")
    params: dict[str, np.ndarray] = {}
    for name, rec in _require(obj, "matrices", "checkpoint root").items():
        rows = _require(rec, "rows", name)
        cols = _require(rec, "cols", name)
        values = _require(rec, "values", name)
        if len(values) != rows * cols:
            raise ValueError(
                f"matrix {name} declares {rows}x{cols} but has "
                f"{len(values)} values"
            )
        params[name] = np.array(values, dtype=np.float32).reshape(rows, cols)
    for name, rec in _require(obj, "vectors", "checkpoint root").items():
        size = _require(rec, "size", name)
        values = _require(rec, "values", name)
        if len(values) != size:
            raise ValueError(
                f"vector {name} declares size {size} but has "
                f"{len(values)} values"
            )
        params[name] = np.array(values, dtype=np.float32)
    masks: dict[str, np.ndarray] = {}
    group_size = None
    for name, rec in _require(obj, "masks", "checkpoint root").items():
        rows = _require(rec, "rows", name)
        cols = _require(rec, "cols", name)
        gsz = _require(rec, "group_size", name)
        bits = _require(rec, "bits", name)
        if cols % gsz != 0 or len(bits) != rows * (cols // gsz):
            raise ValueError(f"mask {name} bitset does not match its shape")
        group_size = int(gsz)
        per_group = np.array(bits, dtype=np.uint8).reshape(rows, cols // gsz)
        masks[name] = np.repeat(per_group, gsz, axis=1)
    return {
        "config": config,
        "step": int(step),
        "params": params,
        "masks": masks,
        "group_size": group_size,
    }


def heatmap_image(w) -> np.ndarray:
    """uint8 magnitude image: pixel = round(255 * |w| / max|w|)."""
    aw = np.abs(np.asarray(w, dtype=np.float64))
    peak = aw.max() if aw.size else 0.0
    if peak == 0.0:
        return np.zeros(aw.shape, dtype=np.uint8)
    return np.rint(255.0 * aw / peak).astype(np.uint8)


def write_pgm(path: str, img: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255)."""
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got {img.ndim}-D")
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path: str) -> np.ndarray:
    """Read back a binary PGM written by `write_pgm`."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError(f"not a binary PGM file: magic {magic!r}")
        dims = fh.readline().split()
        cols, rows = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError(f"expected maxval 255, got {maxval}")
        data = fh.read(rows * cols)
    return np.frombuffer(data, dtype=np.uint8).reshape(rows, cols)


def write_matrix_csv(path: str, w: np.ndarray) -> None:
    """Raw weight values, one row per matrix row, shortest-repr floats."""
    w = np.asarray(w)
    with open(path, "w", encoding="ascii") as fh:
        for row in np.atleast_2d(w):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_trace_csv(path: str, trace: list[dict]) -> None:
    """Loss trace with columns step,nll,reg,total,sparsity."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("step,nll,reg,total,sparsity\n")
        for row in trace:
            fh.write(f"{row['step']},{row['nll']!r},{row['reg']!r},"
                     f"{row['total']!r},{row['sparsity']!r}\n")
