"""Image, mask, CSV and trajectory file helpers."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from .masks import BinaryMask
from .metrics import Trajectory

REC601 = (0.299, 0.587, 0.114)


def read_image(path) -> np.ndarray:
    """Load an 8/16-bit PGM or PNG as a (1, H, W) float64 tensor in [0, 1].

    Colour images are converted with Rec.601 luma weights.
    """
    with Image.open(path) as im:
        im.load()
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64)
            scale = 65535.0
        elif im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)
            scale = 255.0
        else:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            arr = rgb @ np.array(REC601)
            scale = 255.0
    return np.clip(arr / scale, 0.0, 1.0)[None]


def write_image(path, tensor) -> None:
    """Save a single-channel tensor as 8-bit grayscale (values clamped to [0, 1])."""
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[0]
    img = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".pnm") else "PNG"
    Image.fromarray(img, mode="L").save(path, format=fmt)


def read_mask(path) -> BinaryMask:
    """8-bit mask with 0/255 semantics; anything above mid-grey counts as dynamic."""
    return BinaryMask(read_image(path)[0] > 0.5)


def write_mask(path, mask: BinaryMask) -> None:
    write_image(path, mask.values.astype(np.float64))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_numeric_csv(path) -> np.ndarray:
    """Read a numeric CSV, skipping a header row if it is not numeric."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    return np.array([[float(c) for c in r] for r in rows], dtype=np.float64)


def read_trajectory(path) -> Trajectory:
    """Trajectory CSV with columns ``t,x,y,z`` (header optional)."""
    data = read_numeric_csv(path)
    if data.ndim != 2 or data.shape[1] < 4:
        raise ValueError(f"{path}: expected columns t,x,y,z")
    return Trajectory(data[:, 0], data[:, 1:4])


def write_trajectory(path, traj: Trajectory) -> None:
    write_csv(path, ["t", "x", "y", "z"], np.column_stack([traj.stamps, traj.positions]).tolist())
