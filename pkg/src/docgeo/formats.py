"""On-disk formats for warp fields, 3D coordinate maps, lines and images.

Binary layouts (all little-endian):

``.dgwf``  magic ``DGWF`` | u32 version=1 | u32 height | u32 width |
           height*width (dx, dy) float32 pairs, row-major.
``.dg3d``  magic ``DG3D`` | u32 version=1 | u32 height | u32 width |
           height*width (X, Y, Z) float32 triples, row-major.

``lines.jsonl`` holds one JSON object per line:
``{"points": [[x, y], ...], "thickness": t}``.

Writers are atomic (temp file + rename in the target directory), so a
crashed run never leaves a half-written artifact behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np
from PIL import Image

from .annotate import Textline
from .geometry import WarpField

__all__ = [
    "FormatError",
    "write_warp_field",
    "read_warp_field",
    "write_coords3d",
    "read_coords3d",
    "serialize_textlines",
    "parse_textlines",
    "write_textlines",
    "read_textlines",
    "save_image",
    "load_image",
    "save_mask",
    "load_mask",
    "atomic_write_bytes",
    "atomic_write_text",
    "write_json",
    "read_json",
]

_WARP_MAGIC = b"DGWF"
_COORDS_MAGIC = b"DG3D"
_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Raised for malformed or truncated on-disk artifacts."""


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file + rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    """Atomically write ``obj`` as stable (sorted-key) JSON."""
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_grid(path, magic: bytes, data: np.ndarray) -> None:
    h, w = data.shape[:2]
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    atomic_write_bytes(path, _HEADER.pack(magic, _VERSION, h, w) + payload)


def _read_grid(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    got_magic, version, h, w = _HEADER.unpack_from(raw)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = h * w * channels * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} for {h}x{w}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, channels)
    return arr.copy()


def write_warp_field(path, flow: WarpField) -> None:
    """Serialize a warp field to ``.dgwf`` (float32, bit-exact round-trip)."""
    _write_grid(path, _WARP_MAGIC, np.stack([flow.dx, flow.dy], axis=-1))


def read_warp_field(path) -> WarpField:
    arr = _read_grid(path, _WARP_MAGIC, 2)
    return WarpField(arr[..., 0], arr[..., 1])


def write_coords3d(path, coords: np.ndarray) -> None:
    """Serialize an (H, W, 3) coordinate map to ``.dg3d``."""
    coords = np.asarray(coords)
    if coords.ndim != 3 or coords.shape[2] != 3:
        raise ValueError(f"coords must be (H, W, 3), got {coords.shape}")
    _write_grid(path, _COORDS_MAGIC, coords)


def read_coords3d(path) -> np.ndarray:
    return _read_grid(path, _COORDS_MAGIC, 3)


def serialize_textlines(lines) -> str:
    """One JSON object per line; parse(serialize(x)) reproduces x."""
    rows = []
    for ln in lines:
        rows.append(json.dumps(
            {"points": ln.points.tolist(), "thickness": ln.thickness},
            sort_keys=True))
    return "\n".join(rows) + ("\n" if rows else "")


def parse_textlines(text: str):
    """Inverse of :func:`serialize_textlines`.

    Malformed rows raise :class:`FormatError` naming the 1-based line
    number.
    """
    lines = []
    for i, row in enumerate(text.splitlines(), start=1):
        row = row.strip()
        if not row:
            continue
        try:
            obj = json.loads(row)
            lines.append(Textline(np.asarray(obj["points"], dtype=np.float64),
                                  float(obj["thickness"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"line {i}: {exc}") from exc
    return lines


def write_textlines(path, lines) -> None:
    atomic_write_text(path, serialize_textlines(lines))


def read_textlines(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_textlines(fh.read())


def save_image(path, image: np.ndarray) -> None:
    """Save a float image in [0, 1] (grayscale or RGB) as 8-bit PNG."""
    image = np.asarray(image, dtype=np.float64)
    data = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(os.fspath(path), format="PNG")


def load_image(path) -> np.ndarray:
    """Load a PNG as float in [0, 1]; shape (H, W) or (H, W, 3)."""
    with Image.open(os.fspath(path)) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if "A" in img.mode or len(img.getbands()) > 2 else "L")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr


def save_mask(path, mask: np.ndarray) -> None:
    """Save a binary mask as a 0/255 grayscale PNG."""
    mask = np.asarray(mask)
    Image.fromarray(np.where(mask > 0.5 if mask.dtype != bool else mask,
                             255, 0).astype(np.uint8)).save(os.fspath(path), format="PNG")


def load_mask(path) -> np.ndarray:
    """Load a 0/255 mask PNG as boolean."""
    with Image.open(os.fspath(path)) as img:
        arr = np.asarray(img.convert("L"))
    return arr >= 128
