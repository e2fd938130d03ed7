"""Disparity map file formats: PFM and 16-bit KITTI-style PNG."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import FormatError, InvalidArgumentError, RangeError
from .tensor import Tensor


def _to_map(disparity) -> np.ndarray:
    arr = disparity.data if isinstance(disparity, Tensor) else np.asarray(disparity)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 4:
        if arr.shape[0] != 1 or arr.shape[1] != 1:
            raise InvalidArgumentError("expected a [1,1,H,W] disparity tensor")
        arr = arr[0, 0]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"expected a 2D map, got shape {arr.shape}")
    return arr


def write_pfm(path, disparity) -> None:
    """Grayscale PFM: 'Pf' header, bottom-up rows, little-endian float32."""
    arr = _to_map(disparity)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("disparity map holds non-finite values")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")  # negative scale marks little-endian
        fh.write(arr[::-1].astype("<f4").tobytes())


def read_pfm(path) -> Tensor:
    """Read a grayscale PFM into a [1,1,H,W] tensor."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            raise FormatError(f"{path}: color PFM is not supported")
        if header != b"Pf":
            raise FormatError(f"{path}: bad PFM header {header!r}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: bad PFM dimension line")
        w, h = int(dims[0]), int(dims[1])
        try:
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise FormatError(f"{path}: bad PFM scale line") from exc
        dtype = "<f4" if scale < 0 else ">f4"
        payload = fh.read(4 * w * h)
        if len(payload) != 4 * w * h:
            raise FormatError(f"{path}: truncated PFM payload")
        arr = np.frombuffer(payload, dtype=dtype).reshape(h, w)[::-1]
    return Tensor(arr[None, None].astype(np.float64))


KITTI_PNG_SCALE = 256.0


def write_kitti_png(path, disparity) -> None:
    """16-bit grayscale PNG, value = round(disparity * 256), 0 = invalid."""
    arr = _to_map(disparity)
    if np.any(arr < 0):
        raise InvalidArgumentError("disparities must be non-negative")
    if np.any(arr * KITTI_PNG_SCALE > 65535):
        raise RangeError("disparity >= 256 px cannot be stored in 16 bits")
    stored = np.round(arr * KITTI_PNG_SCALE).astype(np.uint16)
    Image.fromarray(stored).save(path)


def read_kitti_png(path):
    """Returns ([1,1,H,W] disparity, [1,1,H,W] mask); stored 0 means invalid."""
    img = Image.open(path)
    if img.mode not in ("I;16", "I"):
        raise FormatError(f"{path}: expected a 16-bit grayscale PNG, got {img.mode}")
    stored = np.asarray(img, dtype=np.uint32)
    if stored.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel image")
    disparity = stored.astype(np.float64) / KITTI_PNG_SCALE
    mask = (stored > 0).astype(np.float64)
    return Tensor(disparity[None, None]), Tensor(mask[None, None])


def write_image_png(path, image) -> None:
    """8-bit RGB PNG from a [1,3,H,W] tensor in [0,1]."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim != 4 or arr.shape[:2] != (1, 3):
        raise InvalidArgumentError("expected a [1,3,H,W] image tensor")
    u8 = np.clip(np.round(arr[0] * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(path)


def read_image_png(path) -> Tensor:
    """8-bit RGB PNG into a [1,3,H,W] tensor in [0,1]."""
    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return Tensor(arr.transpose(2, 0, 1)[None])
