"""On-disk volume format: a small JSON header next to a raw payload.

A volume named ``foo`` is the pair ``foo.json`` + ``foo.raw``.  The header
carries ``shape`` ([z,y,x] or [c,z,y,x]), ``dtype`` (one of u8/u16/u32/u64/f32),
optional ``voxel_size_nm`` ([z,y,x]), and ``offsets`` (list of [dz,dy,dx],
required exactly when the shape is 4-D).  The payload is the array bytes,
little-endian, C-order.  The loader picks the volume kind from the header:
3-D float is an image, 3-D unsigned integer is a segmentation, 4-D float with
offsets is an affinity volume.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .volumes import (
    AffinityVolume,
    EdgeOffsetSet,
    ImageVolume,
    SegVolume,
)

__all__ = ["load_volume", "save_volume"]

_DTYPES = {
    "u8": np.dtype("<u1"),
    "u16": np.dtype("<u2"),
    "u32": np.dtype("<u4"),
    "u64": np.dtype("<u8"),
    "f32": np.dtype("<f4"),
}


def _base_path(path: str) -> str:
    base, ext = os.path.splitext(path)
    return base if ext in (".json", ".raw") else path


def _parse_shape(header: dict) -> tuple[int, ...]:
    shape = header.get("shape")
    if not isinstance(shape, list) or len(shape) not in (3, 4):
        raise ValueError(f"shape: expected a list of 3 or 4 extents, got {shape!r}")
    dims = []
    for v in shape:
        if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
            raise ValueError(f"shape: extents must be positive integers, got {shape!r}")
        dims.append(v)
    return tuple(dims)


def _parse_voxel_size(header: dict):
    vs = header.get("voxel_size_nm")
    if vs is None:
        return None
    if not isinstance(vs, list) or len(vs) != 3:
        raise ValueError(f"voxel_size_nm: expected [z, y, x], got {vs!r}")
    return tuple(float(v) for v in vs)


def _parse_offsets(header: dict, ndim: int):
    raw = header.get("offsets")
    if ndim == 3:
        if raw is not None:
            raise ValueError("offsets: only valid for 4-D (affinity) volumes")
        return None
    if raw is None:
        raise ValueError("offsets: required for 4-D (affinity) volumes")
    if not isinstance(raw, list):
        raise ValueError(f"offsets: expected a list of [dz, dy, dx], got {raw!r}")
    try:
        return EdgeOffsetSet.from_tuples(tuple(tuple(int(v) for v in o) for o in raw))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"offsets: {exc}") from None


def load_volume(path: str) -> ImageVolume | SegVolume | AffinityVolume:
    """Load a volume from ``<base>.json`` + ``<base>.raw``.

    ``path`` may be the base name or either component file.
    """
    base = _base_path(path)
    json_path, raw_path = base + ".json", base + ".raw"
    if not os.path.exists(json_path):
        raise FileNotFoundError(f"volume header not found: {json_path}")
    if not os.path.exists(raw_path):
        raise FileNotFoundError(f"volume payload not found: {raw_path}")

    with open(json_path, encoding="utf-8") as fh:
        try:
            header = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"header: not valid JSON ({exc})") from None
    if not isinstance(header, dict):
        raise ValueError("header: expected a JSON object")

    shape = _parse_shape(header)
    dtype_name = header.get("dtype")
    if dtype_name not in _DTYPES:
        raise ValueError(
            f"dtype: unknown {dtype_name!r}, expected one of {sorted(_DTYPES)}"
        )
    dtype = _DTYPES[dtype_name]
    voxel_size = _parse_voxel_size(header)
    offsets = _parse_offsets(header, len(shape))

    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise ValueError(
            f"payload: size mismatch, header declares {expected} bytes "
            f"({shape} x {dtype_name}) but {raw_path} has {actual}"
        )
    data = np.fromfile(raw_path, dtype=dtype).reshape(shape)

    if len(shape) == 4:
        if dtype_name != "f32":
            raise ValueError(f"dtype: affinity volumes must be f32, got {dtype_name!r}")
        return AffinityVolume(data, offsets, voxel_size_nm=voxel_size)
    if dtype.kind == "f":
        return ImageVolume(data, voxel_size_nm=voxel_size)
    return SegVolume(data, voxel_size_nm=voxel_size)


def save_volume(vol: ImageVolume | SegVolume | AffinityVolume, path: str) -> None:
    """Write ``<base>.json`` + ``<base>.raw`` for the given volume."""
    base = _base_path(path)
    if isinstance(vol, AffinityVolume):
        dtype_name = "f32"
        header_shape = list(vol.data.shape)
    elif isinstance(vol, SegVolume):
        dtype_name = "u64"
        header_shape = list(vol.data.shape)
    elif isinstance(vol, ImageVolume):
        dtype_name = "f32"
        header_shape = list(vol.data.shape)
    else:
        raise ValueError(f"volume: unsupported type {type(vol).__name__}")

    header = {"shape": header_shape, "dtype": dtype_name}
    if vol.voxel_size_nm is not None:
        header["voxel_size_nm"] = list(vol.voxel_size_nm)
    if isinstance(vol, AffinityVolume):
        header["offsets"] = [list(o.as_tuple()) for o in vol.offsets]

    payload = np.ascontiguousarray(vol.data).astype(_DTYPES[dtype_name], copy=False)
    with open(base + ".json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2)
        fh.write("\n")
    payload.tofile(base + ".raw")
