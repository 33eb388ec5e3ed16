"""Simulated acquisition defects: misalignment, missing sections, out-of-focus slices.

Appliers are pure functions of (volume, spec); all randomness is concentrated
in sample_defects, which draws from a seeded PCG64 generator in a fixed,
documented order so identical seeds reproduce identical spec lists anywhere.

Misalignment is realized as offset cropping from an oversized canvas: the
output loses ``margin`` pixels per lateral side, and a displaced slice simply
reads its window at a shifted origin.  Nothing is invented at borders.  A
slip displaces one slice only; a translation displaces every slice at or
below (increasing z from) the chosen one.  Affinity targets are meant to be
regenerated from the transformed labels afterwards.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .volumes import ImageVolume, SegVolume, VolumeShape

__all__ = [
    "Rect",
    "DefectSpec",
    "AugmentParams",
    "make_rng",
    "derive_seed",
    "derive_rng",
    "misalign",
    "missing_section",
    "out_of_focus",
    "sample_defects",
    "apply_defects",
    "defects_to_json",
    "defects_from_json",
]

MISALIGN_KINDS = ("slip", "translation")
KINDS = MISALIGN_KINDS + ("missing", "blur")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in a slice: rows [y0, y0+h), columns [x0, x0+w)."""

    y0: int
    x0: int
    h: int
    w: int

    def __post_init__(self):
        if self.y0 < 0 or self.x0 < 0 or self.h < 0 or self.w < 0:
            raise ValueError(f"rect: negative origin or extent in {self!r}")

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.h), slice(self.x0, self.x0 + self.w)


@dataclass(frozen=True)
class DefectSpec:
    """One defect: a misalignment (slip/translation), a missing section, or a blur.

    region None means the whole slice (missing/blur kinds only).
    """

    kind: str
    z: int
    dx: int = 0
    dy: int = 0
    region: Rect | None = None
    fill: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"defect.kind: unknown kind {self.kind!r}")
        if self.z < 0:
            raise ValueError(f"defect.z: slice index must be >= 0, got {self.z}")
        if not (0 <= self.dx <= 17 and 0 <= self.dy <= 17):
            raise ValueError(f"defect.dx/dy: displacements must lie in 0..17, got ({self.dx}, {self.dy})")
        if not (0.0 <= self.sigma <= 5.0):
            raise ValueError(f"defect.sigma: must lie in [0, 5], got {self.sigma!r}")
        if not (0.0 <= self.fill <= 1.0):
            raise ValueError(f"defect.fill: must lie in [0, 1], got {self.fill!r}")
        if self.kind in MISALIGN_KINDS and self.region is not None:
            raise ValueError("defect.region: misalignment defects act on whole slices")


@dataclass(frozen=True)
class AugmentParams:
    """Sampler limits; the defaults are displacement 0..17, up to 5 defect slices, sigma in [0, 5]."""

    max_displacement: int = 17
    max_missing_slices: int = 5
    max_blur_slices: int = 5
    sigma_range: tuple[float, float] = (0.0, 5.0)
    margin: int = 17

    def __post_init__(self):
        if not (0 <= self.max_displacement <= 17):
            raise ValueError(f"params.max_displacement: must lie in 0..17, got {self.max_displacement}")
        if self.max_missing_slices < 0 or self.max_blur_slices < 0:
            raise ValueError("params.max_*_slices: counts must be >= 0")
        lo, hi = (float(v) for v in self.sigma_range)
        if not (0.0 <= lo <= hi <= 5.0):
            raise ValueError(f"params.sigma_range: need 0 <= lo <= hi <= 5, got {self.sigma_range!r}")
        object.__setattr__(self, "sigma_range", (lo, hi))
        if self.margin < self.max_displacement:
            raise ValueError(
                f"params.margin: must be >= max_displacement "
                f"({self.max_displacement}), got {self.margin}"
            )


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; same seed, same draw sequence, any platform."""
    return np.random.default_rng(seed)


def derive_seed(seed: int, stream: str) -> int:
    """Sub-seed for a named stream of a global seed, stable across runs and platforms."""
    digest = hashlib.sha256(f"{seed}:{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, stream: str) -> np.random.Generator:
    """Generator over the named substream of a seed."""
    return np.random.default_rng(derive_seed(seed, stream))


def _check_slice(z: int, nz: int) -> None:
    if not (0 <= z < nz):
        raise ValueError(f"defect.z: slice {z} outside volume with {nz} slices")


def _region_slices(region: Rect | None, ny: int, nx: int) -> tuple[slice, slice]:
    if region is None:
        return slice(0, ny), slice(0, nx)
    if region.y0 + region.h > ny or region.x0 + region.w > nx:
        raise ValueError(f"defect.region: {region!r} exceeds slice bounds ({ny}, {nx})")
    return region.slices()


def misalign(
    image: ImageVolume,
    label: SegVolume,
    spec: DefectSpec,
    margin: int,
) -> tuple[ImageVolume, SegVolume]:
    """Crop both volumes from the oversized canvas, displacing the affected slices.

    Unaffected slices read their window at (margin, margin); affected ones at
    (margin + dy, margin + dx).  Output lateral extents shrink by 2 * margin.
    """
    if spec.kind not in MISALIGN_KINDS:
        raise ValueError(f"misalign: expected a slip/translation spec, got kind {spec.kind!r}")
    if margin < max(spec.dx, spec.dy):
        raise ValueError(
            f"misalign: margin {margin} is smaller than displacement ({spec.dx}, {spec.dy})"
        )
    nz, ny, nx = image.data.shape
    if label.data.shape != image.data.shape:
        raise ValueError(
            f"misalign: image shape {image.data.shape} != label shape {label.data.shape}"
        )
    _check_slice(spec.z, nz)
    out_y, out_x = ny - 2 * margin, nx - 2 * margin
    if out_y < 1 or out_x < 1:
        raise ValueError(
            f"misalign: canvas ({ny}, {nx}) too small for margin {margin} per side"
        )

    def crop(arr: np.ndarray) -> np.ndarray:
        base = arr[:, margin : margin + out_y, margin : margin + out_x].copy()
        shifted = arr[
            :,
            margin + spec.dy : margin + spec.dy + out_y,
            margin + spec.dx : margin + spec.dx + out_x,
        ]
        if spec.kind == "slip":
            base[spec.z] = shifted[spec.z]
        else:
            base[spec.z :] = shifted[spec.z :]
        return base

    vs = image.voxel_size_nm
    return (
        ImageVolume(crop(image.data), voxel_size_nm=vs),
        SegVolume(crop(label.data), voxel_size_nm=label.voxel_size_nm),
    )


def missing_section(image: ImageVolume, spec: DefectSpec) -> ImageVolume:
    """Replace the region of slice z with the constant fill value."""
    if spec.kind != "missing":
        raise ValueError(f"missing_section: expected a missing spec, got kind {spec.kind!r}")
    nz, ny, nx = image.data.shape
    _check_slice(spec.z, nz)
    ys, xs = _region_slices(spec.region, ny, nx)
    out = image.data.copy()
    out[spec.z, ys, xs] = np.float32(spec.fill)
    return ImageVolume(out, voxel_size_nm=image.voxel_size_nm)


def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def out_of_focus(image: ImageVolume, spec: DefectSpec) -> ImageVolume:
    """Gaussian-blur the region of slice z (separable, radius ceil(3 sigma), reflect borders).

    The whole slice is blurred first and the region pasted from it, so pixels
    just inside a rectangular region still see context from outside it.
    """
    if spec.kind != "blur":
        raise ValueError(f"out_of_focus: expected a blur spec, got kind {spec.kind!r}")
    nz, ny, nx = image.data.shape
    _check_slice(spec.z, nz)
    ys, xs = _region_slices(spec.region, ny, nx)
    if spec.sigma == 0.0:
        return image
    kernel = _gauss_kernel(spec.sigma)
    plane = image.data[spec.z].astype(np.float64)
    plane = correlate1d(plane, kernel, axis=0, mode="reflect")
    plane = correlate1d(plane, kernel, axis=1, mode="reflect")
    out = image.data.copy()
    out[spec.z, ys, xs] = np.clip(plane[ys, xs], 0.0, 1.0).astype(np.float32)
    return ImageVolume(out, voxel_size_nm=image.voxel_size_nm)


def _sample_rect(rng: np.random.Generator, ny: int, nx: int) -> Rect:
    # Sides uniform over 25%..75% of each extent (integer endpoints, inclusive).
    lo_h, hi_h = math.ceil(0.25 * ny), max(math.ceil(0.25 * ny), math.floor(0.75 * ny))
    lo_w, hi_w = math.ceil(0.25 * nx), max(math.ceil(0.25 * nx), math.floor(0.75 * nx))
    h = int(rng.integers(lo_h, hi_h + 1))
    w = int(rng.integers(lo_w, hi_w + 1))
    y0 = int(rng.integers(0, ny - h + 1))
    x0 = int(rng.integers(0, nx - w + 1))
    return Rect(y0, x0, h, w)


def sample_defects(
    rng: np.random.Generator,
    shape: VolumeShape,
    p: AugmentParams = AugmentParams(),
) -> list[DefectSpec]:
    """Draw one misalignment plus 0..max missing and blur defects for a volume.

    The draw order is fixed: misalignment (kind coin, z, dx, dy); missing
    count, its distinct z-locations, then per defect a full/rectangle coin,
    rectangle dims if any, and the fill; blur defects likewise with sigma.
    ``shape`` is the shape the specs will be applied to (after any cropping).
    """
    nz, ny, nx = shape.z, shape.y, shape.x
    if nz < 1:
        raise ValueError("sample_defects: need at least one slice")
    specs: list[DefectSpec] = []

    kind = MISALIGN_KINDS[int(rng.integers(0, 2))]
    z = int(rng.integers(0, nz))
    dx = int(rng.integers(0, p.max_displacement + 1))
    dy = int(rng.integers(0, p.max_displacement + 1))
    specs.append(DefectSpec(kind, z, dx=dx, dy=dy))

    for defect_kind, max_slices in (
        ("missing", p.max_missing_slices),
        ("blur", p.max_blur_slices),
    ):
        count = int(rng.integers(0, min(max_slices, nz) + 1))
        z_locs = rng.choice(nz, size=count, replace=False)
        for zi in z_locs:
            region = None if int(rng.integers(0, 2)) == 0 else _sample_rect(rng, ny, nx)
            if defect_kind == "missing":
                fill = float(rng.uniform(0.0, 1.0))
                specs.append(DefectSpec("missing", int(zi), region=region, fill=fill))
            else:
                sigma = float(rng.uniform(p.sigma_range[0], p.sigma_range[1]))
                specs.append(DefectSpec("blur", int(zi), region=region, sigma=sigma))
    return specs


def apply_defects(
    image: ImageVolume,
    label: SegVolume,
    specs: list[DefectSpec],
    margin: int,
) -> tuple[ImageVolume, SegVolume]:
    """Apply a spec list: the misalignment first (cropping), then slice defects.

    The specs' z and region coordinates refer to the cropped output shape.
    """
    misaligns = [s for s in specs if s.kind in MISALIGN_KINDS]
    if len(misaligns) > 1:
        raise ValueError(f"apply_defects: at most one misalignment, got {len(misaligns)}")
    if misaligns:
        image, label = misalign(image, label, misaligns[0], margin)
    for s in specs:
        if s.kind == "missing":
            image = missing_section(image, s)
        elif s.kind == "blur":
            image = out_of_focus(image, s)
    return image, label


def defects_to_json(specs: list[DefectSpec]) -> list[dict]:
    out = []
    for s in specs:
        d: dict = {"kind": s.kind, "z": s.z}
        if s.kind in MISALIGN_KINDS:
            d["dx"] = s.dx
            d["dy"] = s.dy
        else:
            d["region"] = (
                None
                if s.region is None
                else {"y0": s.region.y0, "x0": s.region.x0, "h": s.region.h, "w": s.region.w}
            )
            if s.kind == "missing":
                d["fill"] = s.fill
            else:
                d["sigma"] = s.sigma
        out.append(d)
    return out


def defects_from_json(objs: list[dict]) -> list[DefectSpec]:
    specs = []
    for d in objs:
        kind = d.get("kind")
        if kind not in KINDS:
            raise ValueError(f"defect.kind: unknown kind {kind!r}")
        region = d.get("region")
        rect = None if region is None else Rect(region["y0"], region["x0"], region["h"], region["w"])
        specs.append(
            DefectSpec(
                kind,
                int(d["z"]),
                dx=int(d.get("dx", 0)),
                dy=int(d.get("dy", 0)),
                region=rect,
                fill=float(d.get("fill", 0.0)),
                sigma=float(d.get("sigma", 0.0)),
            )
        )
    return specs
