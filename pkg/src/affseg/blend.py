"""Bump-weighted blending of overlapping patches and test-time-augmentation averaging.

The bump log-weight at local coordinate r in a patch of extent p is
``-sum_a (c_a (1 - c_a))**(-t_a)`` with the half-voxel normalized coordinate
``c_a = (r_a + 0.5) / p_a``: strictly maximal at the patch center, decaying
toward every border.  The widely printed positive-exponent form grows toward
the borders instead, contradicting the stated intent of center-weighting; it
remains available behind ``literal_formula`` for comparison only.

Weights spanning hundreds of orders of magnitude underflow as raw
exponentials, so blending runs in log space with a per-voxel maximum shift:
one pass records each voxel's best log-weight, a second accumulates
``exp(logw - best)`` numerators and denominators in float64, in fixed patch
order.  Per voxel the result is a convex combination of covering patches.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .transforms import DihedralTransform, transform_affinity
from .volumes import AffinityVolume, ImageVolume, VolumeShape

__all__ = [
    "BlendProfile",
    "PatchLayout",
    "bump_logweight",
    "patch_logweights",
    "blend_patches",
    "tta_variants",
    "tta_average",
]


@dataclass(frozen=True)
class BlendProfile:
    """Per-axis decay exponents (z, y, x) and the patch overlap fraction."""

    t: tuple[float, float, float] = (1.5, 1.5, 1.5)
    overlap: float = 0.5
    literal_formula: bool = False

    def __post_init__(self):
        t = tuple(float(v) for v in self.t)
        if len(t) != 3 or any(v <= 0 for v in t):
            raise ValueError(f"profile.t: three positive exponents required, got {self.t!r}")
        object.__setattr__(self, "t", t)
        if not (0.0 < self.overlap < 1.0):
            raise ValueError(f"profile.overlap: must lie in (0, 1), got {self.overlap!r}")


def _axis_logweight(n: int, t: float, literal: bool) -> np.ndarray:
    c = (np.arange(n, dtype=np.float64) + 0.5) / n
    if literal:
        # Printed form: positive exponent over unnormalized coordinates.
        r = np.arange(n, dtype=np.float64) + 0.5
        return (r * (n - r)) ** (-t)
    return -((c * (1.0 - c)) ** (-t))


def bump_logweight(
    r: tuple[float, float, float],
    p: tuple[int, int, int],
    t: tuple[float, float, float] = (1.5, 1.5, 1.5),
    *,
    literal: bool = False,
) -> float:
    """Log of the bump weight at local coordinate r of a patch with extents p (both z, y, x).

    Coordinates may be fractional; the continuous patch center is r = p/2 - 0.5.
    """
    total = 0.0
    for r_a, p_a, t_a in zip(r, p, t):
        if not (0 <= r_a < p_a):
            raise ValueError(f"bump_logweight: coordinate {r!r} outside patch extents {p!r}")
        if literal:
            rc = r_a + 0.5
            total += (rc * (p_a - rc)) ** (-t_a)
        else:
            c = (r_a + 0.5) / p_a
            total += -((c * (1.0 - c)) ** (-t_a))
    return total


def patch_logweights(p: tuple[int, int, int], profile: BlendProfile) -> np.ndarray:
    """The full (p_z, p_y, p_x) log-weight array; separable, so built per axis."""
    az, ay, ax = (
        _axis_logweight(n, t, profile.literal_formula) for n, t in zip(p, profile.t)
    )
    return az[:, None, None] + ay[None, :, None] + ax[None, None, :]


@dataclass(frozen=True)
class PatchLayout:
    """Patch origins tiling a volume; consecutive origins step by floor(p * (1 - overlap))."""

    volume_shape: VolumeShape
    patch_shape: tuple[int, int, int]
    origins: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        p = tuple(int(v) for v in self.patch_shape)
        vol = (self.volume_shape.z, self.volume_shape.y, self.volume_shape.x)
        if len(p) != 3 or any(v < 1 for v in p):
            raise ValueError(f"layout.patch_shape: positive extents required, got {self.patch_shape!r}")
        if any(pa > na for pa, na in zip(p, vol)):
            raise ValueError(f"layout.patch_shape: patch {p} exceeds volume {vol}")
        origins = tuple(tuple(int(v) for v in o) for o in self.origins)
        if not origins:
            raise ValueError("layout.origins: at least one patch required")
        for o in origins:
            if any(v < 0 or v + pa > na for v, pa, na in zip(o, p, vol)):
                raise ValueError(f"layout.origins: patch at {o} leaves volume {vol}")
        object.__setattr__(self, "patch_shape", p)
        object.__setattr__(self, "origins", origins)

    @classmethod
    def regular(
        cls,
        volume_shape: VolumeShape,
        patch_shape: tuple[int, int, int],
        overlap: float = 0.5,
    ) -> "PatchLayout":
        """Grid with stride max(1, floor(p * (1 - overlap))) and a final clamped origin per axis."""
        if not (0.0 < overlap < 1.0):
            raise ValueError(f"layout.overlap: must lie in (0, 1), got {overlap!r}")
        vol = (volume_shape.z, volume_shape.y, volume_shape.x)
        axes = []
        for n, p in zip(vol, patch_shape):
            stride = max(1, int(np.floor(p * (1.0 - overlap))))
            xs = list(range(0, n - p + 1, stride))
            if xs[-1] != n - p:
                xs.append(n - p)
            axes.append(xs)
        origins = tuple(itertools.product(*axes))
        return cls(volume_shape, tuple(patch_shape), origins)


def _patch_region(origin, p):
    return tuple(slice(o, o + e) for o, e in zip(origin, p))


def blend_patches(patches, layout: PatchLayout, profile: BlendProfile):
    """Normalized bump-weighted average of (origin, volume) patches.

    All patches must share a kind (image, or affinity with equal offsets) and
    the layout's patch shape.  Accumulation order is the given list order.
    """
    if not patches:
        raise ValueError("blend_patches: no patches given")
    p = layout.patch_shape
    vol = (layout.volume_shape.z, layout.volume_shape.y, layout.volume_shape.x)
    first = patches[0][1]
    is_aff = isinstance(first, AffinityVolume)
    offsets = first.offsets if is_aff else None

    logw = patch_logweights(p, profile)
    maxlog = np.full(vol, -np.inf, dtype=np.float64)
    checked = []
    for origin, vol_patch in patches:
        if is_aff != isinstance(vol_patch, AffinityVolume):
            raise ValueError("blend_patches: mixed image and affinity patches")
        if is_aff and tuple(vol_patch.offsets) != tuple(offsets):
            raise ValueError("blend_patches: inconsistent affinity offsets across patches")
        spatial = vol_patch.data.shape[1:] if is_aff else vol_patch.data.shape
        if tuple(spatial) != p:
            raise ValueError(
                f"blend_patches: patch at {tuple(origin)} has shape {tuple(spatial)}, "
                f"layout expects {p}"
            )
        origin = tuple(int(v) for v in origin)
        if any(o < 0 or o + e > n for o, e, n in zip(origin, p, vol)):
            raise ValueError(f"blend_patches: patch at {origin} leaves volume {vol}")
        region = _patch_region(origin, p)
        np.maximum(maxlog[region], logw, out=maxlog[region])
        checked.append((origin, vol_patch))

    if np.any(np.isneginf(maxlog)):
        n_holes = int(np.isneginf(maxlog).sum())
        raise ValueError(f"blend_patches: {n_holes} voxels not covered by any patch")

    lead = (len(offsets),) if is_aff else ()
    num = np.zeros(lead + vol, dtype=np.float64)
    den = np.zeros(vol, dtype=np.float64)
    for origin, vol_patch in checked:
        region = _patch_region(origin, p)
        w = np.exp(logw - maxlog[region])
        den[region] += w
        if is_aff:
            num[(slice(None),) + region] += vol_patch.data.astype(np.float64) * w
        else:
            num[region] += vol_patch.data.astype(np.float64) * w

    out = np.clip(num / den, 0.0, 1.0).astype(np.float32)
    vs = first.voxel_size_nm
    if is_aff:
        return AffinityVolume(out, offsets, voxel_size_nm=vs)
    return ImageVolume(out, voxel_size_nm=vs)


def tta_variants(n: int = 16) -> list[DihedralTransform]:
    """The 8 square-dihedral transforms, or all 16 with the z-flip; identity first."""
    if n not in (8, 16):
        raise ValueError(f"tta_variants: variant count must be 8 or 16, got {n!r}")
    z_flips = (False,) if n == 8 else (False, True)
    variants = [
        DihedralTransform(k, fx, fy, fz)
        for fz in z_flips
        for fy in (False, True)
        for fx in (False, True)
        for k in (0, 1)
    ]
    assert variants[0].is_identity and len(set(variants)) == n
    return variants


def tta_average(affs: list[tuple[DihedralTransform, AffinityVolume]]) -> AffinityVolume:
    """Undo each variant's transform and average the results voxel-wise."""
    if not affs:
        raise ValueError("tta_average: no variants given")
    total = None
    offsets = None
    shape = None
    vs = None
    for t, aff in affs:
        restored = transform_affinity(aff, t.inverse())
        if total is None:
            offsets, shape, vs = restored.offsets, restored.data.shape, restored.voxel_size_nm
            total = restored.data.astype(np.float64)
        else:
            if tuple(restored.offsets) != tuple(offsets) or restored.data.shape != shape:
                raise ValueError("tta_average: variants disagree on shape or offsets")
            total += restored.data
    mean = np.clip(total / len(affs), 0.0, 1.0).astype(np.float32)
    return AffinityVolume(mean, offsets, voxel_size_nm=vs)
