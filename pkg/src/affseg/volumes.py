"""Dense volume containers and affinity-graph primitives.

Arrays are indexed (z, y, x) in C order with x fastest; affinity grids carry
a leading channel axis, one channel per edge offset.  Volumes are treated as
immutable: the wrapped array is exposed through a read-only view and every
operation returns a new volume, so shared instances are safe to use from
concurrent code.

Conventions baked in here and relied on everywhere else:

* segmentation label 0 is background/boundary and never binds an affinity
  edge;
* an affinity entry whose partner voxel falls outside the volume is stored
  as 0 and must be masked out by consumers (see :func:`inbounds_mask`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil

import numpy as np

__all__ = [
    "VolumeShape",
    "ImageVolume",
    "SegVolume",
    "EdgeOffset",
    "EdgeOffsetSet",
    "NN_OFFSETS",
    "LONG_RANGE_OFFSETS",
    "AffinityVolume",
    "SNEMI3D_VOXEL_SIZE_NM",
    "affinities_from_labels",
    "inbounds_mask",
    "offset_slices",
    "percentile",
]

# Serial-section EM voxel size used as the conventional default, (z, y, x) nm.
SNEMI3D_VOXEL_SIZE_NM = (29.0, 6.0, 6.0)


def _readonly(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class VolumeShape:
    """Voxel extents (z, y, x), plus a channel count for affinity grids."""

    z: int
    y: int
    x: int
    channels: int | None = None

    def __post_init__(self):
        for name in ("z", "y", "x"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"shape.{name}: extent must be a positive integer, got {v!r}")
        if self.channels is not None and (not isinstance(self.channels, (int, np.integer)) or self.channels < 1):
            raise ValueError(f"shape.channels: must be a positive integer, got {self.channels!r}")
        if self.z * self.y * self.x * (self.channels or 1) >= 2**64:
            raise ValueError("shape: total voxel count does not fit in 64 bits")

    @property
    def spatial(self) -> tuple[int, int, int]:
        return (self.z, self.y, self.x)

    @property
    def voxels(self) -> int:
        return self.z * self.y * self.x


def _check_voxel_size(vs):
    if vs is None:
        return None
    vs = tuple(float(v) for v in vs)
    if len(vs) != 3 or any(v <= 0 for v in vs):
        raise ValueError(f"voxel_size_nm: expected three positive values (z, y, x), got {vs!r}")
    return vs


@dataclass(frozen=True)
class ImageVolume:
    """Grayscale intensity volume, float32 in [0, 1], indexed (z, y, x)."""

    data: np.ndarray
    voxel_size_nm: tuple[float, float, float] | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"data: image volume must be 3-D (z, y, x), got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("data: image volume contains non-finite values")
        if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
            raise ValueError("data: image intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _readonly(arr))
        object.__setattr__(self, "voxel_size_nm", _check_voxel_size(self.voxel_size_nm))

    @property
    def shape(self) -> VolumeShape:
        z, y, x = self.data.shape
        return VolumeShape(z, y, x)


@dataclass(frozen=True)
class SegVolume:
    """Integer label volume, uint64, 0 = background; labels need not be contiguous."""

    data: np.ndarray
    voxel_size_nm: tuple[float, float, float] | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"data: label volume must be 3-D (z, y, x), got ndim={arr.ndim}")
        if arr.dtype.kind not in "ui":
            raise ValueError(f"data: label volume must be integer-typed, got {arr.dtype}")
        if arr.dtype.kind == "i" and arr.size and int(arr.min()) < 0:
            raise ValueError("data: labels must be non-negative")
        arr = np.ascontiguousarray(arr, dtype=np.uint64)
        object.__setattr__(self, "data", _readonly(arr))
        object.__setattr__(self, "voxel_size_nm", _check_voxel_size(self.voxel_size_nm))

    @property
    def shape(self) -> VolumeShape:
        z, y, x = self.data.shape
        return VolumeShape(z, y, x)


@dataclass(frozen=True)
class EdgeOffset:
    """Integer displacement (dz, dy, dx); the edge at voxel v joins v and v + offset."""

    dz: int
    dy: int
    dx: int

    def __post_init__(self):
        for name in ("dz", "dy", "dx"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"offset.{name}: must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.dz == 0 and self.dy == 0 and self.dx == 0:
            raise ValueError("offset: (0, 0, 0) is not a valid edge offset")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.dz, self.dy, self.dx)

    @property
    def is_canonical(self) -> bool:
        """Canonical offsets have their first nonzero component (dz, dy, dx order) positive."""
        for v in (self.dz, self.dy, self.dx):
            if v != 0:
                return v > 0
        return False

    def canonicalized(self) -> tuple["EdgeOffset", bool]:
        """Return (canonical offset, negated) identifying the same unordered edge family."""
        if self.is_canonical:
            return self, False
        return EdgeOffset(-self.dz, -self.dy, -self.dx), True


@dataclass(frozen=True)
class EdgeOffsetSet:
    """Ordered, distinct edge offsets defining the channels of an affinity volume."""

    offsets: tuple[EdgeOffset, ...]

    def __post_init__(self):
        offs = tuple(self.offsets)
        if not offs:
            raise ValueError("offsets: at least one edge offset required")
        if len(set(o.as_tuple() for o in offs)) != len(offs):
            raise ValueError("offsets: duplicate edge offsets")
        object.__setattr__(self, "offsets", offs)

    def __len__(self) -> int:
        return len(self.offsets)

    def __iter__(self):
        return iter(self.offsets)

    def __getitem__(self, i: int) -> EdgeOffset:
        return self.offsets[i]

    def index_of(self, off: EdgeOffset) -> int:
        try:
            return self.offsets.index(off)
        except ValueError:
            raise ValueError(f"offsets: {off.as_tuple()} is not a channel of this offset set") from None

    @classmethod
    def from_tuples(cls, tuples) -> "EdgeOffsetSet":
        return cls(tuple(EdgeOffset(*t) for t in tuples))


# Nearest-neighbor channels: +x, +y, +z unit edges.
NN_OFFSETS = EdgeOffsetSet.from_tuples([(0, 0, 1), (0, 1, 0), (1, 0, 0)])

# Nearest-neighbor plus long edges spanning 3/9/27 voxels laterally and
# 2/3/4 voxels axially; 12 channels total.
LONG_RANGE_OFFSETS = EdgeOffsetSet.from_tuples(
    [
        (0, 0, 1), (0, 1, 0), (1, 0, 0),
        (0, 0, 3), (0, 0, 9), (0, 0, 27),
        (0, 3, 0), (0, 9, 0), (0, 27, 0),
        (2, 0, 0), (3, 0, 0), (4, 0, 0),
    ]
)


@dataclass(frozen=True)
class AffinityVolume:
    """Multi-channel edge-affinity field, float32 in [0, 1], indexed (c, z, y, x).

    Channel c at voxel v holds the affinity of the edge (v, v + offsets[c]).
    Entries whose partner voxel is out of bounds are stored as 0.
    """

    data: np.ndarray
    offsets: EdgeOffsetSet
    voxel_size_nm: tuple[float, float, float] | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 4:
            raise ValueError(f"data: affinity volume must be 4-D (c, z, y, x), got ndim={arr.ndim}")
        if arr.shape[0] != len(self.offsets):
            raise ValueError(
                f"data: channel count {arr.shape[0]} does not match offset count {len(self.offsets)}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("data: affinity volume contains non-finite values")
        if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
            raise ValueError("data: affinities must lie in [0, 1]")
        object.__setattr__(self, "data", _readonly(arr))
        object.__setattr__(self, "voxel_size_nm", _check_voxel_size(self.voxel_size_nm))

    @property
    def shape(self) -> VolumeShape:
        c, z, y, x = self.data.shape
        return VolumeShape(z, y, x, channels=c)

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]


def offset_slices(spatial_shape, off: EdgeOffset):
    """Index tuples (anchor, partner) selecting the in-bounds edges of one channel.

    ``data[anchor]`` are the entries whose partner voxel ``v + off`` is inside
    the volume; ``data[partner]`` addresses those partners.
    """
    anchor, partner = [], []
    for n, o in zip(spatial_shape, off.as_tuple()):
        if o >= 0:
            anchor.append(slice(0, max(0, n - o)))
            partner.append(slice(min(o, n), n))
        else:
            anchor.append(slice(min(-o, n), n))
            partner.append(slice(0, max(0, n + o)))
    return tuple(anchor), tuple(partner)


def inbounds_mask(spatial_shape, offsets: EdgeOffsetSet) -> np.ndarray:
    """Boolean (c, z, y, x) mask of affinity entries whose partner voxel is in bounds."""
    mask = np.zeros((len(offsets),) + tuple(spatial_shape), dtype=bool)
    for c, off in enumerate(offsets):
        anchor, _ = offset_slices(spatial_shape, off)
        mask[c][anchor] = True
    return mask


def affinities_from_labels(seg: SegVolume, offsets: EdgeOffsetSet = NN_OFFSETS) -> AffinityVolume:
    """Binary ground-truth affinities: 1 where an edge joins equal nonzero labels.

    Out-of-bounds partners and edges touching background (label 0) get 0.
    """
    lab = seg.data
    out = np.zeros((len(offsets),) + lab.shape, dtype=np.float32)
    for c, off in enumerate(offsets):
        anchor, partner = offset_slices(lab.shape, off)
        a = lab[anchor]
        b = lab[partner]
        out[c][anchor] = ((a == b) & (a != 0)).astype(np.float32)
    return AffinityVolume(out, offsets, voxel_size_nm=seg.voxel_size_nm)


def percentile(values, q: float, *, max_samples: int | None = None, seed: int = 0) -> float:
    """Nearest-rank percentile: sort ascending, take element ceil(q/100 * N) - 1.

    Exact by default (full sort).  For very large pools ``max_samples`` switches
    to a deterministic uniform subsample drawn with the given seed, trading
    exactness for memory/time; the result is then the percentile of the sample.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("percentile: empty value pool")
    if not (0.0 <= q <= 100.0):
        raise ValueError(f"percentile: q must be in [0, 100], got {q!r}")
    if max_samples is not None and arr.size > max_samples:
        rng = np.random.default_rng(seed)
        arr = rng.choice(arr, size=max_samples, replace=False)
    arr = np.sort(arr)
    # Rank computed in exact rational arithmetic so that integral percents
    # (1, 20, 80, ...) never drift across the ceil boundary.
    rank = ceil(Fraction(q) * arr.size / 100)
    return float(arr[max(0, rank - 1)])
