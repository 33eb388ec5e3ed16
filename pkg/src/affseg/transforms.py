"""Dihedral xy-plane transforms with optional z-flip, for volumes and affinities.

A transform is a quarter-turn count in the xy-plane followed by axis flips
(x, then y, then z).  The 16 combinations with k in {0, 1} enumerate the full
symmetry group of the (anisotropic) box: the 8 square-dihedral variants times
an optional z-flip.  Composition and inversion stay inside that set.

Affinity channels ride along: transforming an affinity volume permutes its
channels so that each output channel's offset is the transformed offset.  A
transformed offset pointing in a negative direction is canonicalized by
negation, and the channel grid is shifted along the affected axes so that the
value attached to an unordered voxel pair is preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volumes import (
    AffinityVolume,
    EdgeOffset,
    ImageVolume,
    SegVolume,
    offset_slices,
)

__all__ = ["DihedralTransform", "transform_image", "transform_affinity"]

# Quarter-turn in the xy-plane acting on (dz, dy, dx) column vectors:
# (dz, dy, dx) -> (dz, -dx, dy), matching np.rot90 on the (y, x) axes.
_ROT = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=np.int64)
_FLIP_X = np.diag([1, 1, -1]).astype(np.int64)
_FLIP_Y = np.diag([1, -1, 1]).astype(np.int64)
_FLIP_Z = np.diag([-1, 1, 1]).astype(np.int64)


@dataclass(frozen=True)
class DihedralTransform:
    """Rotation by k quarter-turns in the xy-plane, then flips along x, y, z."""

    k: int = 0
    flip_x: bool = False
    flip_y: bool = False
    flip_z: bool = False

    def __post_init__(self):
        if self.k not in (0, 1, 2, 3):
            raise ValueError(f"transform.k: quarter-turn count must be 0..3, got {self.k!r}")

    def matrix(self) -> np.ndarray:
        """Signed permutation acting on (dz, dy, dx) offsets."""
        m = np.linalg.matrix_power(_ROT, self.k)
        if self.flip_x:
            m = _FLIP_X @ m
        if self.flip_y:
            m = _FLIP_Y @ m
        if self.flip_z:
            m = _FLIP_Z @ m
        return m

    def apply_offset(self, off: EdgeOffset) -> EdgeOffset:
        dz, dy, dx = self.matrix() @ np.array(off.as_tuple(), dtype=np.int64)
        return EdgeOffset(int(dz), int(dy), int(dx))

    def compose(self, other: "DihedralTransform") -> "DihedralTransform":
        """The transform equivalent to applying ``other`` first, then ``self``."""
        return _from_matrix(self.matrix() @ other.matrix())

    def inverse(self) -> "DihedralTransform":
        return _from_matrix(self.matrix().T)

    @property
    def is_identity(self) -> bool:
        return self.k == 0 and not (self.flip_x or self.flip_y or self.flip_z)


def _canonical_table() -> dict[bytes, DihedralTransform]:
    table: dict[bytes, DihedralTransform] = {}
    for fz in (False, True):
        for fy in (False, True):
            for fx in (False, True):
                for k in (0, 1):
                    t = DihedralTransform(k, fx, fy, fz)
                    table[t.matrix().tobytes()] = t
    assert len(table) == 16
    return table


_CANONICAL = _canonical_table()


def _from_matrix(m: np.ndarray) -> DihedralTransform:
    try:
        return _CANONICAL[np.asarray(m, dtype=np.int64).tobytes()]
    except KeyError:
        raise ValueError("matrix is not a box symmetry reachable from this transform set") from None


def _apply_spatial(arr: np.ndarray, t: DihedralTransform) -> np.ndarray:
    """Apply t to the trailing (z, y, x) axes; leading axes pass through."""
    out = arr
    if t.k:
        out = np.rot90(out, t.k, axes=(-2, -1))
    if t.flip_x:
        out = np.flip(out, axis=-1)
    if t.flip_y:
        out = np.flip(out, axis=-2)
    if t.flip_z:
        out = np.flip(out, axis=-3)
    return np.ascontiguousarray(out)


def _permuted_voxel_size(vs, t: DihedralTransform):
    if vs is None:
        return None
    # Output axis a reads input axis argmax(|M[a]|); sizes follow that permutation.
    m = np.abs(t.matrix())
    src = m.argmax(axis=1)
    return tuple(vs[int(s)] for s in src)


def transform_image(vol: ImageVolume | SegVolume, t: DihedralTransform):
    """Pure voxel permutation of an image or label volume; odd k swaps x/y extents."""
    data = _apply_spatial(vol.data, t)
    vs = _permuted_voxel_size(vol.voxel_size_nm, t)
    if isinstance(vol, SegVolume):
        return SegVolume(data, voxel_size_nm=vs)
    return ImageVolume(data, voxel_size_nm=vs)


def transform_affinity(aff: AffinityVolume, t: DihedralTransform) -> AffinityVolume:
    """Transform an affinity volume, preserving edge identity.

    Each channel's grid is moved like an image; the channel is rerouted to the
    one whose offset equals the transformed offset.  When that offset comes out
    negated, the grid is additionally shifted by the canonical offset so the
    stored value stays attached to the same unordered voxel pair, and slots
    whose partner leaves the volume become 0.
    """
    moved = _apply_spatial(aff.data, t)
    out = np.zeros_like(moved)
    spatial = moved.shape[1:]
    for c, off in enumerate(aff.offsets):
        t_off = t.apply_offset(off)
        canon, negated = t_off.canonicalized()
        c_out = aff.offsets.index_of(canon)
        if not negated:
            out[c_out] = moved[c]
        else:
            # out[w] = moved[w + canon] for every w whose partner stays inside.
            anchor, partner = offset_slices(spatial, canon)
            out[c_out][anchor] = moved[c][partner]
    vs = _permuted_voxel_size(aff.voxel_size_nm, t)
    return AffinityVolume(out, aff.offsets, voxel_size_nm=vs)
