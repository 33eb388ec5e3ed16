"""Seeded synthetic ground truth and affinity corruption.

The generator builds anisotropic Voronoi label volumes: sites drawn uniformly
in continuous coordinates, each voxel labeled by its nearest site under a
weighted Euclidean metric.  The default weights (z:5, y:1, x:1) mimic the
axial anisotropy of serial-section stacks.  Cells are convex, which makes the
expected behavior of downstream stages provable on these phantoms.

Corruption perturbs affinities per in-bounds edge: a Bernoulli value flip
(v -> 1 - v) followed by additive Gaussian noise, clamped back to [0, 1].
Out-of-bounds slots stay 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volumes import AffinityVolume, SegVolume, VolumeShape, inbounds_mask

__all__ = ["SynthSpec", "NoiseSpec", "voronoi_labels", "corrupt_affinity"]


@dataclass(frozen=True)
class SynthSpec:
    shape: VolumeShape
    n_sites: int
    anisotropy: tuple[float, float, float] = (5.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.shape.channels is not None:
            raise ValueError("synth.shape: label volumes are 3-D, channels not allowed")
        if self.n_sites < 1:
            raise ValueError(f"synth.n_sites: need at least 1 site, got {self.n_sites}")
        w = tuple(float(v) for v in self.anisotropy)
        if len(w) != 3 or any(v <= 0 for v in w):
            raise ValueError(f"synth.anisotropy: three positive weights required, got {self.anisotropy!r}")
        object.__setattr__(self, "anisotropy", w)


@dataclass(frozen=True)
class NoiseSpec:
    flip_prob: float = 0.0
    gauss_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        # The closed upper end is allowed so that flip_prob = 1 gives the
        # exact-complement corruption; it is well-defined and useful in tests.
        if not (0.0 <= self.flip_prob <= 1.0):
            raise ValueError(f"noise.flip_prob: must lie in [0, 1], got {self.flip_prob!r}")
        if self.gauss_sigma < 0.0:
            raise ValueError(f"noise.gauss_sigma: must be >= 0, got {self.gauss_sigma!r}")


def voronoi_labels(s: SynthSpec) -> SegVolume:
    """Anisotropic Voronoi labeling; labels are 1..n_sites, empty cells allowed.

    Distance ties go to the lowest site index (running strict-minimum argmin).
    """
    rng = np.random.default_rng(s.seed)
    extents = np.array([s.shape.z, s.shape.y, s.shape.x], dtype=np.float64)
    sites = rng.uniform(0.0, 1.0, size=(s.n_sites, 3)) * extents
    w = np.asarray(s.anisotropy, dtype=np.float64)

    zz = np.arange(s.shape.z, dtype=np.float64)
    yy = np.arange(s.shape.y, dtype=np.float64)
    xx = np.arange(s.shape.x, dtype=np.float64)
    best = np.full((s.shape.z, s.shape.y, s.shape.x), np.inf, dtype=np.float64)
    label = np.zeros(best.shape, dtype=np.uint64)
    for i, (sz, sy, sx) in enumerate(sites):
        d2 = (
            (w[0] * (zz - sz))[:, None, None] ** 2
            + (w[1] * (yy - sy))[None, :, None] ** 2
            + (w[2] * (xx - sx))[None, None, :] ** 2
        )
        closer = d2 < best
        best[closer] = d2[closer]
        label[closer] = i + 1
    return SegVolume(label)


def corrupt_affinity(aff: AffinityVolume, n: NoiseSpec) -> AffinityVolume:
    """Flip each in-bounds edge with probability flip_prob, then add clamped Gaussian noise."""
    rng = np.random.default_rng(n.seed)
    data = aff.data.astype(np.float32, copy=True)
    mask = inbounds_mask(aff.data.shape[1:], aff.offsets)
    if n.flip_prob > 0.0:
        flips = rng.random(size=data.shape) < n.flip_prob
        flips &= mask
        data[flips] = 1.0 - data[flips]
    if n.gauss_sigma > 0.0:
        noise = rng.normal(0.0, n.gauss_sigma, size=data.shape).astype(np.float32)
        data[mask] = np.clip(data[mask] + noise[mask], 0.0, 1.0)
    return AffinityVolume(data, aff.offsets, voxel_size_nm=aff.voxel_size_nm)
