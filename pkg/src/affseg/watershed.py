"""Edge-weighted steepest-ascent watershed over nearest-neighbor affinities.

The procedure is fixed as five phases and is this package's normative
definition (the literature delegates the details to implementations):

1. clamp: weights >= t_max become 1; then weights <= t_min are removed;
2. steepest ascent: each voxel's parent is its maximum-weight surviving
   incident edge, ties broken in the order +x, +y, +z, -x, -y, -z; a voxel
   with no surviving edge is a singleton root;
3. basins: connected components of the parent links plus every surviving
   weight-1 edge;
4. size filter: region-graph edges visited in descending max-connecting-weight
   order (ties by ascending basin-id pair); a pair merges when that weight is
   >= t_size_thresh and the smaller current basin is below t_size_voxels;
5. relabel 1..K in first-voxel scan order.

Thresholds may be absolute values in [0, 1] or percentiles of the in-bounds
affinity distribution, resolved with the exact nearest-rank percentile.
Dust removal (small segments to background) runs after the phases by default
and can be deferred to after agglomeration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .volumes import (
    NN_OFFSETS,
    AffinityVolume,
    EdgeOffset,
    SegVolume,
    inbounds_mask,
    offset_slices,
    percentile,
)

__all__ = [
    "ThresholdSpec",
    "WatershedParams",
    "ResolvedWatershedParams",
    "resolve_params",
    "run_watershed",
    "remove_dust",
    "relabel_scan_order",
]


@dataclass(frozen=True)
class ThresholdSpec:
    """Either an absolute affinity threshold in [0, 1] or a percentile in [0, 100]."""

    value: float
    is_percentile: bool = False

    def __post_init__(self):
        v = float(self.value)
        if self.is_percentile:
            if not (0.0 <= v <= 100.0):
                raise ValueError(f"threshold: percentile must lie in [0, 100], got {v!r}")
        elif not (0.0 <= v <= 1.0):
            raise ValueError(f"threshold: absolute value must lie in [0, 1], got {v!r}")
        object.__setattr__(self, "value", v)

    @classmethod
    def absolute(cls, v: float) -> "ThresholdSpec":
        return cls(v, is_percentile=False)

    @classmethod
    def percentile(cls, q: float) -> "ThresholdSpec":
        return cls(q, is_percentile=True)

    @classmethod
    def parse(cls, text: str) -> "ThresholdSpec":
        """"80%" -> percentile 80; bare floats are absolute."""
        s = str(text).strip()
        try:
            if s.endswith("%"):
                return cls.percentile(float(s[:-1]))
            return cls.absolute(float(s))
        except ValueError as exc:
            raise ValueError(f"threshold: cannot parse {text!r} ({exc})") from None

    def __str__(self) -> str:
        return f"{self.value:g}%" if self.is_percentile else f"{self.value:g}"


@dataclass(frozen=True)
class WatershedParams:
    """Watershed thresholds; the defaults are percentile specs 1% / 80% / (800, 20%) / 600."""

    t_min: ThresholdSpec = ThresholdSpec.percentile(1.0)
    t_max: ThresholdSpec = ThresholdSpec.percentile(80.0)
    t_size_voxels: int = 800
    t_size_thresh: ThresholdSpec = ThresholdSpec.percentile(20.0)
    t_dust: int = 600

    def __post_init__(self):
        if self.t_size_voxels < 0:
            raise ValueError(f"t_size_voxels: must be >= 0, got {self.t_size_voxels}")
        if self.t_dust < 0:
            raise ValueError(f"t_dust: must be >= 0, got {self.t_dust}")


@dataclass(frozen=True)
class ResolvedWatershedParams:
    """All thresholds as absolute affinity values."""

    t_min: float
    t_max: float
    t_size_voxels: int
    t_size_thresh: float
    t_dust: int

    def __post_init__(self):
        for name in ("t_min", "t_max", "t_size_thresh"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}: resolved threshold must lie in [0, 1], got {v!r}")
        if self.t_min > self.t_max:
            raise ValueError(
                f"t_min: resolved value {self.t_min!r} exceeds t_max {self.t_max!r}"
            )
        if self.t_size_voxels < 0 or self.t_dust < 0:
            raise ValueError("t_size_voxels/t_dust: counts must be >= 0")


def _require_nn(aff: AffinityVolume) -> None:
    if tuple(aff.offsets) != tuple(NN_OFFSETS):
        raise ValueError("affinity volume: watershed requires the nearest-neighbor offset preset")


def resolve_params(
    p: WatershedParams,
    aff: AffinityVolume,
    *,
    max_samples: int | None = None,
    seed: int = 0,
) -> ResolvedWatershedParams:
    """Replace percentile specs by exact percentiles of the in-bounds affinity pool."""
    _require_nn(aff)
    specs = (p.t_min, p.t_max, p.t_size_thresh)
    if any(s.is_percentile for s in specs):
        pool = aff.data[inbounds_mask(aff.data.shape[1:], aff.offsets)]
        if pool.size == 0:
            raise ValueError("affinity volume: no in-bounds edges to resolve percentiles against")
        resolved = [
            percentile(pool, s.value, max_samples=max_samples, seed=seed)
            if s.is_percentile
            else s.value
            for s in specs
        ]
    else:
        resolved = [s.value for s in specs]
    return ResolvedWatershedParams(
        t_min=resolved[0],
        t_max=resolved[1],
        t_size_voxels=p.t_size_voxels,
        t_size_thresh=resolved[2],
        t_dust=p.t_dust,
    )


def relabel_scan_order(labels: np.ndarray) -> np.ndarray:
    """Relabel distinct values to 1..K ordered by each value's first scan-order voxel."""
    vals, first_idx, inv = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    rank = np.empty(len(vals), dtype=np.uint64)
    rank[np.argsort(first_idx, kind="stable")] = np.arange(1, len(vals) + 1, dtype=np.uint64)
    return rank[inv].reshape(labels.shape)


class _DisjointSets:
    """Array union-find with size tracking; merged roots keep the smaller id."""

    def __init__(self, sizes: np.ndarray):
        self.parent = np.arange(len(sizes), dtype=np.int64)
        self.size = sizes.astype(np.int64, copy=True)

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return int(i)

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


def run_watershed(
    aff: AffinityVolume,
    params: WatershedParams | ResolvedWatershedParams,
    *,
    apply_dust: bool = True,
    max_samples: int | None = None,
) -> SegVolume:
    """Run the five phases; percentile params are resolved against ``aff`` first.

    ``apply_dust=False`` skips dust removal so it can run after agglomeration.
    """
    _require_nn(aff)
    if isinstance(params, WatershedParams):
        r = resolve_params(params, aff, max_samples=max_samples)
    else:
        r = params

    spatial = aff.data.shape[1:]
    nz, ny, nx = spatial
    n_vox = nz * ny * nx
    w = aff.data.astype(np.float64)
    inb = inbounds_mask(spatial, aff.offsets)

    # Phase 1: clamp to 1 at/above t_max, then drop edges at/below t_min.
    w[inb & (w >= r.t_max)] = 1.0
    alive = inb & (w > r.t_min)

    # Phase 2: per voxel, strongest surviving incident edge in the fixed
    # tie order +x, +y, +z, -x, -y, -z (argmax returns the first maximum).
    stack = np.full((6,) + spatial, -np.inf, dtype=np.float64)
    for c in range(3):
        stack[c][alive[c]] = w[c][alive[c]]
        off = aff.offsets[c]
        anchor, partner = offset_slices(spatial, EdgeOffset(-off.dz, -off.dy, -off.dx))
        stack[3 + c][anchor] = np.where(alive[c][partner], w[c][partner], -np.inf)
    direction = np.argmax(stack, axis=0)
    has_parent = stack.max(axis=0) > -np.inf

    flat = np.arange(n_vox, dtype=np.int64).reshape(spatial)
    delta = np.array([1, nx, nx * ny, -1, -nx, -nx * ny], dtype=np.int64)
    parent = flat + delta[direction]
    parent[~has_parent] = flat[~has_parent]

    # Phase 3: components of parent links plus surviving weight-1 edges.
    rows = [flat[has_parent]]
    cols = [parent[has_parent]]
    for c in range(3):
        ones = alive[c] & (w[c] == 1.0)
        rows.append(flat[ones])
        cols.append(flat[ones] + delta[c])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix(
        (np.ones(len(rows), dtype=bool), (rows, cols)), shape=(n_vox, n_vox)
    )
    _, comp = connected_components(graph, directed=False)
    prov = relabel_scan_order(comp.reshape(spatial)).astype(np.int64)

    # Phase 4: merge small basins along strong region-graph edges.
    merged = _size_filter(prov, w, alive, aff, r)

    # Phase 5: contiguous labels in first-voxel scan order.
    seg = SegVolume(relabel_scan_order(merged), voxel_size_nm=aff.voxel_size_nm)
    if apply_dust and r.t_dust > 0:
        seg = remove_dust(seg, r.t_dust)
    return seg


def _size_filter(
    prov: np.ndarray,
    w: np.ndarray,
    alive: np.ndarray,
    aff: AffinityVolume,
    r: ResolvedWatershedParams,
) -> np.ndarray:
    if r.t_size_voxels <= 0:
        return prov
    n_basins = int(prov.max())
    spatial = prov.shape

    pair_keys, pair_w = [], []
    for c, off in enumerate(aff.offsets):
        anchor, partner = offset_slices(spatial, off)
        mask = alive[c][anchor]
        a = prov[anchor][mask]
        b = prov[partner][mask]
        wv = w[c][anchor][mask]
        cross = a != b
        a, b, wv = a[cross], b[cross], wv[cross]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        pair_keys.append(lo * np.int64(n_basins + 1) + hi)
        pair_w.append(wv)
    keys = np.concatenate(pair_keys) if pair_keys else np.empty(0, dtype=np.int64)
    if keys.size == 0:
        return prov
    weights = np.concatenate(pair_w)

    # Max connecting weight per unordered basin pair.
    order = np.argsort(keys, kind="stable")
    keys, weights = keys[order], weights[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    uniq_keys = keys[starts]
    max_w = np.maximum.reduceat(weights, starts)
    lo = uniq_keys // (n_basins + 1)
    hi = uniq_keys % (n_basins + 1)

    # Descending weight, ties by ascending (lo, hi).
    visit = np.lexsort((hi, lo, -max_w))
    sizes = np.bincount(prov.ravel(), minlength=n_basins + 1)
    dsu = _DisjointSets(sizes)
    thresh = r.t_size_thresh
    limit = r.t_size_voxels
    for idx in visit:
        if max_w[idx] < thresh:
            break
        ra = dsu.find(int(lo[idx]))
        rb = dsu.find(int(hi[idx]))
        if ra == rb:
            continue
        if min(dsu.size[ra], dsu.size[rb]) < limit:
            dsu.union(ra, rb)
    root = np.empty(n_basins + 1, dtype=np.int64)
    for i in range(n_basins + 1):
        root[i] = dsu.find(i)
    return root[prov]


def remove_dust(seg: SegVolume, t_dust: int) -> SegVolume:
    """Relabel every segment smaller than t_dust voxels to background 0."""
    if t_dust < 0:
        raise ValueError(f"t_dust: must be >= 0, got {t_dust}")
    if t_dust == 0:
        return seg
    labels, inv, counts = np.unique(seg.data.ravel(), return_inverse=True, return_counts=True)
    keep = (counts >= t_dust) & (labels != 0)
    mapped = np.where(keep, labels, np.uint64(0))
    return SegVolume(mapped[inv].reshape(seg.data.shape), voxel_size_nm=seg.voxel_size_nm)
