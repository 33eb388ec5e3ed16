"""Greedy mean-affinity agglomeration of supervoxels.

A region graph stores, per adjacent supervoxel pair, the running sum and count
of the nearest-neighbor affinities on edges joining them; the pair's score is
the mean.  Agglomeration repeatedly merges the highest-scoring pair (ties:
ascending (min_id, max_id)) until the best score drops below the threshold;
merges fire at score == threshold, which makes threshold 1 meaningful for
perfect binary affinities.  Merged pairs combine component-wise, so a new
score is a count-weighted average of two old ones and the merge-score sequence
is non-increasing.

Each merge allocates a fresh node id (above every initial id), so pair entries
are immutable once created: a queued pair is stale exactly when it has left
the edge map.  The recorded log replays cheaply at any higher threshold, which
is what makes threshold sweeps cheap.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .metrics import adapted_rand, contingency, variation_of_information
from .volumes import NN_OFFSETS, AffinityVolume, SegVolume, offset_slices

__all__ = [
    "RegionGraph",
    "MergeRecord",
    "MergeLog",
    "SweepRow",
    "build_region_graph",
    "agglomerate",
    "apply_merges",
    "sweep",
]

# Float slack for the non-increasing score assertion; combining two means can
# round at most a couple of ulps above the true (bounded) value.
_SCORE_SLACK = 1e-12


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class RegionGraph:
    """Supervoxel sizes plus (sum, count) affinity accumulators per adjacent pair."""

    sizes: dict[int, int]
    edges: dict[tuple[int, int], tuple[float, int]]

    def __post_init__(self):
        for node, size in self.sizes.items():
            if node == 0 or size <= 0:
                raise ValueError(f"region graph: bad node {node} (size {size})")
        for (a, b), (total, count) in self.edges.items():
            if a >= b:
                raise ValueError(f"region graph: edge key ({a}, {b}) not ascending")
            if a not in self.sizes or b not in self.sizes:
                raise ValueError(f"region graph: edge ({a}, {b}) references unknown node")
            if count <= 0 or total < 0 or total > count * (1.0 + _SCORE_SLACK):
                raise ValueError(f"region graph: edge ({a}, {b}) has invalid mean")

    @property
    def n_nodes(self) -> int:
        return len(self.sizes)

    def mean(self, a: int, b: int) -> float:
        total, count = self.edges[_key(a, b)]
        return total / count


class MergeRecord(NamedTuple):
    id_a: int
    id_b: int
    score: float
    new_id: int


@dataclass(frozen=True)
class MergeLog:
    """Ordered merges with non-increasing scores, plus the resolved final id map."""

    merges: tuple[MergeRecord, ...]
    threshold: float
    id_map: dict[int, int]

    def __post_init__(self):
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError(f"merge log: threshold must lie in [0, 1], got {self.threshold!r}")
        seen: set[int] = set()
        prev = None
        for rec in self.merges:
            if rec.new_id in seen or rec.new_id in (rec.id_a, rec.id_b):
                raise ValueError(f"merge log: new id {rec.new_id} collides with an earlier id")
            if prev is not None and rec.score > prev + _SCORE_SLACK:
                raise ValueError(
                    f"merge log: scores must be non-increasing, {rec.score!r} after {prev!r}"
                )
            seen.update((rec.id_a, rec.id_b, rec.new_id))
            prev = rec.score
        object.__setattr__(self, "merges", tuple(MergeRecord(*m) for m in self.merges))

    def final_id(self, node: int) -> int:
        return self.id_map.get(node, node)


def build_region_graph(seg: SegVolume, aff: AffinityVolume) -> RegionGraph:
    """Accumulate (weight, 1) per NN edge joining distinct nonzero labels."""
    if tuple(aff.offsets) != tuple(NN_OFFSETS):
        raise ValueError("affinity volume: region graph requires the nearest-neighbor preset")
    if seg.data.shape != aff.data.shape[1:]:
        raise ValueError(
            f"build_region_graph: shape mismatch, seg {seg.data.shape} "
            f"vs affinity {aff.data.shape[1:]}"
        )
    lab = seg.data.astype(np.int64)
    labels, counts = np.unique(lab, return_counts=True)
    sizes = {int(l): int(c) for l, c in zip(labels, counts) if l != 0}

    all_keys, all_w = [], []
    top = int(labels.max(initial=0)) + 1
    for c, off in enumerate(aff.offsets):
        anchor, partner = offset_slices(lab.shape, off)
        a = lab[anchor].ravel()
        b = lab[partner].ravel()
        wv = aff.data[c][anchor].ravel().astype(np.float64)
        keep = (a != b) & (a != 0) & (b != 0)
        a, b, wv = a[keep], b[keep], wv[keep]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        all_keys.append(lo * top + hi)
        all_w.append(wv)
    edges: dict[tuple[int, int], tuple[float, int]] = {}
    if all_keys:
        keys = np.concatenate(all_keys)
        wv = np.concatenate(all_w)
        if keys.size:
            order = np.argsort(keys, kind="stable")
            keys, wv = keys[order], wv[order]
            starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
            sums = np.add.reduceat(wv, starts)
            cnts = np.diff(np.r_[starts, keys.size])
            for k, s, n in zip(keys[starts], sums, cnts):
                edges[(int(k) // top, int(k) % top)] = (float(s), int(n))
    return RegionGraph(sizes, edges)


# Queue keys pack (descending mean, ascending id pair) into one integer:
# a float in [0, 1] compares like its IEEE bit pattern, so inverting the bits
# and prepending them to the 32-bit ids yields the same total order as the
# tuple (-mean, a, b) while keeping heap comparisons single-object (boxed
# tuple entries are several times slower at volume scale).
_PACK = struct.Struct("<d")
_BITS_INV = (1 << 64) - 1
_ID_LIMIT = 1 << 32


def _heap_key(mean: float, a: int, b: int) -> int:
    bits = int.from_bytes(_PACK.pack(mean), "little")
    return ((_BITS_INV - bits) << 64) | (a << 32) | b


def agglomerate(g: RegionGraph, threshold: float) -> MergeLog:
    """Greedy merge of the highest-mean pair until the best mean drops below threshold.

    Pair ordering: descending mean, ties by ascending (min_id, max_id).  A
    queued pair is stale exactly when a merge has consumed one of its nodes
    (fresh merge ids make pair entries immutable), so stale entries are
    detected by absence from the edge map and skipped.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"agglomerate: threshold must lie in [0, 1], got {threshold!r}")
    sizes = dict(g.sizes)
    if sizes and max(sizes) + len(sizes) >= _ID_LIMIT:
        raise ValueError("agglomerate: node ids (plus merge ids) must stay below 2**32")
    # The merge loop keys edges by the packed pair (a << 32) | b, which is also
    # the low half of the queue key, so freshness checks need no tuple building.
    edges = {(a << 32) | b: v for (a, b), v in g.edges.items()}
    adj: dict[int, set[int]] = {n: set() for n in sizes}
    for a, b in g.edges:
        adj[a].add(b)
        adj[b].add(a)

    # Pairs scoring below the stop threshold can never be merged, only drained;
    # the heap pops in descending score order, so leaving them out preserves
    # the merge sequence exactly while shrinking the queue.
    heap = [
        _heap_key(s / c, a, b) for (a, b), (s, c) in g.edges.items() if s / c >= threshold
    ]
    heapq.heapify(heap)
    next_id = max(sizes, default=0) + 1

    heappop, heappush = heapq.heappop, heapq.heappush
    edges_get, edges_pop = edges.get, edges.pop
    id_mask = _ID_LIMIT - 1
    pair_mask = (1 << 64) - 1
    merges: list[MergeRecord] = []
    prev_score = None
    while heap:
        key = heappop(heap)
        pk = key & pair_mask
        entry = edges_get(pk)
        if entry is None:
            continue
        score = entry[0] / entry[1]
        if score < threshold:
            break
        assert prev_score is None or score <= prev_score + _SCORE_SLACK
        prev_score = score
        b = pk & id_mask
        a = pk >> 32

        del edges[pk]
        na = adj.pop(a)
        nb = adj.pop(b)
        na.discard(b)
        nb.discard(a)
        if len(na) < len(nb):
            na, nb = nb, na
        na |= nb
        new = next_id
        next_id += 1
        merges.append(MergeRecord(a, b, score, new))

        sizes[new] = sizes.pop(a) + sizes.pop(b)
        adj[new] = na
        for x in na:
            ea = edges_pop((a << 32) | x if a < x else (x << 32) | a, None)
            eb = edges_pop((b << 32) | x if b < x else (x << 32) | b, None)
            if ea is None:
                combined = eb
            elif eb is None:
                combined = ea
            else:
                combined = (ea[0] + eb[0], ea[1] + eb[1])
            edges[(x << 32) | new] = combined
            ax = adj[x]
            ax.discard(a)
            ax.discard(b)
            ax.add(new)
            mean = combined[0] / combined[1]
            if mean >= threshold:
                heappush(heap, _heap_key(mean, x, new))

    id_map: dict[int, int] = {}
    for rec in merges:
        id_map[rec.id_a] = rec.new_id
        id_map[rec.id_b] = rec.new_id
    final: dict[int, int] = {}
    for node in id_map:
        x = node
        while x in id_map:
            x = id_map[x]
        final[node] = x
    return MergeLog(tuple(merges), threshold, final)


def apply_merges(seg: SegVolume, log: MergeLog, threshold: float) -> SegVolume:
    """Apply the log prefix with score >= threshold; equals a fresh run at that threshold."""
    if threshold < log.threshold:
        raise ValueError(
            f"apply_merges: threshold {threshold!r} is below the log's "
            f"stopping threshold {log.threshold!r}"
        )
    mapping: dict[int, int] = {}
    for rec in log.merges:
        if rec.score < threshold:
            break
        mapping[rec.id_a] = rec.new_id
        mapping[rec.id_b] = rec.new_id

    labels = np.unique(seg.data)
    lut = np.empty(labels.shape, dtype=np.uint64)
    for i, lab in enumerate(labels):
        x = int(lab)
        while x in mapping:
            x = mapping[x]
        lut[i] = x
    idx = np.searchsorted(labels, seg.data.ravel())
    out = lut[idx].reshape(seg.data.shape)
    return SegVolume(out, voxel_size_nm=seg.voxel_size_nm)


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    vi_split: float
    vi_merge: float
    vi_total: float
    rand_error: float


def sweep(seg: SegVolume, gt: SegVolume, log: MergeLog, thresholds) -> list[SweepRow]:
    """Metrics of apply_merges(seg, log, t) against gt, one row per threshold."""
    ths = [float(t) for t in thresholds]
    if any(ths[i] < ths[i + 1] for i in range(len(ths) - 1)):
        raise ValueError("sweep: thresholds must be sorted descending")
    rows = []
    for t in ths:
        merged = apply_merges(seg, log, t)
        table = contingency(merged, gt)
        vi_s, vi_m, vi_t = variation_of_information(table)
        err, _, _ = adapted_rand(table)
        rows.append(SweepRow(t, vi_s, vi_m, vi_t, err))
    return rows
