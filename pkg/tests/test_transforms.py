"""Dihedral transform group, image permutation, and affinity commutation tests."""

import numpy as np
import pytest

from affseg import (
    LONG_RANGE_OFFSETS,
    NN_OFFSETS,
    DihedralTransform,
    EdgeOffset,
    ImageVolume,
    SegVolume,
    affinities_from_labels,
    transform_affinity,
    transform_image,
)
from affseg.blend import tta_variants


def all_16():
    return tta_variants(16)


def test_identity_transform():
    t = DihedralTransform()
    assert t.is_identity
    vol = ImageVolume(np.random.default_rng(0).random((2, 3, 4)).astype(np.float32))
    assert np.array_equal(transform_image(vol, t).data, vol.data)


def test_flip_z_is_involution():
    t = DihedralTransform(flip_z=True)
    vol = ImageVolume(np.random.default_rng(1).random((3, 2, 2)).astype(np.float32))
    twice = transform_image(transform_image(vol, t), t)
    assert np.array_equal(twice.data, vol.data)


def test_quarter_turn_four_times_restores():
    vol = ImageVolume(np.random.default_rng(2).random((1, 2, 3)).astype(np.float32))
    t = DihedralTransform(k=1)
    out = vol
    for _ in range(4):
        out = transform_image(out, t)
    assert np.array_equal(out.data, vol.data)


def test_odd_k_swaps_lateral_extents():
    vol = ImageVolume(np.zeros((2, 3, 5), dtype=np.float32))
    out = transform_image(vol, DihedralTransform(k=1))
    assert out.data.shape == (2, 5, 3)


def test_transform_preserves_value_multiset():
    rng = np.random.default_rng(3)
    vol = ImageVolume(rng.random((2, 3, 4)).astype(np.float32))
    for t in all_16():
        out = transform_image(vol, t)
        assert np.array_equal(np.sort(out.data.ravel()), np.sort(vol.data.ravel()))


def test_seg_volume_transform_keeps_kind():
    seg = SegVolume(np.arange(8, dtype=np.uint64).reshape(2, 2, 2))
    out = transform_image(seg, DihedralTransform(k=1, flip_z=True))
    assert isinstance(out, SegVolume)
    assert out.data.dtype == np.uint64


def test_sixteen_variants_distinct_and_closed():
    variants = all_16()
    assert len(variants) == 16
    assert variants[0].is_identity
    mats = {t.matrix().tobytes() for t in variants}
    assert len(mats) == 16
    # Closure: every pairwise composition lands back in the set, and the
    # composed matrix is the matrix product.
    for a in variants:
        for b in variants:
            c = a.compose(b)
            assert c.matrix().tobytes() in mats
            assert np.array_equal(c.matrix(), a.matrix() @ b.matrix())


def test_inverse_matrices_and_round_trip():
    rng = np.random.default_rng(4)
    vol = ImageVolume(rng.random((2, 4, 3)).astype(np.float32))
    for t in all_16():
        inv = t.inverse()
        assert np.array_equal(inv.matrix() @ t.matrix(), np.eye(3, dtype=int))
        back = transform_image(transform_image(vol, t), inv)
        assert np.array_equal(back.data, vol.data)


def test_compose_matches_sequential_application():
    rng = np.random.default_rng(5)
    vol = ImageVolume(rng.random((2, 3, 3)).astype(np.float32))
    variants = all_16()
    for a in variants:
        for b in variants:
            seq = transform_image(transform_image(vol, b), a)
            comp = transform_image(vol, a.compose(b))
            assert np.array_equal(seq.data, comp.data)


def test_apply_offset_follows_matrix():
    t = DihedralTransform(k=1)
    assert t.apply_offset(EdgeOffset(0, 0, 1)) == EdgeOffset(0, -1, 0)
    assert t.apply_offset(EdgeOffset(0, 1, 0)) == EdgeOffset(0, 0, 1)
    tz = DihedralTransform(flip_z=True)
    assert tz.apply_offset(EdgeOffset(1, 0, 0)) == EdgeOffset(-1, 0, 0)


def test_transform_affinity_identity():
    rng = np.random.default_rng(6)
    lab = SegVolume(rng.integers(0, 4, size=(2, 3, 4), dtype=np.uint64))
    aff = affinities_from_labels(lab)
    out = transform_affinity(aff, DihedralTransform())
    assert np.array_equal(out.data, aff.data)


def test_quarter_turn_reroutes_xy_channels():
    rng = np.random.default_rng(7)
    lab = SegVolume(rng.integers(1, 4, size=(1, 4, 4), dtype=np.uint64))
    aff = affinities_from_labels(lab)
    out = transform_affinity(aff, DihedralTransform(k=1))
    # The rotated volume's y-offset channel carries what was the x-offset
    # channel's content (up to the grid permutation), and vice versa; verify
    # through the commutation identity on this single case.
    expected = affinities_from_labels(transform_image(lab, DihedralTransform(k=1)))
    assert np.array_equal(out.data, expected.data)
    assert not np.array_equal(aff.data[0], aff.data[1])  # channels actually moved


@pytest.mark.parametrize("offsets", [NN_OFFSETS, LONG_RANGE_OFFSETS], ids=["nn", "long"])
def test_affinity_commutation_all_variants(offsets):
    # transform_affinity(affinities_from_labels(L)) == affinities_from_labels(transform_image(L))
    rng = np.random.default_rng(8)
    for _ in range(5):
        shape = tuple(int(v) for v in rng.integers(2, 6, size=3))
        lab = SegVolume(rng.integers(0, 5, size=shape, dtype=np.uint64))
        aff = affinities_from_labels(lab, offsets)
        for t in all_16():
            lhs = transform_affinity(aff, t)
            rhs = affinities_from_labels(transform_image(lab, t), offsets)
            assert np.array_equal(lhs.data, rhs.data)
            assert [o.as_tuple() for o in lhs.offsets] == [o.as_tuple() for o in rhs.offsets]


def test_transform_affinity_round_trip():
    rng = np.random.default_rng(9)
    lab = SegVolume(rng.integers(0, 6, size=(3, 4, 5), dtype=np.uint64))
    aff = affinities_from_labels(lab, NN_OFFSETS)
    for t in all_16():
        back = transform_affinity(transform_affinity(aff, t), t.inverse())
        assert np.array_equal(back.data, aff.data)
