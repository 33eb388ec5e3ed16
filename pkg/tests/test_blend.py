"""Blending tests: bump weights, patch layouts, overlap-add blending, TTA."""

import numpy as np
import pytest

from affseg import (
    AffinityVolume,
    BlendProfile,
    ImageVolume,
    NN_OFFSETS,
    PatchLayout,
    SegVolume,
    VolumeShape,
    affinities_from_labels,
    blend_patches,
    bump_logweight,
    patch_logweights,
    transform_affinity,
    tta_average,
    tta_variants,
)


def test_bump_center_value_is_minus_24():
    # p = (2, 2, 2), center r = (0.5, 0.5, 0.5): c = 0.5 per axis, so each
    # axis contributes -(0.25 ** -1.5) = -8.
    assert bump_logweight((0.5, 0.5, 0.5), (2, 2, 2)) == -24.0


def test_bump_symmetry():
    p = (3, 5, 8)
    for z in range(3):
        for y in range(5):
            for x in range(8):
                mirrored = (2 - z, 4 - y, 7 - x)
                assert bump_logweight((z, y, x), p) == pytest.approx(
                    bump_logweight(mirrored, p), rel=1e-12
                )


def test_bump_decays_monotonically_from_center():
    p = (1, 1, 16)
    vals = [bump_logweight((0, 0, x), p) for x in range(16)]
    for x in range(7):
        assert vals[x] < vals[x + 1]
    assert vals[7] == pytest.approx(vals[8], rel=1e-12)
    for x in range(8, 15):
        assert vals[x] > vals[x + 1]


def test_literal_formula_grows_toward_borders():
    p = (1, 1, 16)
    assert bump_logweight((0, 0, 0), p) < bump_logweight((0, 0, 7), p)
    assert bump_logweight((0, 0, 0), p, literal=True) > bump_logweight(
        (0, 0, 7), p, literal=True
    )


def test_bump_rejects_out_of_patch_coordinates():
    with pytest.raises(ValueError):
        bump_logweight((0, 0, -0.1), (1, 1, 4))
    with pytest.raises(ValueError):
        bump_logweight((0, 0, 4), (1, 1, 4))


def test_patch_logweights_matches_pointwise_calls():
    p = (2, 3, 4)
    table = patch_logweights(p, BlendProfile())
    assert table.shape == p
    for z in range(2):
        for y in range(3):
            for x in range(4):
                assert table[z, y, x] == bump_logweight((z, y, x), p)


def test_profile_validation():
    with pytest.raises(ValueError):
        BlendProfile(t=(0.0, 1.5, 1.5))
    with pytest.raises(ValueError):
        BlendProfile(overlap=1.0)
    with pytest.raises(ValueError):
        BlendProfile(overlap=0.0)


def test_regular_layout_stride_and_clamp():
    layout = PatchLayout.regular(VolumeShape(8, 8, 9), (4, 4, 4), overlap=0.5)
    zs = sorted({o[0] for o in layout.origins})
    xs = sorted({o[2] for o in layout.origins})
    assert zs == [0, 2, 4]
    assert xs == [0, 2, 4, 5]  # final origin clamped to n - p
    covered = np.zeros((8, 8, 9), dtype=bool)
    for oz, oy, ox in layout.origins:
        covered[oz : oz + 4, oy : oy + 4, ox : ox + 4] = True
    assert covered.all()


def test_layout_validation():
    with pytest.raises(ValueError):
        PatchLayout.regular(VolumeShape(8, 8, 8), (4, 4, 4), overlap=1.5)
    with pytest.raises(ValueError):
        PatchLayout(VolumeShape(4, 4, 4), (5, 4, 4), ((0, 0, 0),))
    with pytest.raises(ValueError):
        PatchLayout(VolumeShape(4, 4, 4), (4, 4, 4), ())
    with pytest.raises(ValueError):
        PatchLayout(VolumeShape(4, 4, 4), (2, 2, 2), ((0, 0, 3),))


def test_single_full_patch_is_identity():
    rng = np.random.default_rng(55)
    data = rng.random((3, 4, 5)).astype(np.float32)
    layout = PatchLayout(VolumeShape(3, 4, 5), (3, 4, 5), ((0, 0, 0),))
    out = blend_patches([((0, 0, 0), ImageVolume(data))], layout, BlendProfile())
    assert np.array_equal(out.data, data)


def test_constant_patches_blend_to_constant():
    value = np.float32(0.375)
    layout = PatchLayout.regular(VolumeShape(6, 6, 6), (4, 4, 4), overlap=0.5)
    patches = [
        (o, ImageVolume(np.full((4, 4, 4), value, dtype=np.float32)))
        for o in layout.origins
    ]
    out = blend_patches(patches, layout, BlendProfile())
    assert np.max(np.abs(out.data.astype(np.float64) - float(value))) <= 1e-12


def test_blend_is_order_independent():
    rng = np.random.default_rng(56)
    layout = PatchLayout.regular(VolumeShape(5, 8, 8), (4, 4, 4), overlap=0.5)
    patches = [
        (o, ImageVolume(rng.random((4, 4, 4)).astype(np.float32)))
        for o in layout.origins
    ]
    forward = blend_patches(patches, layout, BlendProfile())
    backward = blend_patches(patches[::-1], layout, BlendProfile())
    diff = np.abs(forward.data.astype(np.float64) - backward.data.astype(np.float64))
    assert diff.max() <= 1e-12


def test_blend_prefers_patch_centers_over_borders():
    # Two overlapping 1-D patches sample a smooth ramp; each is corrupted by
    # an additive error growing toward its own borders.  In the overlap the
    # bump weighting leans on whichever patch is nearer its center, so the
    # blended error stays below either patch's error there.
    n, p = 32, 20
    gt = np.arange(n) / (n - 1) * 0.6 + 0.1
    r = np.arange(p) + 0.5
    proximity = 1.0 - np.minimum(r, p - r) / (p / 2)

    def corrupted(lo):
        return (gt[lo : lo + p] + 0.2 * proximity).astype(np.float32)

    a, b = corrupted(0), corrupted(12)
    layout = PatchLayout(VolumeShape(1, 1, n), (1, 1, p), ((0, 0, 0), (0, 0, 12)))
    out = blend_patches(
        [
            ((0, 0, 0), ImageVolume(a.reshape(1, 1, -1))),
            ((0, 0, 12), ImageVolume(b.reshape(1, 1, -1))),
        ],
        layout,
        BlendProfile(),
    )
    overlap = slice(12, 20)
    blend_err = np.abs(out.data[0, 0, overlap] - gt[overlap])
    err_a = np.abs(a[12:20] - gt[overlap])
    err_b = np.abs(b[0:8] - gt[overlap])
    assert blend_err.max() < min(err_a.max(), err_b.max())
    assert blend_err.mean() < min(err_a.mean(), err_b.mean())


def test_blend_errors():
    layout = PatchLayout(VolumeShape(4, 4, 4), (2, 2, 2), ((0, 0, 0),))
    patch = ImageVolume(np.zeros((2, 2, 2), dtype=np.float32))
    with pytest.raises(ValueError, match="not covered"):
        blend_patches([((0, 0, 0), patch)], layout, BlendProfile())
    with pytest.raises(ValueError, match="no patches"):
        blend_patches([], layout, BlendProfile())
    with pytest.raises(ValueError, match="layout expects"):
        blend_patches(
            [((0, 0, 0), ImageVolume(np.zeros((3, 3, 3), dtype=np.float32)))],
            layout,
            BlendProfile(),
        )
    aff = AffinityVolume(np.zeros((3, 2, 2, 2), dtype=np.float32), NN_OFFSETS)
    with pytest.raises(ValueError, match="mixed"):
        blend_patches([((0, 0, 0), patch), ((2, 2, 2), aff)], layout, BlendProfile())


def test_blend_affinity_patches_keep_offsets():
    layout = PatchLayout.regular(VolumeShape(4, 4, 4), (4, 4, 2), overlap=0.5)
    patches = [
        (o, AffinityVolume(np.full((3, 4, 4, 2), 0.25, dtype=np.float32), NN_OFFSETS))
        for o in layout.origins
    ]
    out = blend_patches(patches, layout, BlendProfile())
    assert isinstance(out, AffinityVolume)
    assert tuple(out.offsets) == tuple(NN_OFFSETS)
    assert np.max(np.abs(out.data.astype(np.float64) - 0.25)) <= 1e-12


def test_extreme_exponent_stays_finite():
    table = patch_logweights((1, 1, 10_000), BlendProfile(t=(8.0, 8.0, 8.0)))
    assert np.isfinite(table).all()
    n, p = 15_000, 10_000
    ramp = (np.arange(n) / (n - 1)).astype(np.float32)
    layout = PatchLayout(
        VolumeShape(1, 1, n), (1, 1, p), ((0, 0, 0), (0, 0, n - p))
    )
    patches = [
        (o, ImageVolume(ramp[o[2] : o[2] + p].reshape(1, 1, -1))) for o in layout.origins
    ]
    out = blend_patches(patches, layout, BlendProfile(t=(8.0, 8.0, 8.0)))
    assert np.isfinite(out.data).all()
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_tta_variants_counts_and_identity_first():
    for n in (8, 16):
        variants = tta_variants(n)
        assert len(variants) == n
        assert len(set(variants)) == n
        assert variants[0].is_identity
    assert all(not t.flip_z for t in tta_variants(8))
    with pytest.raises(ValueError):
        tta_variants(12)


def label_affinity(seed, shape=(4, 6, 6)):
    rng = np.random.default_rng(seed)
    labels = SegVolume(rng.integers(0, 5, size=shape, dtype=np.uint64))
    return affinities_from_labels(labels)


def test_tta_average_of_identity_is_identity():
    aff = label_affinity(57)
    out = tta_average([(tta_variants(16)[0], aff)])
    assert np.array_equal(out.data, aff.data)


def test_tta_average_recovers_original_from_all_variants():
    # Affinities from labels commute with the transforms bit-exactly, so each
    # variant restores to the original and the 16-way mean is the original.
    aff = label_affinity(58, shape=(4, 5, 5))
    pairs = [(t, transform_affinity(aff, t)) for t in tta_variants(16)]
    out = tta_average(pairs)
    assert np.array_equal(out.data, aff.data)


def test_tta_average_is_voxelwise_mean():
    aff = label_affinity(59)
    rng = np.random.default_rng(60)
    other_data = rng.random(aff.data.shape).astype(np.float32)
    other_data *= aff.data > -1  # keep dtype, no-op mask
    other = AffinityVolume(other_data, aff.offsets)
    identity = tta_variants(16)[0]
    out = tta_average([(identity, aff), (identity, other)])
    expected = np.clip(
        (aff.data.astype(np.float64) + other_data.astype(np.float64)) / 2.0, 0.0, 1.0
    ).astype(np.float32)
    assert np.array_equal(out.data, expected)


def test_tta_average_validation():
    aff = label_affinity(61)
    small = label_affinity(62, shape=(3, 5, 5))
    identity = tta_variants(16)[0]
    with pytest.raises(ValueError):
        tta_average([])
    with pytest.raises(ValueError, match="disagree"):
        tta_average([(identity, aff), (identity, small)])
