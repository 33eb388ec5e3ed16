"""Affinity-graph segmentation toolkit.

Volumes and affinity fields, dihedral transforms and test-time-augmentation
averaging, edge-weighted watershed, mean-affinity agglomeration, VI / adapted
Rand metrics, simulated acquisition defects, bump-function patch blending,
synthetic Voronoi ground truth, and a pipeline CLI.
"""

from .agglo import (
    MergeLog,
    MergeRecord,
    RegionGraph,
    SweepRow,
    agglomerate,
    apply_merges,
    build_region_graph,
    sweep,
)
from .augment import (
    AugmentParams,
    DefectSpec,
    Rect,
    apply_defects,
    defects_from_json,
    defects_to_json,
    derive_rng,
    derive_seed,
    make_rng,
    misalign,
    missing_section,
    out_of_focus,
    sample_defects,
)
from .blend import (
    BlendProfile,
    PatchLayout,
    blend_patches,
    bump_logweight,
    patch_logweights,
    tta_average,
    tta_variants,
)
from .cli import PipelineConfig, robustness_sweep, run_pipeline
from .metrics import ContingencyTable, adapted_rand, contingency, variation_of_information
from .synth import NoiseSpec, SynthSpec, corrupt_affinity, voronoi_labels
from .transforms import DihedralTransform, transform_affinity, transform_image
from .volio import load_volume, save_volume
from .volumes import (
    LONG_RANGE_OFFSETS,
    NN_OFFSETS,
    SNEMI3D_VOXEL_SIZE_NM,
    AffinityVolume,
    EdgeOffset,
    EdgeOffsetSet,
    ImageVolume,
    SegVolume,
    VolumeShape,
    affinities_from_labels,
    inbounds_mask,
    offset_slices,
    percentile,
)
from .watershed import (
    ResolvedWatershedParams,
    ThresholdSpec,
    WatershedParams,
    relabel_scan_order,
    remove_dust,
    resolve_params,
    run_watershed,
)

__version__ = "0.1.0"
