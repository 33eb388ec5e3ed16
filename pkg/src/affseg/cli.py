"""Command-line front end and pipeline orchestration.

Subcommands: synth, affin, ws, agglo, eval, augment, blend, pipeline, sweep.
Exit codes: 0 success, 2 validation error (bad arguments, bad config, missing
files), 3 runtime failure.  Tables go to stdout as TSV with one header row;
diagnostics go to stderr.

The pipeline runs synth -> affinities -> [corrupt] -> watershed -> agglomerate
-> eval from a flat INI config, writes every intermediate volume, and records
a JSON manifest with the config snapshot, resolved percentile thresholds,
stage wall times, sha256 hashes of every written file, and the metric rows.
All stage randomness derives from the single global seed keyed by stage name,
so adding one stage never perturbs another.  A `.partial` marker file exists
in the output directory while a run is in flight or after a failure.

The sweep subcommand reproduces misalignment-robustness tables: for each
displacement magnitude it regenerates affinities from a misaligned copy of
the ground truth (the degraded input), segments them, and scores against the
unshifted ground truth crop.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .agglo import agglomerate, apply_merges, build_region_graph, sweep
from .augment import (
    AugmentParams,
    DefectSpec,
    apply_defects,
    defects_to_json,
    derive_rng,
    derive_seed,
    misalign,
    sample_defects,
)
from .blend import BlendProfile, PatchLayout, blend_patches
from .metrics import adapted_rand, contingency, variation_of_information
from .synth import NoiseSpec, SynthSpec, corrupt_affinity, voronoi_labels
from .volio import load_volume, save_volume
from .volumes import (
    LONG_RANGE_OFFSETS,
    NN_OFFSETS,
    AffinityVolume,
    ImageVolume,
    SegVolume,
    VolumeShape,
    affinities_from_labels,
)
from .watershed import (
    ResolvedWatershedParams,
    ThresholdSpec,
    WatershedParams,
    remove_dust,
    resolve_params,
    run_watershed,
)

__all__ = ["PipelineConfig", "run_pipeline", "robustness_sweep", "main"]

_METRIC_COLUMNS = ("vi_split", "vi_merge", "vi", "are", "are_precision", "are_recall")


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_int_triple(text: str, what: str) -> tuple[int, int, int]:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 3:
        raise ValueError(f"{what}: expected three comma-separated values, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"{what}: expected integers, got {text!r}") from None


def _parse_float_triple(text: str, what: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 3:
        raise ValueError(f"{what}: expected three comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ValueError(f"{what}: expected numbers, got {text!r}") from None


def _parse_t_size(text: str) -> tuple[int, ThresholdSpec]:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 2:
        raise ValueError(f"t_size: expected 'voxels,threshold' (e.g. 800,20%), got {text!r}")
    try:
        voxels = int(parts[0])
    except ValueError:
        raise ValueError(f"t_size: voxel count must be an integer, got {parts[0]!r}") from None
    return voxels, ThresholdSpec.parse(parts[1])


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _metric_row(pred: SegVolume, gt: SegVolume) -> dict[str, float]:
    table = contingency(pred, gt)
    vi_s, vi_m, vi_t = variation_of_information(table)
    err, prec, rec = adapted_rand(table)
    return dict(zip(_METRIC_COLUMNS, (vi_s, vi_m, vi_t, err, prec, rec)))


def _print_table(columns, rows, out=None) -> None:
    stream = out if out is not None else sys.stdout
    stream.write("\t".join(columns) + "\n")
    for row in rows:
        stream.write("\t".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Pipeline config and orchestration


_PIPELINE_SECTIONS = {"pipeline", "inputs", "synth", "corrupt", "watershed", "agglo"}
_SECTION_KEYS = {
    "pipeline": {"seed", "threads", "out_dir"},
    "inputs": {"labels"},
    "synth": {"shape", "sites", "aniso"},
    "corrupt": {"flip_prob", "gauss_sigma"},
    "watershed": {"t_min", "t_max", "t_size", "t_dust", "defer_dust"},
    "agglo": {"threshold"},
}


@dataclass(frozen=True)
class PipelineConfig:
    """Typed view of an INI pipeline config plus the raw snapshot for the manifest."""

    seed: int
    threads: int
    out_dir: str
    labels_path: str | None
    synth_shape: tuple[int, int, int] | None
    synth_sites: int | None
    synth_aniso: tuple[float, float, float]
    noise: NoiseSpec | None
    ws_params: WatershedParams
    defer_dust: bool
    agglo_threshold: float
    snapshot: dict

    @classmethod
    def from_ini(cls, path: str, out_dir: str | None = None) -> "PipelineConfig":
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        # interpolation=None lets percentile values like 20% through verbatim.
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ValueError(f"config: {exc}") from None

        snapshot: dict[str, dict[str, str]] = {}
        for section in parser.sections():
            if section not in _PIPELINE_SECTIONS:
                raise ValueError(f"config: unknown section [{section}]")
            snapshot[section] = dict(parser.items(section))
            unknown = set(snapshot[section]) - _SECTION_KEYS[section]
            if unknown:
                raise ValueError(
                    f"config: unknown key(s) {sorted(unknown)} in section [{section}]"
                )

        pipe = snapshot.get("pipeline", {})
        seed = int(pipe.get("seed", "0"))
        threads = int(pipe.get("threads", "1"))
        if threads < 1:
            raise ValueError(f"config: threads must be >= 1, got {threads}")
        resolved_out = out_dir or pipe.get("out_dir", "run")

        labels_path = snapshot.get("inputs", {}).get("labels")
        synth_sec = snapshot.get("synth")
        if labels_path is None and synth_sec is None:
            raise ValueError("config: need either [synth] or [inputs] labels")
        shape = sites = None
        aniso = (5.0, 1.0, 1.0)
        if synth_sec is not None:
            if "shape" not in synth_sec or "sites" not in synth_sec:
                raise ValueError("config: [synth] requires shape and sites")
            shape = _parse_int_triple(synth_sec["shape"], "config [synth] shape")
            sites = int(synth_sec["sites"])
            if "aniso" in synth_sec:
                aniso = _parse_float_triple(synth_sec["aniso"], "config [synth] aniso")

        noise = None
        corrupt_sec = snapshot.get("corrupt")
        if corrupt_sec is not None:
            noise = NoiseSpec(
                flip_prob=float(corrupt_sec.get("flip_prob", "0")),
                gauss_sigma=float(corrupt_sec.get("gauss_sigma", "0")),
            )

        ws_sec = snapshot.get("watershed", {})
        t_size_voxels, t_size_thresh = _parse_t_size(ws_sec.get("t_size", "800,20%"))
        ws_params = WatershedParams(
            t_min=ThresholdSpec.parse(ws_sec.get("t_min", "1%")),
            t_max=ThresholdSpec.parse(ws_sec.get("t_max", "80%")),
            t_size_voxels=t_size_voxels,
            t_size_thresh=t_size_thresh,
            t_dust=int(ws_sec.get("t_dust", "600")),
        )
        defer = ws_sec.get("defer_dust", "false").strip().lower()
        if defer not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"config: defer_dust must be boolean, got {defer!r}")

        agglo_sec = snapshot.get("agglo", {})
        threshold = float(agglo_sec.get("threshold", "0.3"))
        if not (0.0 <= threshold <= 1.0):
            raise ValueError(f"config: agglo threshold must lie in [0, 1], got {threshold}")

        return cls(
            seed=seed,
            threads=threads,
            out_dir=resolved_out,
            labels_path=labels_path,
            synth_shape=shape,
            synth_sites=sites,
            synth_aniso=aniso,
            noise=noise,
            ws_params=ws_params,
            defer_dust=defer in ("true", "1", "yes"),
            agglo_threshold=threshold,
            snapshot=snapshot,
        )


class _StageRunner:
    """Times stages, records outputs+hashes, and tags failures with the stage name."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.records: list[dict] = []

    def run(self, name: str, fn):
        record: dict = {"name": name, "outputs": {}}
        start = time.perf_counter()
        try:
            result = fn(record)
        except Exception as exc:
            record["error"] = f"{type(exc).__name__}: {exc}"
            record["wall_time_s"] = time.perf_counter() - start
            self.records.append(record)
            wrapped = f"stage '{name}' failed: {exc}"
            if isinstance(exc, (ValueError, FileNotFoundError)):
                raise ValueError(wrapped) from exc
            raise RuntimeError(wrapped) from exc
        record["wall_time_s"] = time.perf_counter() - start
        self.records.append(record)
        return result

    def save(self, record: dict, key: str, vol, base_name: str) -> str:
        base = os.path.join(self.out_dir, base_name)
        save_volume(vol, base)
        record["outputs"][key] = {
            "path": base + ".raw",
            "sha256": _sha256(base + ".raw"),
            "header_sha256": _sha256(base + ".json"),
        }
        return base

    def note_file(self, record: dict, key: str, path: str) -> None:
        record["outputs"][key] = {"path": path, "sha256": _sha256(path)}


def _write_merge_log(log, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id_a\tid_b\tscore\tnew_id\n")
        for rec in log.merges:
            fh.write(f"{rec.id_a}\t{rec.id_b}\t{_fmt(rec.score)}\t{rec.new_id}\n")


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute the configured stages; returns the manifest (also written to disk)."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    marker = os.path.join(cfg.out_dir, ".partial")
    with open(marker, "w", encoding="utf-8") as fh:
        fh.write("pipeline in flight or failed; see manifest\n")

    runner = _StageRunner(cfg.out_dir)
    manifest: dict = {
        "config": cfg.snapshot,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "stages": runner.records,
        "metrics": [],
    }

    try:
        def synth_stage(record):
            if cfg.labels_path is not None:
                gt = load_volume(cfg.labels_path)
                if not isinstance(gt, SegVolume):
                    raise ValueError(f"inputs labels: {cfg.labels_path} is not a label volume")
                record["source"] = cfg.labels_path
            else:
                spec = SynthSpec(
                    VolumeShape(*cfg.synth_shape),
                    cfg.synth_sites,
                    cfg.synth_aniso,
                    seed=derive_seed(cfg.seed, "synth"),
                )
                gt = voronoi_labels(spec)
            runner.save(record, "gt", gt, "gt")
            return gt

        gt = runner.run("synth", synth_stage)

        def affin_stage(record):
            aff = affinities_from_labels(gt)
            runner.save(record, "aff_clean", aff, "aff_clean")
            return aff

        aff = runner.run("affin", affin_stage)

        if cfg.noise is not None:
            def corrupt_stage(record):
                spec = NoiseSpec(
                    flip_prob=cfg.noise.flip_prob,
                    gauss_sigma=cfg.noise.gauss_sigma,
                    seed=derive_seed(cfg.seed, "corrupt"),
                )
                record["noise"] = {"flip_prob": spec.flip_prob, "gauss_sigma": spec.gauss_sigma}
                out = corrupt_affinity(aff, spec)
                runner.save(record, "aff", out, "aff")
                return out

            aff = runner.run("corrupt", corrupt_stage)

        def ws_stage(record):
            resolved = resolve_params(cfg.ws_params, aff)
            record["resolved"] = {
                "t_min": resolved.t_min,
                "t_max": resolved.t_max,
                "t_size_voxels": resolved.t_size_voxels,
                "t_size_thresh": resolved.t_size_thresh,
                "t_dust": resolved.t_dust,
            }
            seg = run_watershed(aff, resolved, apply_dust=not cfg.defer_dust)
            runner.save(record, "ws", seg, "ws")
            return resolved, seg

        resolved, seg_ws = runner.run("watershed", ws_stage)

        def agglo_stage(record):
            graph = build_region_graph(seg_ws, aff)
            log = agglomerate(graph, cfg.agglo_threshold)
            record["n_merges"] = len(log.merges)
            seg = apply_merges(seg_ws, log, cfg.agglo_threshold)
            if cfg.defer_dust:
                seg = remove_dust(seg, resolved.t_dust)
            log_path = os.path.join(cfg.out_dir, "merges.tsv")
            _write_merge_log(log, log_path)
            runner.note_file(record, "merge_log", log_path)
            runner.save(record, "seg", seg, "seg")
            return seg

        seg = runner.run("agglo", agglo_stage)

        def eval_stage(record):
            row = _metric_row(seg, gt)
            manifest["metrics"].append(row)
            path = os.path.join(cfg.out_dir, "metrics.tsv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("\t".join(_METRIC_COLUMNS) + "\n")
                fh.write("\t".join(_fmt(row[c]) for c in _METRIC_COLUMNS) + "\n")
            runner.note_file(record, "metrics", path)
            return row

        runner.run("eval", eval_stage)
    except Exception:
        with open(os.path.join(cfg.out_dir, "manifest.partial.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
        raise

    with open(os.path.join(cfg.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    os.remove(marker)
    return manifest


@dataclass(frozen=True)
class RobustnessRow:
    magnitude: int
    vi_split: float
    vi_merge: float
    vi_total: float
    rand_error: float


def robustness_sweep(cfg: PipelineConfig, defect: str, magnitudes) -> list[RobustnessRow]:
    """Metrics per displacement magnitude, with affinities degraded by the defect.

    The ground truth is synthesized on an oversized canvas and center-cropped.
    Per magnitude m, a slip/translation of dx = m at the middle slice shifts
    the canvas labels, affinities are regenerated from the shifted labels
    (optionally corrupted with the config's noise), segmented with the config's
    watershed+agglomeration, and scored against the unshifted crop.  Magnitude
    0 is the exact baseline.
    """
    if defect not in ("slip", "translation"):
        raise ValueError(f"sweep: defect must be slip or translation, got {defect!r}")
    mags = [int(m) for m in magnitudes]
    if not mags:
        raise ValueError("sweep: at least one magnitude required")
    if any(m < 0 or m > 17 for m in mags):
        raise ValueError(f"sweep: magnitudes must lie in 0..17, got {mags}")
    if cfg.synth_shape is None:
        raise ValueError("sweep: config must include a [synth] section")

    margin = 17
    nz, ny, nx = cfg.synth_shape
    canvas_spec = SynthSpec(
        VolumeShape(nz, ny + 2 * margin, nx + 2 * margin),
        cfg.synth_sites,
        cfg.synth_aniso,
        seed=derive_seed(cfg.seed, "synth"),
    )
    canvas = voronoi_labels(canvas_spec)
    dummy = ImageVolume(np.zeros(canvas.data.shape, dtype=np.float32))
    center = DefectSpec(defect, nz // 2, dx=0, dy=0)
    _, gt = misalign(dummy, canvas, center, margin)

    rows = []
    for m in mags:
        spec = DefectSpec(defect, nz // 2, dx=m, dy=0)
        _, shifted = misalign(dummy, canvas, spec, margin)
        aff = affinities_from_labels(shifted)
        if cfg.noise is not None:
            aff = corrupt_affinity(
                aff,
                NoiseSpec(
                    flip_prob=cfg.noise.flip_prob,
                    gauss_sigma=cfg.noise.gauss_sigma,
                    seed=derive_seed(cfg.seed, "corrupt"),
                ),
            )
        resolved = resolve_params(cfg.ws_params, aff)
        seg = run_watershed(aff, resolved, apply_dust=not cfg.defer_dust)
        graph = build_region_graph(seg, aff)
        log = agglomerate(graph, cfg.agglo_threshold)
        seg = apply_merges(seg, log, cfg.agglo_threshold)
        if cfg.defer_dust:
            seg = remove_dust(seg, resolved.t_dust)
        row = _metric_row(seg, gt)
        rows.append(
            RobustnessRow(m, row["vi_split"], row["vi_merge"], row["vi"], row["are"])
        )
    return rows


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_synth(args) -> int:
    shape = _parse_int_triple(args.shape, "--shape")
    aniso = _parse_float_triple(args.aniso, "--aniso")
    spec = SynthSpec(VolumeShape(*shape), args.sites, aniso, seed=args.seed)
    seg = voronoi_labels(spec)
    save_volume(seg, args.out)
    _info(f"synth: wrote {len(np.unique(seg.data))} labels over {seg.data.size} voxels to {args.out}")
    return 0


def _cmd_affin(args) -> int:
    labels = load_volume(args.labels)
    if not isinstance(labels, SegVolume):
        raise ValueError(f"--labels: {args.labels} is not a label volume")
    offsets = NN_OFFSETS if args.offsets == "nn" else LONG_RANGE_OFFSETS
    aff = affinities_from_labels(labels, offsets)
    if args.flip_prob > 0.0 or args.gauss_sigma > 0.0:
        aff = corrupt_affinity(
            aff, NoiseSpec(args.flip_prob, args.gauss_sigma, seed=args.noise_seed)
        )
    save_volume(aff, args.out)
    _info(f"affin: wrote {aff.data.shape[0]}-channel affinities to {args.out}")
    return 0


def _cmd_ws(args) -> int:
    aff = load_volume(args.aff)
    if not isinstance(aff, AffinityVolume):
        raise ValueError(f"--aff: {args.aff} is not an affinity volume")
    t_size_voxels, t_size_thresh = _parse_t_size(args.t_size)
    params = WatershedParams(
        t_min=ThresholdSpec.parse(args.t_min),
        t_max=ThresholdSpec.parse(args.t_max),
        t_size_voxels=t_size_voxels,
        t_size_thresh=t_size_thresh,
        t_dust=args.t_dust,
    )
    resolved = resolve_params(params, aff)
    print(
        f"resolved\tt_min={_fmt(resolved.t_min)}\tt_max={_fmt(resolved.t_max)}"
        f"\tt_size_thresh={_fmt(resolved.t_size_thresh)}"
        f"\tt_size_voxels={resolved.t_size_voxels}\tt_dust={resolved.t_dust}"
    )
    seg = run_watershed(aff, resolved, apply_dust=not args.defer_dust)
    save_volume(seg, args.out)
    n_seg = len(np.unique(seg.data[seg.data != 0]))
    _info(f"ws: wrote {n_seg} supervoxels to {args.out}")
    return 0


def _cmd_agglo(args) -> int:
    seg = load_volume(args.seg)
    aff = load_volume(args.aff)
    if not isinstance(seg, SegVolume):
        raise ValueError(f"--seg: {args.seg} is not a label volume")
    if not isinstance(aff, AffinityVolume):
        raise ValueError(f"--aff: {args.aff} is not an affinity volume")
    graph = build_region_graph(seg, aff)
    log = agglomerate(graph, args.threshold)
    merged = apply_merges(seg, log, args.threshold)
    save_volume(merged, args.out)
    if args.log:
        _write_merge_log(log, args.log)
    _info(f"agglo: {len(log.merges)} merges at threshold {args.threshold}")

    if args.sweep:
        if not args.gt:
            raise ValueError("--sweep requires --gt for metric rows")
        gt = load_volume(args.gt)
        if not isinstance(gt, SegVolume):
            raise ValueError(f"--gt: {args.gt} is not a label volume")
        thresholds = [float(v) for v in args.sweep.split(",") if v.strip()]
        rows = sweep(seg, gt, log, thresholds)
        _print_table(
            ("threshold", "vi_split", "vi_merge", "vi", "are"),
            [(r.threshold, r.vi_split, r.vi_merge, r.vi_total, r.rand_error) for r in rows],
        )
    return 0


def _cmd_eval(args) -> int:
    pred = load_volume(args.pred)
    gt = load_volume(args.gt)
    if not isinstance(pred, SegVolume):
        raise ValueError(f"--pred: {args.pred} is not a label volume")
    if not isinstance(gt, SegVolume):
        raise ValueError(f"--gt: {args.gt} is not a label volume")
    row = _metric_row(pred, gt)
    if args.format == "json":
        print(json.dumps(row, indent=2))
    else:
        _print_table(_METRIC_COLUMNS, [tuple(row[c] for c in _METRIC_COLUMNS)])
    return 0


def _cmd_augment(args) -> int:
    image = load_volume(args.image)
    label = load_volume(args.label)
    if not isinstance(image, ImageVolume):
        raise ValueError(f"--image: {args.image} is not an image volume")
    if not isinstance(label, SegVolume):
        raise ValueError(f"--label: {args.label} is not a label volume")
    params = AugmentParams(margin=args.margin)
    nz, ny, nx = image.data.shape
    out_shape = VolumeShape(nz, ny - 2 * args.margin, nx - 2 * args.margin)
    rng = derive_rng(args.seed, "augment")
    specs = sample_defects(rng, out_shape, params)
    out_image, out_label = apply_defects(image, label, specs, args.margin)
    aff = affinities_from_labels(out_label)

    save_volume(out_image, args.out_prefix + "_image")
    save_volume(out_label, args.out_prefix + "_label")
    save_volume(aff, args.out_prefix + "_aff")
    with open(args.out_prefix + "_defects.json", "w", encoding="utf-8") as fh:
        json.dump(defects_to_json(specs), fh, indent=2)
        fh.write("\n")
    _info(f"augment: applied {len(specs)} defects, outputs at {args.out_prefix}_*")
    return 0


def _cmd_blend(args) -> int:
    with open(args.layout, encoding="utf-8") as fh:
        layout_doc = json.load(fh)
    for field in ("volume_shape", "patch_shape", "patches"):
        if field not in layout_doc:
            raise ValueError(f"layout: missing field {field!r}")
    vol_shape = VolumeShape(*(int(v) for v in layout_doc["volume_shape"]))
    patch_shape = tuple(int(v) for v in layout_doc["patch_shape"])
    entries = layout_doc["patches"]
    if not isinstance(entries, list) or not entries:
        raise ValueError("layout: patches must be a non-empty list")
    origins = tuple(tuple(int(v) for v in e["origin"]) for e in entries)
    layout = PatchLayout(vol_shape, patch_shape, origins)
    profile = BlendProfile(
        t=_parse_float_triple(args.t, "--t"),
        overlap=args.overlap,
        literal_formula=args.literal,
    )
    patches = []
    for entry in entries:
        vol = load_volume(os.path.join(args.patch_dir, entry["file"]))
        patches.append((tuple(int(v) for v in entry["origin"]), vol))
    blended = blend_patches(patches, layout, profile)
    save_volume(blended, args.out)
    _info(f"blend: combined {len(patches)} patches into {args.out}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = PipelineConfig.from_ini(args.config, out_dir=args.out_dir)
    manifest = run_pipeline(cfg)
    if manifest["metrics"]:
        row = manifest["metrics"][0]
        _print_table(_METRIC_COLUMNS, [tuple(row[c] for c in _METRIC_COLUMNS)])
    _info(f"pipeline: manifest written to {os.path.join(cfg.out_dir, 'manifest.json')}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = PipelineConfig.from_ini(args.config, out_dir=args.out_dir)
    mags = [int(v) for v in args.magnitudes.split(",") if v.strip()]
    rows = robustness_sweep(cfg, args.defect, mags)
    table = [(r.magnitude, r.vi_split, r.vi_merge, r.vi_total, r.rand_error) for r in rows]
    _print_table(("magnitude", "vi_split", "vi_merge", "vi", "are"), table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            _print_table(("magnitude", "vi_split", "vi_merge", "vi", "are"), table, out=fh)
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affseg",
        description="Affinity-based segmentation toolkit: synthesis, watershed, "
        "agglomeration, metrics, defect augmentation, and patch blending.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate an anisotropic Voronoi label volume")
    p.add_argument("--shape", required=True, help="z,y,x extents, e.g. 64,64,64")
    p.add_argument("--sites", type=int, required=True, help="number of Voronoi sites")
    p.add_argument("--aniso", default="5,1,1", help="per-axis metric weights z,y,x")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output volume base path")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("affin", help="affinities from labels, with optional corruption")
    p.add_argument("--labels", required=True)
    p.add_argument("--offsets", choices=("nn", "long"), default="nn")
    p.add_argument("--flip-prob", type=float, default=0.0)
    p.add_argument("--gauss-sigma", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_affin)

    p = sub.add_parser("ws", help="watershed oversegmentation of an affinity volume")
    p.add_argument("--aff", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t-min", default="1%", help="absolute in [0,1] or percentile like 1%%")
    p.add_argument("--t-max", default="80%")
    p.add_argument("--t-size", default="800,20%", help="voxels,threshold e.g. 800,20%%")
    p.add_argument("--t-dust", type=int, default=600)
    p.add_argument("--defer-dust", action="store_true", help="skip dust removal here")
    p.set_defaults(func=_cmd_ws)

    p = sub.add_parser("agglo", help="mean-affinity agglomeration of supervoxels")
    p.add_argument("--seg", required=True)
    p.add_argument("--aff", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write the merge log TSV here")
    p.add_argument("--sweep", help="descending thresholds for a metric table, e.g. 0.9,0.5,0.3")
    p.add_argument("--gt", help="ground-truth labels for --sweep")
    p.set_defaults(func=_cmd_agglo)

    p = sub.add_parser("eval", help="VI and adapted Rand metrics of a segmentation")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("augment", help="sample and apply simulated defects")
    p.add_argument("--image", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--margin", type=int, default=17)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("blend", help="bump-weighted blending of overlapping patches")
    p.add_argument("--layout", required=True, help="JSON with volume_shape, patch_shape, patches")
    p.add_argument("--patch-dir", required=True)
    p.add_argument("--t", default="1.5,1.5,1.5", help="decay exponents z,y,x")
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--literal", action="store_true", help="use the printed (border-heavy) formula")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_blend)

    p = sub.add_parser("pipeline", help="run synth -> [corrupt] -> ws -> agglo -> eval")
    p.add_argument("--config", required=True, help="INI config file")
    p.add_argument("--out-dir", help="override the config's output directory")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("sweep", help="misalignment robustness table from a pipeline config")
    p.add_argument("--config", required=True)
    p.add_argument("--defect", choices=("slip", "translation"), required=True)
    p.add_argument("--magnitudes", required=True, help="comma list of displacements in 0..17")
    p.add_argument("--out-dir", help="override the config's output directory")
    p.add_argument("--out", help="also write the table to this file")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
