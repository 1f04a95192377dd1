"""Batch command-line front end.

Subcommands: ingest, segment, metrics, synth, compare, pipeline.  All are
driven by one JSON config (see `config.SCHEMA`); `--seed` and `--out`
override the corresponding config scalars.  Exit codes: 0 success,
1 partial batch failure, 2 config or usage error.

Batch items run on a small process pool (`--jobs`, default from
TRIPHASE_JOBS or 1); outputs and the pipeline manifest are deterministic
for a given config and seed, timestamps aside.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from glob import glob
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    config_hash,
    load_config,
    metric_options_from_config,
    seed_bounds_from_config,
    synth_config_from_config,
)
from .metrics import (
    CSV_COLUMNS,
    HEADLINE_METRICS,
    metrics_report,
    record_to_csv_row,
    record_to_json,
)
from .report import emit_report
from .segmentation import (
    SeedingError,
    density_map,
    select_seeds,
    sobel_gradient,
    watershed,
)
from .stats import compare, make_population
from .synthgen import generate, grayscale_render
from .volume import (
    GrayscaleVolume,
    SegmentedVolume,
    VolumeFormatError,
    import_slice_stack,
    load_volume,
    sample_subvolumes,
    save_volume,
)

AGGREGATE_IDS = ("MEAN", "STD")


def _expand(patterns) -> list[Path]:
    out = []
    for pattern in patterns:
        hits = sorted(glob(str(pattern)))
        if hits:
            out.extend(Path(h) for h in hits)
        else:
            out.append(Path(pattern))  # surfaces a clean missing-file error later
    return out


def _jobs_default() -> int:
    try:
        return max(1, int(os.environ.get("TRIPHASE_JOBS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def cmd_ingest(cfg, out_dir: Path):
    section = cfg["ingest"]
    dest = out_dir / "ingested"
    dest.mkdir(parents=True, exist_ok=True)
    written, failures = [], []
    for path in _expand(section["volumes"]):
        try:
            vol = load_volume(path)
            target = dest / f"{path.stem}.mvol"
            save_volume(vol, target)
            kind = "grayscale" if isinstance(vol, GrayscaleVolume) else "segmented"
            print(f"[ingest] {path} -> {target} dims={vol.dims} "
                  f"spacing={vol.spacing} kind={kind}")
            written.append(target)
        except (OSError, VolumeFormatError) as e:
            print(f"[ingest] FAILED {path}: {e}", file=sys.stderr)
            failures.append((str(path), str(e)))
    for stack in section["stacks"]:
        name = stack.get("name")
        slices = stack.get("slices")
        if not name or not slices:
            failures.append((str(stack), "stack entries need 'name' and 'slices'"))
            continue
        try:
            vol = import_slice_stack(
                _expand(slices), float(stack.get("spacing", section["spacing"]))
            )
            target = dest / f"{name}.mvol"
            save_volume(vol, target)
            print(f"[ingest] stack {name} -> {target} dims={vol.dims}")
            written.append(target)
        except (OSError, VolumeFormatError, ValueError) as e:
            print(f"[ingest] FAILED stack {name}: {e}", file=sys.stderr)
            failures.append((name, str(e)))
    return written, failures


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------

def _segment_one(task):
    path, bounds, dest, density_dir = task
    try:
        vol = load_volume(Path(path))
        if not isinstance(vol, GrayscaleVolume):
            raise VolumeFormatError("segmentation needs a grayscale volume")
        grad = sobel_gradient(vol)
        seeds = select_seeds(vol, grad, bounds)
        counts = {p: int((seeds == p).sum()) for p in (1, 2, 3)}
        seg = watershed(grad, seeds)
        target = Path(dest) / f"{Path(path).stem}_seg.mvol"
        save_volume(seg, target)
        if density_dir is not None:
            dm = density_map(vol, grad)
            (Path(density_dir) / f"{Path(path).stem}_density.csv").write_text(dm.to_csv())
        return {"input": str(path), "output": str(target), "seeds": counts}
    except (OSError, VolumeFormatError, SeedingError, ValueError) as e:
        return {"input": str(path), "error": str(e)}


def cmd_segment(cfg, out_dir: Path, jobs: int, inputs=None, density_maps=False):
    section = cfg["segment"]
    bounds = seed_bounds_from_config(section)
    paths = inputs if inputs is not None else _expand(section["inputs"])
    if not paths:
        raise ConfigError("segment: no input volumes configured")
    dest = out_dir / "segmented"
    dest.mkdir(parents=True, exist_ok=True)
    density_dir = None
    if density_maps:
        density_dir = out_dir / "density_maps"
        density_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(str(p), bounds, str(dest), density_dir) for p in paths]
    results = _pmap(_segment_one, tasks, jobs)
    written, failures = [], []
    for res in results:
        if "error" in res:
            print(f"[segment] FAILED {res['input']}: {res['error']}", file=sys.stderr)
            failures.append((res["input"], res["error"]))
        else:
            print(f"[segment] {res['input']} -> {res['output']} seeds={res['seeds']}")
            written.append(Path(res["output"]))
    return written, failures


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _metrics_one(task):
    path, options, dest = task
    try:
        vol = load_volume(Path(path))
        if not isinstance(vol, SegmentedVolume):
            raise VolumeFormatError("metrics needs a segmented volume")
        rec = metrics_report(vol, options, volume_id=Path(path).stem)
        (Path(dest) / f"{Path(path).stem}.json").write_text(record_to_json(rec))
        return {"input": str(path), "record": rec}
    except (OSError, VolumeFormatError, ValueError) as e:
        return {"input": str(path), "error": str(e)}


def _aggregate_rows(records) -> list[list[str]]:
    rows = []
    for stat in AGGREGATE_IDS:
        row = [stat, "", "", "", ""]
        for col_idx in range(5, len(CSV_COLUMNS)):
            values = []
            for rec in records:
                cell = record_to_csv_row(rec)[col_idx]
                if cell:
                    values.append(float(cell))
            if values:
                v = np.mean(values) if stat == "MEAN" else np.std(values)
                row.append(repr(float(v)))
            else:
                row.append("")
        rows.append(row)
    return rows


def cmd_metrics(cfg, out_dir: Path, jobs: int, inputs=None, csv_name="metrics.csv"):
    section = cfg["metrics"]
    options = metric_options_from_config(section)
    paths = inputs if inputs is not None else _expand(section["inputs"])
    if not paths:
        raise ConfigError("metrics: no input volumes configured")
    dest = out_dir / "metrics"
    dest.mkdir(parents=True, exist_ok=True)
    tasks = [(str(p), options, str(dest)) for p in paths]
    results = _pmap(_metrics_one, tasks, jobs)
    records, failures = [], []
    for res in results:
        if "error" in res:
            print(f"[metrics] FAILED {res['input']}: {res['error']}", file=sys.stderr)
            failures.append((res["input"], res["error"]))
        else:
            records.append(res["record"])
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(record_to_csv_row(rec)) for rec in records]
    lines += [",".join(row) for row in _aggregate_rows(records)] if records else []
    csv_path = dest / csv_name
    csv_path.write_text("\n".join(lines) + "\n")
    print(f"[metrics] wrote {csv_path} ({len(records)} records)")
    return csv_path, records, failures


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(cfg, out_dir: Path, seed: int):
    section = cfg["synth"]
    count = int(section["count"])
    if count < 1:
        raise ConfigError("synth.count must be at least 1")
    dest = out_dir / "synth"
    dest.mkdir(parents=True, exist_ok=True)
    render = section.get("render") or None
    render_dest = None
    if render is not None:
        render_dest = out_dir / "synth_gray"
        render_dest.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(count):
        synth_cfg = synth_config_from_config(section, seed=seed + i)
        result = generate(synth_cfg, octants=bool(section["octants"]))
        volumes = result if isinstance(result, list) else [result]
        for j, vol in enumerate(volumes):
            name = (
                f"synth_{i:03d}_oct{j}.mvol" if len(volumes) > 1 else f"synth_{i:03d}.mvol"
            )
            target = dest / name
            save_volume(vol, target)
            written.append(target)
            if render_dest is not None:
                intensities = render.get("intensities")
                if intensities is not None:
                    intensities = {int(k): int(v) for k, v in intensities.items()}
                gray = grayscale_render(
                    vol,
                    intensities=intensities,
                    noise_std=float(render.get("noise_std", 0.0)),
                    seed=seed + 7919 * i + j,
                )
                save_volume(gray, render_dest / name)
        print(f"[synth] volume {i}: {len(volumes)} file(s)")
    return written, []


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _read_metrics_csv(path: Path) -> list[dict]:
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    if header != list(CSV_COLUMNS):
        raise ConfigError(f"{path}: metrics CSV schema mismatch")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        if cells[0] in AGGREGATE_IDS:
            continue
        rows.append(dict(zip(header, cells)))
    return rows


def cmd_compare(cfg, out_dir: Path):
    section = cfg["compare"]
    inputs = section["inputs"]
    if len(inputs) < 2:
        raise ConfigError("compare needs at least two tagged metrics CSVs")
    metric_names = (
        list(HEADLINE_METRICS)
        if section["metrics"] == "headline"
        else [c for c in CSV_COLUMNS if c not in ("id", "nx", "ny", "nz", "spacing")]
    )
    pops = []
    for source in inputs:
        rows = _read_metrics_csv(Path(inputs[source]))
        for metric in metric_names:
            raw = [row[metric] if row[metric] else None for row in rows]
            pops.append(
                make_population(metric, source, [None if v is None else float(v) for v in raw])
            )
    report = compare(pops, bins=int(section["bins"]))
    dest = out_dir / "compare"
    paths = emit_report(report, dest)
    for metric in report.metrics:
        for pair, scores in report.metrics[metric].pairs.items():
            print(
                f"[compare] {metric} {pair[0]} vs {pair[1]}: "
                f"iqr_overlap={scores['iqr_overlap']:.3f} "
                f"distance={scores['distance']:.4g}"
            )
    print(f"[compare] wrote {len(paths)} files to {dest}")
    return paths, []


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def cmd_pipeline(cfg, out_root: Path, jobs: int, seed: int):
    run_dir = out_root / config_hash(cfg)[:12]
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "triphase",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "stages": [],
    }
    overall_failures = 0

    def record_stage(name, written, failures, extra=None):
        nonlocal overall_failures
        overall_failures += len(failures)
        entry = {
            "name": name,
            "status": "ok" if not failures else ("partial" if written else "failed"),
            "outputs": [
                {"path": str(p.relative_to(run_dir)), "sha256": _sha256(p)}
                for p in written
            ],
            "errors": [list(f) for f in failures],
        }
        if extra:
            entry.update(extra)
        manifest["stages"].append(entry)

    ingested, failures = cmd_ingest(cfg, run_dir)
    record_stage("ingest", ingested, failures)

    sub_cfg = cfg["subvolume"]
    to_segment = ingested
    if sub_cfg["count"] > 0 and ingested:
        dest = run_dir / "subvolumes"
        dest.mkdir(exist_ok=True)
        crops, sub_failures = [], []
        for k, path in enumerate(ingested):
            try:
                vol = load_volume(path)
                subs = sample_subvolumes(
                    vol, sub_cfg["count"], sub_cfg["edge"],
                    seed=seed + 104729 * k, augment=sub_cfg["augment"],
                )
                for j, sub in enumerate(subs):
                    target = dest / f"{path.stem}_sub{j:03d}.mvol"
                    save_volume(sub, target)
                    crops.append(target)
            except (ValueError, VolumeFormatError, OSError) as e:
                sub_failures.append((str(path), str(e)))
        record_stage("subvolumes", crops, sub_failures)
        to_segment = crops

    segmented, failures = (
        cmd_segment(cfg, run_dir, jobs, inputs=to_segment) if to_segment else ([], [])
    )
    record_stage("segment", segmented, failures)

    if segmented:
        csv_orig, _, failures = cmd_metrics(
            cfg, run_dir, jobs, inputs=segmented, csv_name="original.csv"
        )
        record_stage("metrics_original", [csv_orig], failures)
    else:
        csv_orig = None
        record_stage("metrics_original", [], [("segment", "no segmented volumes")])

    synth_written, failures = (
        cmd_synth(cfg, run_dir, seed) if cfg["synth"]["count"] > 0 else ([], [])
    )
    record_stage("synth", synth_written, failures)

    if synth_written:
        csv_synth, _, failures = cmd_metrics(
            cfg, run_dir, jobs, inputs=synth_written, csv_name="ellipsoid.csv"
        )
        record_stage("metrics_ellipsoid", [csv_synth], failures)
    else:
        csv_synth = None
        record_stage("metrics_ellipsoid", [], [("synth", "no synthetic volumes")])

    if csv_orig and csv_synth:
        compare_cfg = dict(cfg)
        compare_cfg["compare"] = dict(cfg["compare"])
        compare_cfg["compare"]["inputs"] = {
            "original": str(csv_orig),
            "ellipsoid": str(csv_synth),
        }
        try:
            paths, failures = cmd_compare(compare_cfg, run_dir)
            record_stage("compare", paths, failures)
        except ConfigError as e:
            record_stage("compare", [], [("compare", str(e))])
    else:
        record_stage("compare", [], [("compare", "missing metrics inputs")])

    manifest_path = run_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"[pipeline] manifest: {manifest_path}")
    return 0 if overall_failures == 0 else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triphase",
        description="Batch toolkit for three-phase voxel microstructures.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("ingest", "validate and normalize input volumes"),
        ("segment", "segment grayscale volumes into three phases"),
        ("metrics", "compute microstructural metrics"),
        ("synth", "generate ellipsoid-packed synthetic volumes"),
        ("compare", "compare metric populations across sources"),
        ("pipeline", "run the full campaign"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override config out_dir")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default $TRIPHASE_JOBS or 1)")
        if name == "segment":
            p.add_argument("--density-maps", action="store_true",
                           help="export intensity/gradient density CSV per input")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else int(cfg["seed"])
    cfg["seed"] = seed  # fold the override into the effective (hashed) config
    out_dir = Path(args.out if args.out is not None else cfg["out_dir"])
    jobs = args.jobs if args.jobs is not None else _jobs_default()
    try:
        if args.command == "ingest":
            out_dir.mkdir(parents=True, exist_ok=True)
            _, failures = cmd_ingest(cfg, out_dir)
        elif args.command == "segment":
            out_dir.mkdir(parents=True, exist_ok=True)
            _, failures = cmd_segment(
                cfg, out_dir, jobs, density_maps=getattr(args, "density_maps", False)
            )
        elif args.command == "metrics":
            out_dir.mkdir(parents=True, exist_ok=True)
            _, _, failures = cmd_metrics(cfg, out_dir, jobs)
        elif args.command == "synth":
            out_dir.mkdir(parents=True, exist_ok=True)
            _, failures = cmd_synth(cfg, out_dir, seed)
        elif args.command == "compare":
            out_dir.mkdir(parents=True, exist_ok=True)
            _, failures = cmd_compare(cfg, out_dir)
        else:
            return cmd_pipeline(cfg, out_dir, jobs, seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
