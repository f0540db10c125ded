"""Command-line interface.

Subcommands mirror the pipeline stages (synth, partition, compress, hag,
train-toy, predict, merge, evaluate) plus the one-shot ``run`` and the
hyperparameter ``sweep``. Exit codes: 0 success, 1 I/O or data error,
2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, evaluate as ev, pipeline, synth
from .compress import CompressConfig, compress_points
from .core import LabeledCloud, bounds, read_cloud, write_cloud
from .errors import ConfigError, GflowError
from .hag import attach_hag_channels
from .partition import PartitionConfig, partition


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gflow",
        description="Ground filtering for airborne LiDAR point clouds.",
    )
    parser.add_argument("--version", action="version", version=f"gflow {__version__}")
    parser.add_argument("--seed", type=int, default=None,
                        help="override seeds used by synth/training")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker threads for patch-level stages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("--preset", choices=sorted(synth.PRESETS), required=True)
    p.add_argument("--seed", type=int, default=0, dest="scene_seed")
    p.add_argument("--out", required=True)
    p.add_argument("--truth-dtm", default=None,
                   help="also write the analytic terrain as an ESRI ASCII raster")
    p.add_argument("--dtm-cell", type=float, default=1.0)

    p = sub.add_parser("partition", help="tile a cloud into cylindrical patches")
    p.add_argument("--input", required=True)
    p.add_argument("--outer", type=float, default=150.0)
    p.add_argument("--step", type=float, default=50.0)
    p.add_argument("--inner", type=float, default=PartitionConfig().inner_radius)
    p.add_argument("--no-strict", action="store_true",
                   help="warn instead of failing when coverage cannot hold")
    p.add_argument("--out", required=True)

    p = sub.add_parser("compress", help="radially compress partitioned patches")
    p.add_argument("--patches", required=True)
    p.add_argument("--roc", type=float, default=44.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("hag", help="append height-above-ground channels")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-toy", help="train the toy classifier")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--profile", default="defaults")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", default=None)

    p = sub.add_parser("predict", help="label a cloud with a trained classifier")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--oracle", action="store_true",
                   help="use the truth-label oracle instead of a checkpoint")
    p.add_argument("--config", default=None)
    p.add_argument("--profile", default="defaults")
    p.add_argument("--workdir", required=True)
    p.add_argument("--out", default=None, help="labeled cloud path")

    p = sub.add_parser("merge", help="soft-vote saved per-patch predictions")
    p.add_argument("--pred", required=True, help="predictions directory")
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="metrics and DTM RMSE of a labeled cloud")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--dtm-cell", type=float, default=1.0)
    p.add_argument("--ref-dtm", default=None)
    p.add_argument("--report", required=True)

    p = sub.add_parser("run", help="full pipeline in one shot")
    p.add_argument("--config", default=None)
    p.add_argument("--profile", default="defaults")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=("train-toy", "predict", "evaluate"),
                   required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--ref-dtm", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--train-inputs", nargs="*", default=None)

    p = sub.add_parser("sweep", help="hyperparameter sensitivity sweep")
    p.add_argument("--param", choices=pipeline.SWEEP_PARAMETERS, required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated parameter values")
    p.add_argument("--train-inputs", nargs="+", required=True)
    p.add_argument("--eval-input", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--profile", default="defaults")
    p.add_argument("--workdir", required=True)
    p.add_argument("--ref-dtm", default=None)

    p = sub.add_parser("write-config", help="write the canonical default config")
    p.add_argument("--out", required=True)
    return parser


def _load_pipeline_config(args) -> pipeline.PipelineConfig:
    if getattr(args, "config", None):
        cfg = pipeline.load_config(args.config, profile=args.profile)
    else:
        cfg = pipeline.PipelineConfig()
    updates = {}
    if getattr(args, "jobs", 1) and args.jobs != 1:
        updates["jobs"] = args.jobs
    if getattr(args, "epochs", None) is not None:
        from dataclasses import replace
        updates["optimizer"] = replace(cfg.optimizer, epochs=args.epochs)
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        updates["classifier_seed"] = args.seed
        updates["optimizer"] = replace(
            updates.get("optimizer", cfg.optimizer), seed=args.seed
        )
    if updates:
        from dataclasses import replace
        cfg = replace(cfg, **updates)
    return cfg


def _cmd_synth(args) -> int:
    seed = args.scene_seed if args.seed is None else args.seed
    spec = synth.PRESETS[args.preset](seed)
    cloud, terrain = synth.generate(spec)
    write_cloud(cloud, args.out)
    if args.truth_dtm:
        b = bounds(cloud)
        grid = ev.grid_from_bounds(b.min_x, b.min_y, b.max_x, b.max_y, args.dtm_cell)
        ev.write_esri_ascii(ev.rasterize_function(terrain.elevation, grid),
                            args.truth_dtm)
    print(f"wrote {len(cloud)} points to {args.out}")
    return 0


def _cmd_partition(args) -> int:
    cloud = read_cloud(args.input)
    cfg = PartitionConfig(outer_radius=args.outer, step=args.step,
                          inner_radius=args.inner, strict=not args.no_strict)
    patches = partition(cloud, cfg)
    pipeline.write_patches_dir(cloud, patches, args.out, cfg)
    print(f"wrote {len(patches)} patches to {args.out}")
    return 0


def _cmd_compress(args) -> int:
    manifest, loaded = pipeline.read_patches_dir(args.patches)
    if manifest.get("kind") != "patches":
        raise ConfigError(f"{args.patches} does not hold uncompressed patches")
    ccfg = CompressConfig(
        outer_radius=manifest["outer_radius"],
        outer_compressed_radius=args.roc,
        inner_radius=manifest["inner_radius"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    part_cfg = PartitionConfig(
        outer_radius=manifest["outer_radius"], step=manifest["step"],
        inner_radius=manifest["inner_radius"], strict=False,
    )
    clouds, patches, compressed = [], [], []
    base = 0
    for sub, patch in loaded:
        compressed.append(compress_points(sub.xyz, patch.center, ccfg))
        clouds.append(sub)
        patches.append(patch)
        base += len(sub)
    # Rebuild a flat cloud so the shared writer can slice it per patch.
    flat = LabeledCloud(
        np.vstack([c.xyz for c in clouds]),
        np.concatenate([c.labels for c in clouds]),
    )
    offsets = np.cumsum([0] + [len(c) for c in clouds])
    repatched = [
        type(p)(center=p.center,
                member_indices=np.arange(offsets[i], offsets[i + 1]),
                central_mask=p.central_mask,
                outer_radius=p.outer_radius, inner_radius=p.inner_radius)
        for i, p in enumerate(patches)
    ]
    pipeline.write_patches_dir(
        flat, repatched, out, part_cfg, compressed_xyz=compressed,
        extra={"outer_compressed_radius": args.roc},
    )
    print(f"wrote {len(patches)} compressed patches to {args.out}")
    return 0


def _cmd_hag(args) -> int:
    cloud = read_cloud(args.input)
    write_cloud(attach_hag_channels(cloud), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_train_toy(args) -> int:
    cfg = _load_pipeline_config(args)
    report = pipeline.train_toy_pipeline(cfg, args.inputs, args.out)
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    print(f"trained on {report['n_examples']} examples; "
          f"final loss {report['final_loss']:.6f}; checkpoint {args.out}")
    return 0


def _cmd_predict(args) -> int:
    if not args.oracle and not args.checkpoint:
        raise ConfigError("predict needs --checkpoint or --oracle")
    cfg = _load_pipeline_config(args)
    report = pipeline.run_pipeline(
        cfg, args.input, "predict", args.workdir,
        checkpoint_path=args.checkpoint, oracle=args.oracle,
    )
    labeled = Path(args.workdir) / "labeled.xyzl"
    if args.out:
        Path(args.out).write_bytes(labeled.read_bytes())
    print(f"labeled {report['n_points']} points "
          f"({report['uncovered_points']} uncovered)")
    return 0


def _cmd_merge(args) -> int:
    cloud = read_cloud(args.cloud)
    n_points, preds = pipeline.read_predictions_dir(args.pred)
    if n_points != len(cloud):
        raise ConfigError(
            f"predictions cover {n_points} points but cloud has {len(cloud)}"
        )
    labeled, result = pipeline.build_labeled_cloud(cloud, preds)
    write_cloud(labeled, args.out)
    print(f"merged {len(preds)} patch votes; {result.uncovered_count} uncovered")
    return 0


def _cmd_evaluate(args) -> int:
    pred = read_cloud(args.pred)
    truth = read_cloud(args.truth)
    if len(pred) != len(truth):
        raise ConfigError("prediction and truth clouds differ in size")
    cfg = pipeline.PipelineConfig(dtm_cell_size=args.dtm_cell)
    reference = ev.read_esri_ascii(args.ref_dtm) if args.ref_dtm else None
    body = pipeline.evaluate_labels(cfg, truth, pred.labels, reference)
    report = {"mode": "evaluate", "input": Path(args.truth).name,
              "n_points": len(truth), **body}
    Path(args.report).write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    m = report["metrics"]
    print(f"OA {m['overall_accuracy']:.4f}  RMSE {m['dtm_rmse']:.4f}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_pipeline_config(args)
    report = pipeline.run_pipeline(
        cfg, args.input, args.mode, args.workdir,
        checkpoint_path=args.checkpoint, oracle=args.oracle,
        ref_dtm_path=args.ref_dtm, report_path=args.report,
        train_inputs=args.train_inputs,
    )
    if args.mode == "evaluate":
        m = report["metrics"]
        print(f"OA {m['overall_accuracy']:.4f}  RMSE {m['dtm_rmse']:.4f}")
    else:
        print(f"{args.mode} finished")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_pipeline_config(args)
    raw = [v for v in args.values.split(",") if v]
    if args.param == "bins":
        values = [int(v) for v in raw]
    else:
        values = [float(v) for v in raw]
    summary = pipeline.sensitivity_sweep(
        cfg, args.param, values, args.train_inputs, args.eval_input,
        args.workdir, ref_dtm_path=args.ref_dtm,
    )
    for value in summary["values"]:
        print(f"{args.param}={value}: OA {summary['overall_accuracy'][str(value)]:.4f}")
    return 0


def _cmd_write_config(args) -> int:
    Path(args.out).write_text(pipeline.DEFAULT_CONFIG_TOML, encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "partition": _cmd_partition,
    "compress": _cmd_compress,
    "hag": _cmd_hag,
    "train-toy": _cmd_train_toy,
    "predict": _cmd_predict,
    "merge": _cmd_merge,
    "evaluate": _cmd_evaluate,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "write-config": _cmd_write_config,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except GflowError as exc:
        stage = getattr(exc, "stage", None)
        where = f" [stage: {stage}]" if stage else ""
        print(f"gflow: error{where}: {exc}", file=sys.stderr)
        return exc.exit_code
    except NotImplementedError as exc:
        print(f"gflow: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
