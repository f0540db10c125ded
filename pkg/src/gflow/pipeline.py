"""End-to-end orchestration: ingest, partition, compress, features, predict,
merge, evaluate, plus toy training and hyperparameter sweeps.

Stages persist their per-patch artifacts under a work directory with a
manifest carrying content hashes, so any later stage can be rerun from disk
and must reproduce the byte-identical output of a full run. Reports are
plain JSON with sorted keys and no timestamps or absolute paths, which makes
repeated seeded runs byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .compress import CompressConfig, CompressedPatch, compress_patch
from .core import ClassLabel, LabeledCloud, bounds, read_cloud, write_cloud
from .errors import CloudIOError, ConfigError, GflowError
from .features import FeatureNormalizer, FeatureRecipe, build_patch_features
from .hag import HagBinning, attach_hag_channels, binning_with_bins
from .learn import (
    LossConfig,
    OptimizerSettings,
    ToyClassifier,
    load_checkpoint,
    save_checkpoint,
    train_toy,
)
from .merge import MergeResult, PredictionAccumulator, finalize
from .partition import Patch, PartitionConfig, partition

SWEEP_PARAMETERS = ("lambda", "bins", "roc")


@dataclass(frozen=True)
class PipelineConfig:
    """All knobs of the data path, cross-validated on construction."""

    partition: PartitionConfig = field(default_factory=PartitionConfig)
    outer_compressed_radius: float = 44.0
    compression: bool = True
    voxel_size: float = 0.5
    extra_voxel_sizes: tuple[float, ...] = (2.0, 8.0, 32.0)
    neighbor_radius: float = 2.0
    binning: HagBinning = field(default_factory=HagBinning)
    lam: float = 0.5
    dtm_cell_size: float = 1.0
    relabel_outliers: bool = True
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    classifier_seed: int = 0
    hidden_dims: tuple[int, ...] = (8, 16, 16)
    jobs: int = 1

    def __post_init__(self):
        # Constructing the compression config validates the radius ordering.
        if self.compression:
            self.compress_config()
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.dtm_cell_size <= 0:
            raise ConfigError("dtm_cell_size must be positive")
        LossConfig(lam=self.lam, hag_binning=self.binning)

    def compress_config(self) -> CompressConfig:
        return CompressConfig(
            outer_radius=self.partition.outer_radius,
            outer_compressed_radius=self.outer_compressed_radius,
            inner_radius=self.partition.inner_radius,
        )

    def feature_recipe(self) -> FeatureRecipe:
        return FeatureRecipe(
            primary_voxel_size=self.voxel_size,
            extra_voxel_sizes=self.extra_voxel_sizes,
            neighbor_radius=self.neighbor_radius,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(lam=self.lam, hag_binning=self.binning)

    def summary(self) -> dict:
        """Config echo embedded in reports; values only, no paths."""
        return {
            "outer_radius": self.partition.outer_radius,
            "step": self.partition.step,
            "inner_radius": self.partition.inner_radius,
            "outer_compressed_radius": self.outer_compressed_radius,
            "compression": self.compression,
            "voxel_size": self.voxel_size,
            "extra_voxel_sizes": list(self.extra_voxel_sizes),
            "neighbor_radius": self.neighbor_radius,
            "hag_boundaries": list(self.binning.boundaries),
            "hag_weights": list(self.binning.weights),
            "lambda": self.lam,
            "dtm_cell_size": self.dtm_cell_size,
            "epochs": self.optimizer.epochs,
            "learning_rate": self.optimizer.learning_rate,
            "batch_size": self.optimizer.batch_size,
            "optimizer": self.optimizer.rule,
            "schedule": self.optimizer.schedule,
            "hidden_dims": list(self.hidden_dims),
        }


def _load_toml(path: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise CloudIOError(f"cannot read config {path}: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}")


def load_config(path, profile: str = "defaults") -> PipelineConfig:
    """Build a config from a TOML file.

    The ``[defaults]`` table is the base; any other profile overlays it.
    Separate compression radii, when present, must agree with the partition
    radii.
    """
    doc = _load_toml(Path(path))
    if "defaults" not in doc:
        raise ConfigError(f"config {path} has no [defaults] table")
    table = dict(doc["defaults"])
    if profile != "defaults":
        if profile not in doc:
            raise ConfigError(f"config {path} has no [{profile}] table")
        table.update(doc[profile])
    return config_from_mapping(table)


def config_from_mapping(table: dict) -> PipelineConfig:
    known = {
        "outer_radius", "step", "inner_radius", "strict_coverage",
        "outer_compressed_radius", "compress_outer_radius", "compress_inner_radius",
        "compression", "voxel_size", "extra_voxel_sizes", "neighbor_radius",
        "hag_boundaries", "hag_weights", "lambda", "dtm_cell_size",
        "relabel_outliers", "epochs", "learning_rate", "batch_size",
        "optimizer", "schedule", "train_seed", "classifier_seed",
        "hidden_dims", "jobs",
    }
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    part = PartitionConfig(
        outer_radius=float(table.get("outer_radius", 150.0)),
        step=float(table.get("step", 50.0)),
        inner_radius=float(table.get("inner_radius", 25.0 * math.sqrt(2.0))),
        strict=bool(table.get("strict_coverage", True)),
    )
    for key, attr in (("compress_outer_radius", "outer_radius"),
                      ("compress_inner_radius", "inner_radius")):
        if key in table and float(table[key]) != getattr(part, attr):
            raise ConfigError(
                f"{key}={table[key]} conflicts with partition {attr}={getattr(part, attr)}"
            )
    binning = HagBinning(
        boundaries=tuple(table.get("hag_boundaries", (0.0, 0.2, 0.5, 1.0, 3.0))),
        weights=tuple(table.get("hag_weights", (1.0, 2.0, 3.0, 4.0, 5.0, 6.0))),
    )
    # batch_size 0 in the file means full batch.
    raw_batch = table.get("batch_size", 4096)
    optimizer = OptimizerSettings(
        rule=str(table.get("optimizer", "adam")),
        learning_rate=float(table.get("learning_rate", 1e-2)),
        schedule=str(table.get("schedule", "cosine")),
        epochs=int(table.get("epochs", 200)),
        batch_size=(int(raw_batch) if raw_batch else None),
        seed=int(table.get("train_seed", 0)),
    )
    return PipelineConfig(
        partition=part,
        outer_compressed_radius=float(table.get("outer_compressed_radius", 44.0)),
        compression=bool(table.get("compression", True)),
        voxel_size=float(table.get("voxel_size", 0.5)),
        extra_voxel_sizes=tuple(float(s) for s in table.get("extra_voxel_sizes", (2.0, 8.0, 32.0))),
        neighbor_radius=float(table.get("neighbor_radius", 2.0)),
        binning=binning,
        lam=float(table.get("lambda", 0.5)),
        dtm_cell_size=float(table.get("dtm_cell_size", 1.0)),
        relabel_outliers=bool(table.get("relabel_outliers", True)),
        optimizer=optimizer,
        classifier_seed=int(table.get("classifier_seed", 0)),
        hidden_dims=tuple(int(h) for h in table.get("hidden_dims", (8, 16, 16))),
        jobs=int(table.get("jobs", 1)),
    )


DEFAULT_CONFIG_TOML = """\
# Pipeline defaults. Values in the [defaults] table are the canonical
# configuration; other tables overlay it.
[defaults]
outer_radius = 150.0
step = 50.0
inner_radius = 35.35533905932738  # 25 * sqrt(2) = step * sqrt(2) / 2
outer_compressed_radius = 44.0
compression = true
voxel_size = 0.5
extra_voxel_sizes = [2.0, 8.0, 32.0]
neighbor_radius = 2.0
hag_boundaries = [0.0, 0.2, 0.5, 1.0, 3.0]
hag_weights = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
lambda = 0.5
dtm_cell_size = 1.0
epochs = 200
learning_rate = 0.01
batch_size = 4096  # 0 = full batch
optimizer = "adam"
schedule = "cosine"

# Uncompressed reference configuration: whole patches at a coarser grid.
[baseline]
compression = false
voxel_size = 1.0
"""


# -- stage error tagging ------------------------------------------------------


@contextmanager
def _stage(name: str):
    try:
        yield
    except GflowError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


# -- classifier adapters ------------------------------------------------------


class OracleClassifier:
    """Emits probability 1 for truth-ground points, 0 otherwise.

    Used to exercise the data path end to end without any learning; with it
    the pipeline must reproduce the truth labels exactly.
    """

    needs_features = False

    def __init__(self, truth_labels: np.ndarray):
        self._ground = np.asarray(truth_labels) == ClassLabel.GROUND

    def ground_probabilities(self, features, global_ids: np.ndarray) -> np.ndarray:
        return self._ground[global_ids].astype(np.float64)


class ToyClassifierAdapter:
    """Feature-driven adapter around a trained toy classifier checkpoint."""

    needs_features = True

    def __init__(self, classifier: ToyClassifier, normalizer: FeatureNormalizer | None):
        self.classifier = classifier
        self.normalizer = normalizer

    @classmethod
    def from_checkpoint(cls, path) -> tuple["ToyClassifierAdapter", dict]:
        classifier, header = load_checkpoint(path)
        normalizer = None
        if header.get("normalizer"):
            normalizer = FeatureNormalizer.from_dict(header["normalizer"])
        return cls(classifier, normalizer), header

    def ground_probabilities(self, features: np.ndarray, global_ids) -> np.ndarray:
        if self.normalizer is not None:
            features = self.normalizer.transform(features)
        return self.classifier.predict_ground_prob(features)


# -- persistence helpers ------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _save_npy(path: Path, arr: np.ndarray) -> None:
    np.save(path, arr)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _pmap(fn, items, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def write_patches_dir(cloud: LabeledCloud, patches: list[Patch], out_dir,
                      cfg: PartitionConfig, compressed_xyz: list[np.ndarray] | None = None,
                      extra: dict | None = None) -> dict:
    """Persist patches (optionally with compressed coordinates) plus manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    hashes = {}
    for i, patch in enumerate(patches):
        sub = cloud.take(patch.member_indices)
        if compressed_xyz is not None:
            sub = LabeledCloud(compressed_xyz[i], sub.labels, dict(sub.channels))
        names = {
            "cloud": f"patch_{i:04d}.gfb",
            "mask": f"patch_{i:04d}.mask.npy",
            "ids": f"patch_{i:04d}.ids.npy",
        }
        write_cloud(sub, out_dir / names["cloud"])
        _save_npy(out_dir / names["mask"], patch.central_mask)
        _save_npy(out_dir / names["ids"], patch.member_indices)
        for f in names.values():
            hashes[f] = _sha256(out_dir / f)
        entries.append({
            "index": i,
            "center": [patch.center[0], patch.center[1]],
            "count": len(patch),
            "files": names,
        })
    manifest = {
        "kind": "compressed" if compressed_xyz is not None else "patches",
        "n_points": len(cloud),
        "outer_radius": cfg.outer_radius,
        "inner_radius": cfg.inner_radius,
        "step": cfg.step,
        "patches": entries,
        "hashes": hashes,
    }
    manifest.update(extra or {})
    _write_json(out_dir / "manifest.json", manifest)
    return manifest


def read_patches_dir(path) -> tuple[dict, list[tuple[LabeledCloud, Patch]]]:
    """Load a patches/compressed directory back into memory."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise CloudIOError(f"no manifest.json in {path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    loaded = []
    for entry in manifest["patches"]:
        sub = read_cloud(path / entry["files"]["cloud"], relabel=False)
        mask = np.load(path / entry["files"]["mask"])
        ids = np.load(path / entry["files"]["ids"])
        patch = Patch(
            center=(entry["center"][0], entry["center"][1]),
            member_indices=ids,
            central_mask=mask,
            outer_radius=manifest["outer_radius"],
            inner_radius=manifest["inner_radius"],
        )
        loaded.append((sub, patch))
    return manifest, loaded


def write_predictions_dir(out_dir, n_points: int,
                          preds: list[tuple[np.ndarray, np.ndarray]]) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    hashes = {}
    for i, (ids, probs) in enumerate(preds):
        names = {"ids": f"pred_{i:04d}.ids.npy", "probs": f"pred_{i:04d}.probs.npy"}
        _save_npy(out_dir / names["ids"], ids)
        _save_npy(out_dir / names["probs"], probs)
        for f in names.values():
            hashes[f] = _sha256(out_dir / f)
        entries.append({"index": i, "count": int(ids.shape[0]), "files": names})
    manifest = {"kind": "predictions", "n_points": n_points,
                "patches": entries, "hashes": hashes}
    _write_json(out_dir / "manifest.json", manifest)
    return manifest


def read_predictions_dir(path) -> tuple[int, list[tuple[np.ndarray, np.ndarray]]]:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise CloudIOError(f"no manifest.json in {path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    preds = []
    for entry in manifest["patches"]:
        ids = np.load(path / entry["files"]["ids"])
        probs = np.load(path / entry["files"]["probs"])
        preds.append((ids, probs))
    return int(manifest["n_points"]), preds


def merge_predictions(n_points: int,
                      preds: list[tuple[np.ndarray, np.ndarray]]) -> MergeResult:
    acc = PredictionAccumulator(n_points)
    for ids, probs in preds:
        acc.accumulate_many(ids, probs)
    return finalize(acc, allow_uncovered=True)


def build_labeled_cloud(cloud: LabeledCloud,
                        preds: list[tuple[np.ndarray, np.ndarray]]
                        ) -> tuple[LabeledCloud, MergeResult]:
    """Soft-vote predictions into a labeled cloud carrying the averaged
    ground probability as a channel."""
    acc = PredictionAccumulator(len(cloud))
    for ids, probs in preds:
        acc.accumulate_many(ids, probs)
    result = finalize(acc, allow_uncovered=True)
    mean = np.zeros(len(cloud))
    covered = acc.votes > 0
    np.divide(acc.cum_prob, acc.votes, out=mean, where=covered)
    channels = dict(cloud.channels)
    channels["ground_prob"] = mean
    return LabeledCloud(cloud.xyz, result.labels, channels), result


def rerun_merge(cloud: LabeledCloud, workdir) -> tuple[LabeledCloud, MergeResult]:
    """Redo the merge stage from persisted predictions; must reproduce the
    full run's labeled output byte for byte."""
    n_points, preds = read_predictions_dir(Path(workdir) / "predictions")
    if n_points != len(cloud):
        raise ConfigError(
            f"predictions cover {n_points} points but cloud has {len(cloud)}"
        )
    with _stage("merge"):
        return build_labeled_cloud(cloud, preds)


# -- core stage driver --------------------------------------------------------


def _compress_patches(cfg: PipelineConfig, cloud: LabeledCloud,
                      patches: list[Patch]) -> list[CompressedPatch]:
    if cfg.compression:
        ccfg = cfg.compress_config()
        return _pmap(lambda p: compress_patch(p, cloud, ccfg), patches, cfg.jobs)
    # Baseline path: carry original coordinates through the same structure.
    return [
        CompressedPatch(
            xyz=cloud.xyz[p.member_indices].copy(),
            labels=cloud.labels[p.member_indices].copy(),
            channels={k: v[p.member_indices].copy() for k, v in cloud.channels.items()},
            center=p.center,
            member_indices=p.member_indices,
            central_mask=p.central_mask,
            source=p,
        )
        for p in patches
    ]


def compute_predictions(cfg: PipelineConfig, cloud: LabeledCloud, classifier,
                        workdir=None) -> tuple[list[tuple[np.ndarray, np.ndarray]], int]:
    """Partition, compress, featurize, and classify one cloud.

    Returns the per-patch ``(global_ids, probabilities)`` votes and the
    patch count. When ``workdir`` is given, per-stage artifacts are
    persisted there.
    """
    with _stage("partition"):
        patches = partition(cloud, cfg.partition)
    with _stage("compress"):
        cpatches = _compress_patches(cfg, cloud, patches)
    if workdir is not None:
        workdir = Path(workdir)
        with _stage("partition"):
            write_patches_dir(cloud, patches, workdir / "patches", cfg.partition)
        with _stage("compress"):
            write_patches_dir(
                cloud, patches, workdir / "compressed", cfg.partition,
                compressed_xyz=[cp.xyz for cp in cpatches],
                extra={"outer_compressed_radius": cfg.outer_compressed_radius},
            )

    recipe = cfg.feature_recipe()

    def predict_one(cp: CompressedPatch) -> tuple[np.ndarray, np.ndarray]:
        if classifier.needs_features:
            with _stage("features"):
                feats, ids = build_patch_features(cp, recipe)
        else:
            feats, ids = None, cp.central_indices
        with _stage("predict"):
            probs = classifier.ground_probabilities(feats, ids)
        return ids, np.asarray(probs, dtype=np.float64)

    preds = _pmap(predict_one, cpatches, cfg.jobs)
    if workdir is not None:
        with _stage("predict"):
            write_predictions_dir(workdir / "predictions", len(cloud), preds)
    return preds, len(patches)


def evaluate_labels(cfg: PipelineConfig, cloud: LabeledCloud, pred_labels: np.ndarray,
                    reference_dtm: ev.DtmRaster | None = None) -> dict:
    """Compare predicted against truth labels and DTMs; returns report body."""
    with _stage("evaluate"):
        counts = ev.confusion(pred_labels, cloud.labels)
        mets = ev.metrics(counts)
        b = bounds(cloud)
        if reference_dtm is not None:
            grid = reference_dtm.grid
        else:
            grid = ev.grid_from_bounds(b.min_x, b.min_y, b.max_x, b.max_y,
                                       cfg.dtm_cell_size)
            reference_dtm = ev.rasterize_dtm(
                cloud.xyz[cloud.labels == ClassLabel.GROUND], grid
            )
        pred_ground = cloud.xyz[pred_labels == ClassLabel.GROUND]
        pred_dtm = ev.rasterize_dtm(pred_ground, grid)
        rmse = ev.dtm_rmse(pred_dtm, reference_dtm)

        if "hag_bin" in cloud.channels:
            truth_bins = cloud.channels["hag_bin"]
        else:
            truth_bins = attach_hag_channels(cloud, cfg.binning).channels["hag_bin"]
        by_bin = ev.misclassified_nonground_by_bin(
            pred_labels, cloud.labels, truth_bins, cfg.binning.bin_count
        )

    def _json_safe(v: float):
        return None if isinstance(v, float) and math.isnan(v) else v

    return {
        "confusion": counts.to_dict(),
        "metrics": {
            "overall_accuracy": mets["overall_accuracy"],
            "iou_nonground": _json_safe(mets["iou_nonground"]),
            "iou_ground": _json_safe(mets["iou_ground"]),
            "dtm_rmse": rmse,
        },
        "misclassified_nonground_by_bin": by_bin,
        "dtm": {
            "cell_size": grid.cell_size,
            "predicted_valid_cells": pred_dtm.n_valid,
            "reference_valid_cells": reference_dtm.n_valid,
            "compared_cells": int(np.count_nonzero(pred_dtm.valid & reference_dtm.valid)),
        },
    }


def run_pipeline(cfg: PipelineConfig, input_path, mode: str, workdir,
                 classifier=None, checkpoint_path=None, oracle: bool = False,
                 ref_dtm_path=None, report_path=None,
                 train_inputs: list | None = None) -> dict:
    """One-shot driver behind ``gflow run``.

    Modes: ``train-toy`` (train on ``train_inputs`` or the single input),
    ``predict`` (write merged labels), ``evaluate`` (predict plus metrics
    report). Raises with a ``stage`` attribute on failure.
    """
    if mode not in ("train-toy", "predict", "evaluate"):
        raise ConfigError(f"unknown mode {mode!r}")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    if mode == "train-toy":
        inputs = train_inputs if train_inputs else [input_path]
        report = train_toy_pipeline(cfg, inputs, workdir / "classifier.ckpt")
        if report_path is None:
            report_path = workdir / "report.json"
        _write_json(Path(report_path), report)
        return report

    with _stage("ingest"):
        if input_path is None:
            raise CloudIOError("no input cloud given")
        cloud = read_cloud(input_path, relabel=cfg.relabel_outliers)

    with _stage("ingest"):
        if oracle:
            classifier = OracleClassifier(cloud.labels)
        elif classifier is None:
            if checkpoint_path is None:
                raise ConfigError("need a checkpoint (or the oracle) to predict")
            classifier, _ = ToyClassifierAdapter.from_checkpoint(checkpoint_path)

    preds, n_patches = compute_predictions(cfg, cloud, classifier, workdir=workdir)
    with _stage("merge"):
        labeled, result = build_labeled_cloud(cloud, preds)
        write_cloud(labeled, workdir / "labeled.xyzl")

    report = {
        "mode": mode,
        "input": Path(input_path).name,
        "config": cfg.summary(),
        "n_points": len(cloud),
        "n_patches": n_patches,
        "uncovered_points": result.uncovered_count,
        "classifier": "oracle" if oracle else "toy-checkpoint",
    }
    if mode == "evaluate":
        reference = None
        if ref_dtm_path is not None:
            with _stage("evaluate"):
                reference = ev.read_esri_ascii(ref_dtm_path)
        report.update(evaluate_labels(cfg, cloud, result.labels, reference))
    if report_path is None:
        report_path = workdir / "report.json"
    _write_json(Path(report_path), report)
    return report


# -- training -----------------------------------------------------------------


def build_training_set(cfg: PipelineConfig, cloud: LabeledCloud):
    """Features and targets over every central point of every patch."""
    if "hag_bin" in cloud.channels:
        bins = cloud.channels["hag_bin"]
    else:
        bins = attach_hag_channels(cloud, cfg.binning).channels["hag_bin"]
    patches = partition(cloud, cfg.partition)
    cpatches = _compress_patches(cfg, cloud, patches)
    recipe = cfg.feature_recipe()
    rows = _pmap(lambda cp: build_patch_features(cp, recipe), cpatches, cfg.jobs)
    feats = np.vstack([r[0] for r in rows])
    ids = np.concatenate([r[1] for r in rows])
    y_cls = cloud.labels[ids].astype(np.int64) - 1
    y_bin = bins[ids]
    return feats, y_cls, y_bin


def train_toy_pipeline(cfg: PipelineConfig, input_paths: list,
                       checkpoint_path) -> dict:
    """Train the toy classifier on one or more labeled clouds and write a
    checkpoint; returns the training report."""
    all_feats, all_cls, all_bins = [], [], []
    names = []
    for path in input_paths:
        with _stage("ingest"):
            cloud = read_cloud(path, relabel=cfg.relabel_outliers)
        names.append(Path(path).name)
        with _stage("features"):
            feats, y_cls, y_bin = build_training_set(cfg, cloud)
        all_feats.append(feats)
        all_cls.append(y_cls)
        all_bins.append(y_bin)
    features = np.vstack(all_feats)
    y_cls = np.concatenate(all_cls)
    y_bin = np.concatenate(all_bins)

    with _stage("train"):
        normalizer = FeatureNormalizer.fit(features)
        recipe = cfg.feature_recipe()
        classifier = ToyClassifier(
            feature_dim=recipe.n_features,
            hidden_dims=cfg.hidden_dims,
            n_classes=2,
            n_bins=cfg.binning.bin_count,
            seed=cfg.classifier_seed,
        )
        result = train_toy(
            classifier, normalizer.transform(features), y_cls, y_bin,
            cfg.loss_config(), cfg.optimizer,
        )
        save_checkpoint(
            checkpoint_path, classifier, cfg.binning,
            feature_recipe=recipe.to_dict(), normalizer=normalizer.to_dict(),
        )
    return {
        "mode": "train-toy",
        "inputs": names,
        "config": cfg.summary(),
        "n_examples": int(features.shape[0]),
        "n_features": int(features.shape[1]),
        "checkpoint": Path(checkpoint_path).name,
        "loss_trace": result.loss_trace,
        "final_loss": result.loss_trace[-1]["total"] if result.loss_trace else None,
    }


# -- sensitivity sweep ----------------------------------------------------------


def derive_config(cfg: PipelineConfig, parameter: str, value) -> PipelineConfig:
    if parameter == "lambda":
        return replace(cfg, lam=float(value))
    if parameter == "roc":
        return replace(cfg, outer_compressed_radius=float(value))
    if parameter == "bins":
        return replace(cfg, binning=binning_with_bins(int(value)))
    raise ConfigError(f"unknown sweep parameter {parameter!r}; "
                      f"expected one of {SWEEP_PARAMETERS}")


def sensitivity_sweep(cfg: PipelineConfig, parameter: str, values,
                      train_paths: list, eval_path, workdir,
                      ref_dtm_path=None) -> dict:
    """Retrain and evaluate once per parameter value; aggregates an OA table."""
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    workdir = Path(workdir)
    reports = []
    oa_table = {}
    for i, value in enumerate(values):
        sub_cfg = derive_config(cfg, parameter, value)
        subdir = workdir / f"{parameter}_{i:02d}"
        subdir.mkdir(parents=True, exist_ok=True)
        train_report = train_toy_pipeline(sub_cfg, train_paths, subdir / "classifier.ckpt")
        report = run_pipeline(
            sub_cfg, eval_path, "evaluate", subdir,
            checkpoint_path=subdir / "classifier.ckpt",
            ref_dtm_path=ref_dtm_path,
        )
        report["sweep_value"] = value
        report["train_final_loss"] = train_report["final_loss"]
        reports.append(report)
        oa_table[str(value)] = report["metrics"]["overall_accuracy"]
    summary = {
        "parameter": parameter,
        "values": values,
        "overall_accuracy": oa_table,
        "reports": reports,
    }
    _write_json(workdir / "sweep.json", summary)
    return summary
