"""Losses with analytic gradients and a small from-scratch multi-task classifier.

The training objective combines a plain cross-entropy over ground/non-ground
with a height-bin cross-entropy whose per-bin weights grow with height, so
putting a tall object into the ground class costs more than a near-ground
confusion:

    L_hag   = -(1/N) sum_i sum_c w_c * y_ic * log(p_ic)
    L_total = (1 - lambda) * L_cls + lambda * L_hag

The classifier is a tanh MLP trunk with two parallel linear heads (class
logits and height-bin logits) sharing the trunk features. Prediction only
ever evaluates the classification head; the height head exists purely as a
training-time regularizer and is skipped at inference.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CloudIOError,
    CloudParseError,
    ConfigError,
    NumericError,
    TrainingDivergedError,
    ValidationError,
)
from .hag import HagBinning

LOG_CLAMP = 1e-12

# Internal class-index convention for the 2-class head: column 0 is
# non-ground, column 1 is ground (= ClassLabel code - 1).
NON_GROUND_COL = 0
GROUND_COL = 1

CHECKPOINT_MAGIC = b"GFCK"
CHECKPOINT_VERSION = 1


class ProbabilityClampWarning(UserWarning):
    """A target-class probability hit the log clamp; healthy runs never do."""


@dataclass(frozen=True)
class LossConfig:
    """Balance weight between the class loss and the height-bin loss."""

    lam: float = 0.5
    hag_binning: HagBinning = field(default_factory=HagBinning)
    hag_loss_kind: str = "weighted-cross-entropy"

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.hag_loss_kind == "smooth-l1-regression":
            raise NotImplementedError(
                "smooth-L1 height regression is a rejected variant and is not implemented"
            )
        if self.hag_loss_kind != "weighted-cross-entropy":
            raise ConfigError(f"unknown hag_loss_kind {self.hag_loss_kind!r}")


@dataclass(frozen=True)
class OptimizerSettings:
    """Batch size caps at the dataset size, so the default acts as full
    batch on toy sets and mini-batch on scene-scale ones; ``None`` forces
    full batch."""

    rule: str = "adam"
    learning_rate: float = 1e-2
    schedule: str = "cosine"
    epochs: int = 200
    batch_size: int | None = 4096
    seed: int = 0

    def __post_init__(self):
        if self.rule not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer rule {self.rule!r}")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


def validate_prob_rows(preds: np.ndarray) -> None:
    """Check that every row is a probability vector (values in (0,1),
    summing to 1 within 1e-9)."""
    preds = np.asarray(preds)
    if preds.ndim != 2:
        raise ValidationError(f"predictions must be (N, C), got {preds.shape}")
    if preds.size == 0:
        return
    if preds.min() <= 0.0 or preds.max() >= 1.0:
        raise ValidationError("probabilities must lie strictly inside (0, 1)")
    sums = preds.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-9:
        raise ValidationError("probability rows must sum to 1 within 1e-9")


def _target_log_probs(preds: np.ndarray, targets: np.ndarray, n_classes: int) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if preds.ndim != 2 or preds.shape[1] != n_classes:
        raise ValidationError(
            f"predictions must be (N, {n_classes}), got {preds.shape}"
        )
    if targets.shape != (preds.shape[0],):
        raise ValidationError(
            f"targets length {targets.shape} does not match {preds.shape[0]} predictions"
        )
    if preds.shape[0] == 0:
        raise ValidationError("need at least one prediction")
    if targets.min() < 0 or targets.max() >= n_classes:
        raise ValidationError("target index out of range")
    p = preds[np.arange(preds.shape[0]), targets]
    if np.any(p <= LOG_CLAMP) or not np.all(np.isfinite(p)):
        warnings.warn(
            "target-class probability at or below the log clamp",
            ProbabilityClampWarning,
        )
        p = np.clip(p, LOG_CLAMP, None)
    return np.log(p)


def hag_loss(preds: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> float:
    """Height-bin weighted cross-entropy, mean over points.

    With one-hot targets this is (1/N) * sum_i w[t_i] * (-log p[i, t_i]).
    """
    weights = np.asarray(weights, dtype=np.float64)
    logp = _target_log_probs(preds, targets, weights.shape[0])
    targets = np.asarray(targets, dtype=np.int64)
    return float(np.mean(weights[targets] * -logp))


def cls_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    """Standard 2-class cross-entropy, mean over points."""
    logp = _target_log_probs(preds, targets, 2)
    return float(np.mean(-logp))


def total_loss(cls: float, hag: float, lam: float) -> float:
    """Convex combination ``(1 - lambda) * cls + lambda * hag``."""
    if not (0.0 <= lam <= 1.0):
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    return (1.0 - lam) * cls + lam * hag


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _make_rng(seed: int) -> np.random.Generator:
    # Philox: 64-bit counter-based, stable and portable across platforms.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


class ToyClassifier:
    """tanh MLP trunk with parallel class and height-bin heads.

    Parameters are float64 and initialized uniformly in
    ``[-1/sqrt(fan_in), +1/sqrt(fan_in)]`` from a seeded Philox stream, so
    construction is deterministic. ``head_evals`` counts head evaluations;
    prediction must leave the height head's counter untouched.
    """

    def __init__(self, feature_dim: int, hidden_dims: tuple[int, ...] = (8, 16, 16),
                 n_classes: int = 2, n_bins: int = 6, seed: int = 0):
        if feature_dim < 1 or n_classes < 2 or n_bins < 2:
            raise ConfigError("feature_dim >= 1, n_classes >= 2, n_bins >= 2 required")
        if any(h < 1 for h in hidden_dims):
            raise ConfigError(f"hidden dims must be positive: {hidden_dims}")
        self.feature_dim = int(feature_dim)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.n_classes = int(n_classes)
        self.n_bins = int(n_bins)
        self.seed = int(seed)
        rng = _make_rng(seed)
        dims = [self.feature_dim, *self.hidden_dims]
        self.trunk: list[tuple[np.ndarray, np.ndarray]] = []
        for d_in, d_out in zip(dims, dims[1:]):
            self.trunk.append(self._init_layer(rng, d_in, d_out))
        self.cls_head = self._init_layer(rng, dims[-1], self.n_classes)
        self.hag_head = self._init_layer(rng, dims[-1], self.n_bins)
        self.head_evals = {"cls": 0, "hag": 0}

    @staticmethod
    def _init_layer(rng: np.random.Generator, d_in: int, d_out: int):
        lim = 1.0 / math.sqrt(d_in)
        w = rng.uniform(-lim, lim, size=(d_in, d_out))
        b = rng.uniform(-lim, lim, size=d_out)
        return (w, b)

    # -- parameter plumbing ------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in canonical order (trunk, cls head, hag head)."""
        out: list[np.ndarray] = []
        for w, b in self.trunk:
            out.extend((w, b))
        out.extend(self.cls_head)
        out.extend(self.hag_head)
        return out

    def set_parameters(self, arrays: list[np.ndarray]) -> None:
        current = self.parameters()
        if len(arrays) != len(current):
            raise ConfigError("parameter count mismatch")
        for dst, src in zip(current, arrays):
            if dst.shape != src.shape:
                raise ConfigError(f"parameter shape mismatch: {dst.shape} vs {src.shape}")
            dst[...] = src

    def copy_parameters(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    # -- forward -----------------------------------------------------------

    def forward_trunk(self, features: np.ndarray) -> list[np.ndarray]:
        """Activations [input, h1, ..., hL]; input must be (N, feature_dim)."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.feature_dim:
            raise ValidationError(
                f"features must be (N, {self.feature_dim}), got {x.shape}"
            )
        acts = [x]
        for w, b in self.trunk:
            x = np.tanh(x @ w + b)
            acts.append(x)
        return acts

    def cls_logits(self, trunk_out: np.ndarray) -> np.ndarray:
        self.head_evals["cls"] += 1
        w, b = self.cls_head
        return trunk_out @ w + b

    def hag_logits(self, trunk_out: np.ndarray) -> np.ndarray:
        self.head_evals["hag"] += 1
        w, b = self.hag_head
        return trunk_out @ w + b

    def predict_ground_prob(self, features: np.ndarray) -> np.ndarray:
        """Softmax probability of the ground class; never touches the height head."""
        features = np.asarray(features, dtype=np.float64)
        if features.shape[0] == 0:
            return np.empty(0, dtype=np.float64)
        trunk_out = self.forward_trunk(features)[-1]
        probs = softmax(self.cls_logits(trunk_out))
        return probs[:, GROUND_COL]


def predict(classifier: ToyClassifier, features: np.ndarray) -> np.ndarray:
    """Module-level alias for :meth:`ToyClassifier.predict_ground_prob`."""
    return classifier.predict_ground_prob(features)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


def loss_gradients(classifier: ToyClassifier, features: np.ndarray,
                   class_targets: np.ndarray, bin_targets: np.ndarray,
                   cfg: LossConfig):
    """Analytic gradients of the total loss w.r.t. every parameter.

    Returns ``(grads, info)`` where ``grads`` matches
    :meth:`ToyClassifier.parameters` order and ``info`` carries the loss
    values of the batch.
    """
    n = np.asarray(features).shape[0]
    if n == 0:
        raise ValidationError("batch must be nonempty")
    weights = cfg.hag_binning.weight_array()
    if classifier.n_bins != weights.shape[0]:
        raise ConfigError(
            f"classifier has {classifier.n_bins} bins, binning has {weights.shape[0]}"
        )
    class_targets = np.asarray(class_targets, dtype=np.int64)
    bin_targets = np.asarray(bin_targets, dtype=np.int64)

    acts = classifier.forward_trunk(features)
    for li, h in enumerate(acts[1:], start=1):
        _check_finite(f"trunk layer {li} activation", h)
    trunk_out = acts[-1]
    zc = classifier.cls_logits(trunk_out)
    zh = classifier.hag_logits(trunk_out)
    _check_finite("class-head logits", zc)
    _check_finite("height-head logits", zh)
    pc = softmax(zc)
    ph = softmax(zh)

    l_cls = cls_loss(pc, class_targets)
    l_hag = hag_loss(ph, bin_targets, weights)
    l_total = total_loss(l_cls, l_hag, cfg.lam)

    yc = np.zeros_like(pc)
    yc[np.arange(n), class_targets] = 1.0
    yh = np.zeros_like(ph)
    yh[np.arange(n), bin_targets] = 1.0

    dzc = ((1.0 - cfg.lam) / n) * (pc - yc)
    dzh = (cfg.lam / n) * (weights[bin_targets][:, None] * (ph - yh))

    wc, _ = classifier.cls_head
    wh, _ = classifier.hag_head
    grad_cls = (trunk_out.T @ dzc, dzc.sum(axis=0))
    grad_hag = (trunk_out.T @ dzh, dzh.sum(axis=0))
    dh = dzc @ wc.T + dzh @ wh.T

    grad_trunk: list[tuple[np.ndarray, np.ndarray]] = []
    for k in range(len(classifier.trunk) - 1, -1, -1):
        w, _ = classifier.trunk[k]
        da = dh * (1.0 - acts[k + 1] ** 2)
        grad_trunk.append((acts[k].T @ da, da.sum(axis=0)))
        dh = da @ w.T
    grad_trunk.reverse()

    grads: list[np.ndarray] = []
    for gw, gb in grad_trunk:
        grads.extend((gw, gb))
    grads.extend(grad_cls)
    grads.extend(grad_hag)
    info = {"total": l_total, "cls": l_cls, "hag": l_hag}
    return grads, info


@dataclass
class TrainResult:
    classifier: ToyClassifier
    loss_trace: list[dict]


def _learning_rate(opt: OptimizerSettings, step: int, total_steps: int) -> float:
    if opt.schedule == "constant" or total_steps <= 1:
        return opt.learning_rate
    frac = step / max(total_steps - 1, 1)
    return opt.learning_rate * 0.5 * (1.0 + math.cos(math.pi * frac))


def train_toy(classifier: ToyClassifier, features: np.ndarray,
              class_targets: np.ndarray, bin_targets: np.ndarray,
              cfg: LossConfig, opt: OptimizerSettings) -> TrainResult:
    """Mini-batch training loop; deterministic given the optimizer seed.

    With ``epochs == 0`` the classifier is returned unchanged. A non-finite
    loss raises :class:`TrainingDivergedError` carrying the last finite
    parameter state.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n == 0:
        raise ValidationError("training set must be nonempty")
    trace: list[dict] = []
    if opt.epochs == 0:
        return TrainResult(classifier, trace)

    params = classifier.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    rng = _make_rng(opt.seed)
    batch = n if opt.batch_size is None else min(opt.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    total_steps = opt.epochs * steps_per_epoch
    last_good = classifier.copy_parameters()
    step = 0
    t = 0
    for epoch in range(opt.epochs):
        order = rng.permutation(n) if batch < n else np.arange(n)
        epoch_losses = []
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            try:
                grads, info = loss_gradients(
                    classifier, features[idx], class_targets[idx], bin_targets[idx], cfg
                )
            except NumericError as exc:
                classifier.set_parameters(last_good)
                raise TrainingDivergedError(
                    f"non-finite state at epoch {epoch}: {exc}", last_state=last_good
                ) from exc
            if not math.isfinite(info["total"]):
                classifier.set_parameters(last_good)
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}", last_state=last_good
                )
            lr = _learning_rate(opt, step, total_steps)
            if opt.rule == "adam":
                t += 1
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= beta1
                    mi += (1 - beta1) * g
                    vi *= beta2
                    vi += (1 - beta2) * (g * g)
                    mhat = mi / (1 - beta1 ** t)
                    vhat = vi / (1 - beta2 ** t)
                    p -= lr * mhat / (np.sqrt(vhat) + eps)
            else:
                for p, g in zip(params, grads):
                    p -= lr * g
            epoch_losses.append(info)
            step += 1
        last_good = classifier.copy_parameters()
        trace.append({
            "epoch": epoch,
            "total": float(np.mean([e["total"] for e in epoch_losses])),
            "cls": float(np.mean([e["cls"] for e in epoch_losses])),
            "hag": float(np.mean([e["hag"] for e in epoch_losses])),
        })
    return TrainResult(classifier, trace)


# -- checkpoint I/O ---------------------------------------------------------


def save_checkpoint(path, classifier: ToyClassifier, binning: HagBinning,
                    feature_recipe: dict, normalizer: dict | None = None) -> None:
    """Versioned binary checkpoint: JSON header plus raw float64 parameters."""
    recipe_hash = hashlib.sha256(
        json.dumps(feature_recipe, sort_keys=True).encode()
    ).hexdigest()
    header = {
        "version": CHECKPOINT_VERSION,
        "feature_dim": classifier.feature_dim,
        "hidden_dims": list(classifier.hidden_dims),
        "n_classes": classifier.n_classes,
        "n_bins": classifier.n_bins,
        "seed": classifier.seed,
        "binning": {
            "boundaries": list(binning.boundaries),
            "weights": list(binning.weights),
        },
        "feature_recipe": feature_recipe,
        "feature_recipe_hash": recipe_hash,
        "normalizer": normalizer,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)), blob]
    for p in classifier.parameters():
        parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as exc:
        raise CloudIOError(f"cannot write checkpoint {path}: {exc}")


def load_checkpoint(path):
    """Load a checkpoint; returns ``(classifier, header_dict)``."""
    try:
        data = open(path, "rb").read()
    except OSError as exc:
        raise CloudIOError(f"cannot read checkpoint {path}: {exc}")
    if len(data) < 16 or data[:4] != CHECKPOINT_MAGIC:
        raise CloudParseError("not a classifier checkpoint", str(path))
    version, header_len = struct.unpack_from("<IQ", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CloudParseError(f"unsupported checkpoint version {version}", str(path))
    header = json.loads(data[16:16 + header_len].decode("utf-8"))
    clf = ToyClassifier(
        feature_dim=header["feature_dim"],
        hidden_dims=tuple(header["hidden_dims"]),
        n_classes=header["n_classes"],
        n_bins=header["n_bins"],
        seed=header.get("seed", 0),
    )
    offset = 16 + header_len
    arrays = []
    for p in clf.parameters():
        nbytes = p.size * 8
        if offset + nbytes > len(data):
            raise CloudParseError("truncated checkpoint payload", str(path))
        arrays.append(
            np.frombuffer(data, dtype="<f8", count=p.size, offset=offset).reshape(p.shape)
        )
        offset += nbytes
    if offset != len(data):
        raise CloudParseError("trailing bytes in checkpoint", str(path))
    clf.set_parameters([a.copy() for a in arrays])
    return clf, header
