import math
import warnings

import numpy as np
import pytest

from gflow.errors import ConfigError, TrainingDivergedError, ValidationError
from gflow.hag import HagBinning
from gflow.learn import (
    LossConfig,
    OptimizerSettings,
    ProbabilityClampWarning,
    ToyClassifier,
    cls_loss,
    hag_loss,
    load_checkpoint,
    loss_gradients,
    predict,
    save_checkpoint,
    softmax,
    total_loss,
    train_toy,
    validate_prob_rows,
)

WEIGHTS = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])


def scalar_hag_loss(preds, targets, weights):
    """Independent scalar evaluation: full double sum over points and bins
    with explicit one-hot indicators."""
    n = len(targets)
    total = 0.0
    for i in range(n):
        for c in range(len(weights)):
            y = 1.0 if targets[i] == c else 0.0
            total += weights[c] * y * (-math.log(preds[i][c]))
    return total / n


def test_hag_loss_uniform_target_bin0():
    preds = np.full((1, 6), 1.0 / 6.0)
    expected = scalar_hag_loss(preds, [0], WEIGHTS)
    got = hag_loss(preds, np.array([0]), WEIGHTS)
    assert abs(got - expected) < 1e-12
    assert abs(got - math.log(6.0)) < 1e-9


def test_hag_loss_half_prob_bin5():
    preds = np.array([[0.1, 0.1, 0.1, 0.1, 0.1, 0.5]])
    expected = scalar_hag_loss(preds, [5], WEIGHTS)
    got = hag_loss(preds, np.array([5]), WEIGHTS)
    assert abs(got - expected) < 1e-12
    assert abs(got - 6.0 * math.log(2.0)) < 1e-9


def test_hag_loss_perfect_prediction_tends_to_zero():
    preds = np.full((1, 6), 1e-13)
    preds[0, 2] = 1.0 - 5e-13
    assert hag_loss(preds, np.array([2]), WEIGHTS) < 1e-9


def test_hag_loss_matches_scalar_oracle_random():
    rng = np.random.default_rng(19)
    for _ in range(20):
        n = rng.integers(1, 8)
        raw = rng.uniform(0.1, 1.0, size=(n, 6))
        preds = raw / raw.sum(axis=1, keepdims=True)
        targets = rng.integers(0, 6, size=n)
        assert hag_loss(preds, targets, WEIGHTS) == pytest.approx(
            scalar_hag_loss(preds, targets, WEIGHTS), abs=1e-12)


def test_weight_ratio_is_exactly_six():
    rng = np.random.default_rng(23)
    for _ in range(50):
        raw = rng.uniform(0.05, 1.0, size=6)
        raw[5] = raw[0]
        preds = (raw / raw.sum()).reshape(1, 6)
        if preds[0, 0] != preds[0, 5]:
            continue
        low = hag_loss(preds, np.array([0]), WEIGHTS)
        high = hag_loss(preds, np.array([5]), WEIGHTS)
        assert high == 6.0 * low


def test_cls_loss_examples():
    assert cls_loss(np.array([[0.5, 0.5]]), np.array([0])) == pytest.approx(
        math.log(2.0), abs=1e-12)
    near_one = np.array([[1.0 - 1e-12, 1e-12]])
    assert cls_loss(near_one, np.array([0])) < 1e-9
    a = cls_loss(np.array([[0.3, 0.7]]), np.array([1]))
    b = cls_loss(np.array([[0.9, 0.1]]), np.array([0]))
    both = cls_loss(np.array([[0.3, 0.7], [0.9, 0.1]]), np.array([1, 0]))
    assert both == pytest.approx((a + b) / 2.0, abs=1e-12)


def test_loss_validation():
    with pytest.raises(ValidationError):
        hag_loss(np.full((2, 6), 1 / 6), np.array([0]), WEIGHTS)
    with pytest.raises(ValidationError):
        cls_loss(np.array([[0.5, 0.5]]), np.array([2]))
    with pytest.raises(ValidationError):
        validate_prob_rows(np.array([[0.5, 0.6]]))


def test_clamp_warns_and_stays_finite():
    preds = np.array([[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]])
    with pytest.warns(ProbabilityClampWarning):
        value = hag_loss(preds, np.array([1]), WEIGHTS)
    assert math.isfinite(value)
    healthy = np.full((4, 6), 1.0 / 6.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ProbabilityClampWarning)
        hag_loss(healthy, np.array([0, 1, 2, 3]), WEIGHTS)


def test_total_loss_endpoints_and_affinity():
    assert total_loss(0.7, 3.0, 0.0) == 0.7
    assert total_loss(0.7, 3.0, 1.0) == 3.0
    assert total_loss(0.6, 4.0, 0.5) == pytest.approx(2.3, abs=1e-12)
    # Dyadic values make the affinity exact in floating point.
    c, h = 0.5, 4.0
    for lam1, lam2 in [(0.0, 0.25), (0.25, 0.75), (0.5, 1.0)]:
        slope = (total_loss(c, h, lam2) - total_loss(c, h, lam1)) / (lam2 - lam1)
        assert slope == h - c
    with pytest.raises(ConfigError):
        total_loss(1.0, 1.0, 1.5)


def finite_difference_grads(clf, feats, y_cls, y_bin, cfg, h=1e-5):
    """Central-difference oracle over every parameter entry."""
    params = clf.parameters()
    grads = [np.zeros_like(p) for p in params]

    def loss_value():
        trunk = clf.forward_trunk(feats)[-1]
        pc = softmax(trunk @ clf.cls_head[0] + clf.cls_head[1])
        ph = softmax(trunk @ clf.hag_head[0] + clf.hag_head[1])
        return total_loss(
            cls_loss(pc, y_cls),
            hag_loss(ph, y_bin, cfg.hag_binning.weight_array()),
            cfg.lam,
        )

    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_value()
            flat_p[i] = orig - h
            down = loss_value()
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2 * h)
    return grads


def _relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def check_gradients(seed, lam=None):
    rng = np.random.default_rng(seed)
    feature_dim = int(rng.integers(2, 6))
    hidden = tuple(int(h) for h in rng.integers(2, 7, size=rng.integers(1, 3)))
    n_bins = 6
    clf = ToyClassifier(feature_dim, hidden, n_bins=n_bins, seed=seed)
    n = int(rng.integers(2, 6))
    feats = rng.normal(size=(n, feature_dim))
    y_cls = rng.integers(0, 2, size=n)
    y_bin = rng.integers(0, n_bins, size=n)
    if lam is None:
        lam = float(rng.uniform(0, 1))
    cfg = LossConfig(lam=lam)
    analytic, _ = loss_gradients(clf, feats, y_cls, y_bin, cfg)
    numeric = finite_difference_grads(clf, feats, y_cls, y_bin, cfg)
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        for a, b in zip(ga.reshape(-1), gn.reshape(-1)):
            worst = max(worst, _relative_error(a, b))
    return worst


def test_gradients_match_finite_differences():
    for seed in range(10):
        assert check_gradients(seed) < 1e-4


def test_lambda_zero_kills_hag_head_gradients():
    clf = ToyClassifier(3, (4,), seed=1)
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(5, 3))
    grads, _ = loss_gradients(clf, feats, rng.integers(0, 2, 5),
                              rng.integers(0, 6, 5), LossConfig(lam=0.0))
    gw_hag, gb_hag = grads[-2], grads[-1]
    assert np.all(gw_hag == 0.0)
    assert np.all(gb_hag == 0.0)


def test_zero_network_classification_gradient_antisymmetric():
    clf = ToyClassifier(2, (3,), seed=0)
    clf.set_parameters([np.zeros_like(p) for p in clf.parameters()])
    feats = np.array([[1.0, -1.0], [-1.0, 1.0]])
    grads, _ = loss_gradients(clf, feats, np.array([0, 0]), np.array([0, 0]),
                              LossConfig(lam=0.0))
    gb_cls = grads[-3]
    assert gb_cls.shape == (2,)
    assert gb_cls[0] != 0.0
    assert gb_cls[0] == -gb_cls[1]


def test_train_separable_toy_set():
    rng = np.random.default_rng(0)
    n = 200
    x = np.vstack([
        rng.normal(loc=(-2.0, 0.0), scale=0.3, size=(n, 2)),
        rng.normal(loc=(2.0, 0.0), scale=0.3, size=(n, 2)),
    ])
    y_cls = np.array([0] * n + [1] * n)
    y_bin = np.array([5] * n + [0] * n)
    clf = ToyClassifier(2, (8, 8), seed=3)
    result = train_toy(clf, x, y_cls, y_bin, LossConfig(),
                       OptimizerSettings(epochs=200))
    assert result.loss_trace[-1]["cls"] < 0.1


def test_train_zero_epochs_is_identity():
    clf = ToyClassifier(2, (4,), seed=5)
    before = clf.copy_parameters()
    train_toy(clf, np.zeros((3, 2)), np.zeros(3, dtype=int), np.zeros(3, dtype=int),
              LossConfig(), OptimizerSettings(epochs=0))
    for a, b in zip(before, clf.parameters()):
        assert np.array_equal(a, b)


def test_train_deterministic_given_seed():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(64, 3))
    y_cls = rng.integers(0, 2, 64)
    y_bin = rng.integers(0, 6, 64)
    opt = OptimizerSettings(epochs=12, batch_size=16, seed=9)
    r1 = train_toy(ToyClassifier(3, (5,), seed=2), x, y_cls, y_bin, LossConfig(), opt)
    r2 = train_toy(ToyClassifier(3, (5,), seed=2), x, y_cls, y_bin, LossConfig(), opt)
    assert r1.loss_trace == r2.loss_trace
    for a, b in zip(r1.classifier.parameters(), r2.classifier.parameters()):
        assert np.array_equal(a, b)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_raises_with_last_state():
    rng = np.random.default_rng(11)
    x = np.array([[1.0, -1.0]] * 8)
    clf = ToyClassifier(2, (4,), seed=1)
    # Parameters already blown up: the loop must detect the non-finite
    # state and restore the last finite parameters before raising.
    blown = [np.full_like(p, np.inf) for p in clf.parameters()]
    clf.set_parameters(blown)
    snapshot = clf.copy_parameters()
    with pytest.raises(TrainingDivergedError) as err:
        train_toy(clf, x, rng.integers(0, 2, 8), rng.integers(0, 6, 8),
                  LossConfig(), OptimizerSettings(epochs=3, rule="sgd"))
    assert err.value.last_state is not None
    for a, b in zip(clf.parameters(), snapshot):
        assert np.array_equal(a, b)


def test_predict_symmetric_when_head_zeroed():
    clf = ToyClassifier(4, (6,), seed=8)
    w, b = clf.cls_head
    w[...] = 0.0
    b[...] = 0.0
    probs = predict(clf, np.random.default_rng(0).normal(size=(10, 4)))
    assert np.all(probs == 0.5)


def test_predict_empty_input():
    clf = ToyClassifier(4, (6,), seed=8)
    assert predict(clf, np.empty((0, 4))).shape == (0,)


def test_predict_dimension_mismatch():
    clf = ToyClassifier(4, (6,), seed=8)
    with pytest.raises(ValidationError):
        predict(clf, np.zeros((3, 5)))


def test_predict_never_evaluates_hag_head():
    clf = ToyClassifier(4, (6,), seed=8)
    before = dict(clf.head_evals)
    predict(clf, np.random.default_rng(1).normal(size=(20, 4)))
    assert clf.head_evals["hag"] == before["hag"]
    assert clf.head_evals["cls"] == before["cls"] + 1


def test_prob_rows_normalized():
    clf = ToyClassifier(3, (5,), seed=4)
    trunk = clf.forward_trunk(np.random.default_rng(2).normal(size=(40, 3)))[-1]
    probs = softmax(clf.cls_logits(trunk))
    validate_prob_rows(probs)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) <= 1e-9


def test_smooth_l1_variant_not_implemented():
    with pytest.raises(NotImplementedError):
        LossConfig(hag_loss_kind="smooth-l1-regression")


def test_checkpoint_roundtrip(tmp_path):
    clf = ToyClassifier(5, (8, 16, 16), n_bins=6, seed=21)
    binning = HagBinning()
    recipe = {"primary_voxel_size": 0.5, "extra_voxel_sizes": [2.0], "neighbor_radius": 2.0}
    norm = {"mean": [0.0] * 5, "std": [1.0] * 5}
    path = tmp_path / "clf.ckpt"
    save_checkpoint(path, clf, binning, recipe, norm)
    loaded, header = load_checkpoint(path)
    assert header["feature_recipe"] == recipe
    assert header["binning"]["weights"] == list(binning.weights)
    assert header["normalizer"] == norm
    assert len(header["feature_recipe_hash"]) == 64
    for a, b in zip(clf.parameters(), loaded.parameters()):
        assert np.array_equal(a, b)
    x = np.random.default_rng(3).normal(size=(7, 5))
    assert np.array_equal(predict(clf, x), predict(loaded, x))


def test_optimizer_settings_validation():
    with pytest.raises(ConfigError):
        OptimizerSettings(rule="lbfgs")
    with pytest.raises(ConfigError):
        OptimizerSettings(epochs=-1)
    with pytest.raises(ConfigError):
        OptimizerSettings(learning_rate=0.0)
