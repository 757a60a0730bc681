"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
"""
import json
import os
import time

import numpy as np
import pytest
from PIL import Image

from sobelcnn.cli import main
from sobelcnn.evaluation import confusion, metrics, roc_auc, cross_validate
from sobelcnn.images import prepare_dataset, sobel, sobel_magnitude
from sobelcnn.network import (
    NetworkSpec,
    backward,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    forward,
    init_params,
    maxpool2d_backward,
    maxpool2d_forward,
    relu,
    relu_backward,
    sigmoid,
)
from sobelcnn.synthetic import make_dataset, write_image_dir
from sobelcnn.training import TrainConfig, bce_loss, hinge_loss, one_hot
from conftest import (
    auc_pairwise,
    central_difference,
    conv_brute_force,
    max_relative_error,
    metrics_recount,
    tiny_spec,
)


def _report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}")
    assert ok, f"{name} failed{suffix}"


# ------------------------------------------------------------------ 1

def test_acceptance_gradient_suite():
    """Every layer and both losses vs central differences (64-bit, step 1e-4),
    1e-4 relative per component; end-to-end tiny network within 1e-3; < 2 min."""
    t0 = time.time()
    rng = np.random.default_rng(101)
    eps = 1e-4
    worst_layer = 0.0

    # conv2d
    x = rng.standard_normal((2, 6, 6))
    kernels = rng.standard_normal((3, 2, 3, 3))
    bias = rng.standard_normal(3)
    up = rng.standard_normal((3, 4, 4))
    ig, kg, bg = conv2d_backward(x, kernels, up)
    worst_layer = max(
        worst_layer,
        max_relative_error(ig, central_difference(
            lambda a: float(np.sum(conv2d_forward(a, kernels, bias) * up)),
            x.copy(), eps), floor=1e-6),
        max_relative_error(kg, central_difference(
            lambda a: float(np.sum(conv2d_forward(x, a, bias) * up)),
            kernels.copy(), eps), floor=1e-6),
        max_relative_error(bg, central_difference(
            lambda a: float(np.sum(conv2d_forward(x, kernels, a) * up)),
            bias.copy(), eps), floor=1e-6),
    )

    # dense
    dx = rng.standard_normal(5)
    dw = rng.standard_normal((4, 5))
    db = rng.standard_normal(4)
    dup = rng.standard_normal(4)
    dig, dwg, dbg = dense_backward(dx, dw, dup)
    worst_layer = max(
        worst_layer,
        max_relative_error(dig, central_difference(
            lambda a: float(np.sum(dense_forward(a, dw, db) * dup)),
            dx.copy(), eps), floor=1e-6),
        max_relative_error(dwg, central_difference(
            lambda a: float(np.sum(dense_forward(dx, a, db) * dup)),
            dw.copy(), eps), floor=1e-6),
        max_relative_error(dbg, central_difference(
            lambda a: float(np.sum(dense_forward(dx, dw, a) * dup)),
            db.copy(), eps), floor=1e-6),
    )

    # relu (away from the kink)
    rx = rng.standard_normal(40)
    rx = rx[np.abs(rx) > 1e-2]
    rup = rng.standard_normal(rx.size)
    worst_layer = max(worst_layer, max_relative_error(
        relu_backward(rx, rup),
        central_difference(lambda a: float(np.sum(relu(a) * rup)),
                           rx.copy(), eps), floor=1e-6))

    # maxpool (distinct values: no ties)
    mx = rng.permutation(36).astype(np.float64).reshape(1, 6, 6)
    mup = rng.standard_normal((1, 3, 3))
    _, argmax = maxpool2d_forward(mx)
    worst_layer = max(worst_layer, max_relative_error(
        maxpool2d_backward(argmax, mup, (6, 6)),
        central_difference(
            lambda a: float(np.sum(maxpool2d_forward(a)[0] * mup)),
            mx.copy(), eps), floor=1e-6))

    # sigmoid
    sx = rng.standard_normal(20)
    sup = rng.standard_normal(20)
    sig_grad = sup * sigmoid(sx) * (1 - sigmoid(sx))
    worst_layer = max(worst_layer, max_relative_error(
        sig_grad,
        central_difference(lambda a: float(np.sum(sigmoid(a) * sup)),
                           sx.copy(), eps), floor=1e-6))

    # both losses
    preds = rng.uniform(0.1, 0.9, (3, 2))
    targets = one_hot(rng.integers(0, 2, 3))
    _, bgrad = bce_loss(preds, targets)
    worst_layer = max(worst_layer, max_relative_error(
        bgrad, central_difference(lambda p: bce_loss(p, targets)[0],
                                  preds.copy(), eps), floor=1e-6))
    scores = rng.standard_normal((3, 2)) * 2
    pm1 = 2.0 * targets - 1.0
    scores = np.where(np.abs(1.0 - pm1 * scores) < 0.05, scores + 0.2, scores)
    _, hgrad = hinge_loss(scores, pm1)
    worst_layer = max(worst_layer, max_relative_error(
        hgrad, central_difference(lambda s: hinge_loss(s, pm1)[0],
                                  scores.copy(), eps), floor=1e-6))

    # end-to-end: all parameters of a tiny network at input_side 12, batch 1
    spec = tiny_spec(input_side=12)
    params = init_params(spec, 3, dtype=np.float64)
    xb = rng.random((1, 1, 12, 12))
    tb = one_hot(np.array([1]))

    def loss_of(p):
        out, _ = forward(spec, p, xb)
        return bce_loss(out, tb)[0]

    out, trace = forward(spec, params, xb)
    _, ograd = bce_loss(out, tb)
    grads = backward(spec, params, trace, ograd)
    worst_e2e = 0.0
    for (_, pt), (_, gt) in zip(params.named_tensors(), grads.named_tensors()):
        flat, gflat = pt.ravel(), gt.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_of(params)
            flat[i] = orig - eps
            lm = loss_of(params)
            flat[i] = orig
            fd = (lp - lm) / (2 * eps)
            worst_e2e = max(worst_e2e,
                            abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6))

    elapsed = time.time() - t0
    _report("gradient-suite",
            worst_layer < 1e-4 and worst_e2e < 1e-3 and elapsed < 120,
            f"layer {worst_layer:.2e}, end-to-end {worst_e2e:.2e}, {elapsed:.0f}s")


# ------------------------------------------------------------------ 2

def test_acceptance_convolution_oracle():
    """conv2d_forward vs quadruple-loop brute force, 50 instances, 1e-5."""
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(50):
        c = int(rng.integers(1, 4))
        k = int(rng.integers(1, 5))
        h = int(rng.integers(3, 9))
        w = int(rng.integers(3, 9))
        x = rng.standard_normal((c, h, w))
        kernels = rng.standard_normal((k, c, 3, 3))
        bias = rng.standard_normal(k)
        worst = max(worst, max_relative_error(
            conv2d_forward(x, kernels, bias),
            conv_brute_force(x, kernels, bias)))
    _report("convolution-oracle", worst < 1e-5, f"max rel err {worst:.2e}")


# ------------------------------------------------------------------ 3

def test_acceptance_metric_oracle():
    """Five metrics vs brute-force recounts, 1000 random configurations, 1e-12."""
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        pred = rng.integers(0, 2, n)
        act = rng.integers(0, 2, n)
        report = metrics(confusion(pred, act))
        expected = metrics_recount(list(zip(pred.tolist(), act.tolist())))
        for name, want in expected.items():
            worst = max(worst, abs(getattr(report, name) - want))
    _report("metric-oracle", worst < 1e-12, f"max abs err {worst:.2e}")


# ------------------------------------------------------------------ 4

def test_acceptance_auc_oracle():
    """Trapezoidal AUC vs pairwise Mann-Whitney, 200 score sets with ties."""
    rng = np.random.default_rng(404)
    worst = 0.0
    checked = 0
    while checked < 200:
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, n)
        if len(np.unique(labels)) < 2:
            continue
        scores = np.round(rng.random(n) * 5) / 5  # heavy ties
        worst = max(worst, abs(roc_auc(scores, labels)
                               - auc_pairwise(scores, labels)))
        checked += 1
    perfect = roc_auc(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0]))
    ties = roc_auc(np.full(8, 0.3), np.array([1, 1, 1, 0, 0, 0, 0, 0]))
    _report("auc-oracle", worst < 1e-12 and perfect == 1.0 and ties == 0.5,
            f"max abs err {worst:.2e}, perfect {perfect}, all-ties {ties}")


# ------------------------------------------------------------------ 5

def test_acceptance_augmentation_count(tmp_path):
    """333 dummy originals expand to exactly 1332 prepared samples."""
    rng = np.random.default_rng(505)
    for name, count in (("covid", 77), ("normal", 256)):
        d = tmp_path / name
        d.mkdir()
        for i in range(count):
            arr = rng.integers(0, 256, (8, 8), dtype=np.uint8)
            Image.fromarray(arr, mode="L").save(d / f"{name}_{i:03d}.png")
    ds = prepare_dataset(tmp_path, seed=1, augment_data=True, target_side=8)
    ok = len(ds.samples) == 1332 and ds.class_counts == {"covid": 308,
                                                         "normal": 1024}
    _report("augmentation-count", ok, f"{len(ds.samples)} samples")


# ------------------------------------------------------------------ 6

def test_acceptance_sobel_properties():
    """Constant image -> zero; exact DC invariance; step-edge value 1020."""
    constant_zero = not sobel(np.full((9, 9), 77.0)).any()

    rng = np.random.default_rng(606)
    img = rng.integers(0, 200, (11, 11)).astype(np.float64)
    dc_exact = np.array_equal(sobel_magnitude(img), sobel_magnitude(img + 40.0))

    step = np.zeros((8, 8))
    step[:, 2:] = 255.0
    edge_value = sobel_magnitude(step)[4, 1]

    _report("sobel-properties",
            constant_zero and dc_exact and edge_value == 1020.0,
            f"step edge {edge_value}")


# ------------------------------------------------------------------ 7

def test_acceptance_overfit_sanity():
    """20-image synthetic set, small no-dropout net, 200 epochs -> 100%
    training accuracy in under 5 minutes."""
    t0 = time.time()
    spec = NetworkSpec(input_side=32, conv_blocks=((4, 3, 2), (8, 3, 2)),
                       dense_widths=(16, 8), dropout_rate=0.0, head="sigmoid")
    ds = make_dataset(10, 10, side=32, seed=5)
    config = TrainConfig(epochs=200, batch_size=32, head="sigmoid", seed=1)
    from sobelcnn.training import train_fold
    res = train_fold(spec, config, ds.samples, ds.samples, seed=1)
    acc = metrics(confusion(res.predictions, res.test_labels)).accuracy
    elapsed = time.time() - t0
    _report("overfit-sanity", acc == 1.0 and elapsed < 300,
            f"accuracy {acc}, {elapsed:.0f}s")


# ------------------------------------------------------------------ 8

def test_acceptance_direction_of_effect():
    """On a 200-image synthetic set whose signal lives in edge structure under
    low-frequency/contrast nuisance, the +Sobel arms meet or beat the
    no-Sobel arms at identical seeds (3-fold, 20 epochs)."""
    ds = make_dataset(100, 100, side=24, seed=11)
    accuracy = {}
    for head in ("sigmoid", "svm"):
        for use_sobel in (False, True):
            spec = NetworkSpec(input_side=24, conv_blocks=((4, 3, 2), (8, 3, 2)),
                               dense_widths=(16, 8), dropout_rate=0.2, head=head)
            config = TrainConfig(epochs=20, batch_size=32, head=head,
                                 sobel=use_sobel, seed=7, folds=3)
            result = cross_validate(spec, config, ds)
            accuracy[(head, use_sobel)] = result.pooled_metrics.accuracy
    ok = all(accuracy[(head, True)] >= accuracy[(head, False)]
             for head in ("sigmoid", "svm"))
    detail = ", ".join(
        f"{head}: {accuracy[(head, False)]:.3f}->{accuracy[(head, True)]:.3f}"
        for head in ("sigmoid", "svm"))
    _report("direction-of-effect", ok, detail)


# ------------------------------------------------------------------ 9

def test_acceptance_determinism(tmp_path):
    """Two identical --threads 1 runs produce byte-identical report.json and
    checkpoints."""
    raw = tmp_path / "raw"
    write_image_dir(raw, n_covid=5, n_normal=6, side=32, seed=3)
    prep = tmp_path / "prep"
    assert main(["prepare", "--input", str(raw), "--output", str(prep),
                 "--seed", "2", "--input-size", "16"]) == 0
    runs = []
    for name in ("runA", "runB"):
        out = tmp_path / name
        assert main(["train", "--data", str(prep), "--out", str(out),
                     "--folds", "2", "--epochs", "2", "--batch", "8",
                     "--seed", "4", "--threads", "1"]) == 0
        runs.append(out)
    same = all(
        (runs[0] / n).read_bytes() == (runs[1] / n).read_bytes()
        for n in ("report.json", "fold_00.ckpt", "fold_01.ckpt"))
    _report("determinism", same)


# ------------------------------------------------------------------ 10

def test_acceptance_checkpoint_integrity(tmp_path):
    """Checkpoint round-trip is bit-exact; a flipped blob byte exits 5."""
    raw = tmp_path / "raw"
    write_image_dir(raw, n_covid=5, n_normal=6, side=32, seed=8)
    prep = tmp_path / "prep"
    assert main(["prepare", "--input", str(raw), "--output", str(prep),
                 "--seed", "2", "--input-size", "16"]) == 0
    run = tmp_path / "run"
    assert main(["train", "--data", str(prep), "--out", str(run),
                 "--folds", "2", "--epochs", "1", "--batch", "8",
                 "--seed", "4"]) == 0

    from sobelcnn.runio import load_checkpoint, save_checkpoint
    src = run / "fold_00.ckpt"
    meta, params = load_checkpoint(src)
    copy = tmp_path / "copy.ckpt"
    save_checkpoint(copy, meta, params)
    round_trip = src.read_bytes() == copy.read_bytes()

    blob = bytearray(src.read_bytes())
    blob[-50] ^= 0x01
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(blob))
    code = main(["evaluate", "--model", str(bad), "--data", str(prep)])
    _report("checkpoint-integrity", round_trip and code == 5,
            f"round-trip {round_trip}, corrupt exit {code}")


# ------------------------------------------------------------------ 11

def test_acceptance_real_data_smoke(tmp_path):
    """Optional: point SOBELCNN_REALDATA_DIR at any covid/ + normal/ X-ray
    directory (>= 100 images) for a 2-fold, 10-epoch smoke run that must beat
    the majority-class baseline."""
    data_dir = os.environ.get("SOBELCNN_REALDATA_DIR")
    if not data_dir:
        pytest.skip("SOBELCNN_REALDATA_DIR not set; real-data smoke skipped")
    t0 = time.time()
    ds = prepare_dataset(data_dir, seed=1, augment_data=False, target_side=64)
    assert len(ds.samples) >= 100, "real-data smoke expects >= 100 images"
    counts = ds.class_counts
    baseline = max(counts.values()) / len(ds.samples)
    spec = NetworkSpec(input_side=64, head="sigmoid")
    config = TrainConfig(epochs=10, batch_size=32, head="sigmoid",
                         sobel=True, seed=0, folds=2)
    result = cross_validate(spec, config, ds)
    elapsed = time.time() - t0
    _report("real-data-smoke",
            result.pooled_metrics.accuracy > baseline and elapsed < 1800,
            f"accuracy {result.pooled_metrics.accuracy:.4f} vs baseline "
            f"{baseline:.4f}, {elapsed:.0f}s")
