"""Shared test helpers: independent oracles and finite-difference utilities.

Everything here is deliberately written the slow, obvious way so the fast
implementations under test are checked against code with no shared logic.
"""
import numpy as np
import pytest

from sobelcnn.network import NetworkSpec


def tiny_spec(input_side=12, head="sigmoid", dropout_rate=0.0):
    """A network small enough for exhaustive finite-difference checks."""
    return NetworkSpec(
        input_side=input_side,
        conv_blocks=((3, 3, 2), (4, 3, 2)),
        dense_widths=(6, 5, 4),
        output_units=2,
        dropout_rate=dropout_rate,
        head=head,
    )


def conv_brute_force(x, kernels, bias):
    """Direct-loop valid convolution oracle for (C, H, W) inputs."""
    C, H, W = x.shape
    K, KC, kh, kw = kernels.shape
    assert C == KC
    oh, ow = H - kh + 1, W - kw + 1
    out = np.zeros((K, oh, ow), dtype=np.float64)
    for k in range(K):
        for i in range(oh):
            for j in range(ow):
                acc = float(bias[k])
                for c in range(C):
                    for u in range(kh):
                        for v in range(kw):
                            acc += x[c, i + u, j + v] * kernels[k, c, u, v]
                out[k, i, j] = acc
    return out


def central_difference(f, x, eps=1e-4):
    """Gradient of scalar f at x (any-shaped array), one component at a time."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def max_relative_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def auc_pairwise(scores, labels):
    """O(n^2) Mann-Whitney oracle with ties counted as 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def metrics_recount(pairs):
    """Recompute the five metrics straight from (predicted, actual) pairs."""
    tp = sum(1 for p, a in pairs if p == 1 and a == 1)
    tn = sum(1 for p, a in pairs if p == 0 and a == 0)
    fp = sum(1 for p, a in pairs if p == 1 and a == 0)
    fn = sum(1 for p, a in pairs if p == 0 and a == 1)

    def safe(num, den):
        return num / den if den else 0.0

    return {
        "accuracy": safe(tp + tn, tp + tn + fp + fn),
        "sensitivity": safe(tp, tp + fn),
        "precision": safe(tp, tp + fp),
        "f1": safe(2 * tp, 2 * tp + fp + fn),
        "specificity": safe(tn, tn + fp),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
