# 03_gradient_checking.py
# ---------------------------------------------------------------------------
# Why you can trust the hand-written backward pass.
#
# Every layer's backward pass is an explicit formula, not autodiff, so the
# project leans heavily on gradient checking: run the whole network in
# float64, perturb one parameter at a time by +-1e-4, and compare the
# central-difference slope of the loss against the analytic gradient.
#
# This script does that for every single parameter of a small network and
# reports the worst relative disagreement (typically below 1e-7; anything
# under 1e-3 would still be a pass for the composed network).
# ---------------------------------------------------------------------------
import numpy as np

from sobelcnn.network import NetworkSpec, backward, forward, init_params
from sobelcnn.training import bce_loss, one_hot

spec = NetworkSpec(
    input_side=12,
    conv_blocks=((3, 3, 2), (4, 3, 2)),
    dense_widths=(6, 5, 4),
    dropout_rate=0.0,     # dropout off: we want a deterministic loss surface
    head="sigmoid",
)
params = init_params(spec, seed=3, dtype=np.float64)

rng = np.random.default_rng(1)
batch = rng.random((1, 1, 12, 12))
targets = one_hot(np.array([1]))


def loss_value(p):
    outputs, _ = forward(spec, p, batch)
    return bce_loss(outputs, targets)[0]


outputs, trace = forward(spec, params, batch)
loss, out_grad = bce_loss(outputs, targets)
analytic = backward(spec, params, trace, out_grad)
print(f"loss at the starting point: {loss:.6f}")

eps = 1e-4
worst = 0.0
worst_name = ""
total = 0
for (name, tensor), (_, grad) in zip(params.named_tensors(),
                                     analytic.named_tensors()):
    flat, gflat = tensor.ravel(), grad.ravel()
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        up = loss_value(params)
        flat[i] = original - eps
        down = loss_value(params)
        flat[i] = original
        slope = (up - down) / (2 * eps)
        rel = abs(slope - gflat[i]) / max(abs(slope), abs(gflat[i]), 1e-8)
        if rel > worst:
            worst, worst_name = rel, f"{name}[{i}]"
        total += 1

print(f"checked {total} parameters")
print(f"worst relative disagreement: {worst:.3e} at {worst_name}")
print("verdict:", "gradients are exact" if worst < 1e-3 else "INVESTIGATE")
