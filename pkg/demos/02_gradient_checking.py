#!/usr/bin/env python3
"""Check every hand-derived backward pass against finite differences.

For each primitive, a random scalar loss is built from the forward pass
and the analytic gradient is compared entry by entry with a central
difference. Errors should sit many orders of magnitude under 1e-3.
"""

import numpy as np

from segpipe import ops


def finite_difference(f, x, eps=1e-5):
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        hi = f()
        x[idx] = orig - eps
        lo = f()
        x[idx] = orig
        grad[idx] = (hi - lo) / (2 * eps)
        it.iternext()
    return grad


def scale_rel(a, b):
    return float(np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-12))


rng = np.random.default_rng(0)

# convolution
x = rng.normal(size=(1, 2, 6, 6))
w = rng.normal(size=(3, 2, 3, 3))
b = rng.normal(size=3)
proj = rng.normal(size=(1, 3, 6, 6))
loss = lambda: float((ops.conv2d_forward(x, w, b, 1, 1) * proj).sum())
gx, gw, gb = ops.conv2d_backward(x, w, proj, 1, 1)
print(f"conv2d      grad_input  rel err {scale_rel(gx, finite_difference(loss, x)):.2e}")
print(f"conv2d      grad_weight rel err {scale_rel(gw, finite_difference(loss, w)):.2e}")
print(f"conv2d      grad_bias   rel err {scale_rel(gb, finite_difference(loss, b)):.2e}")

# leaky ReLU (entries nudged off the kink at zero)
xr = rng.normal(size=(2, 3, 5, 5))
xr[np.abs(xr) < 0.01] = 0.1
projr = rng.normal(size=xr.shape)
loss = lambda: float((ops.leaky_relu(xr, 0.01) * projr).sum())
gr = ops.leaky_relu_backward(xr, projr, 0.01)
print(f"leaky_relu  grad        rel err {scale_rel(gr, finite_difference(loss, xr)):.2e}")

# nearest upsampling
xu = rng.normal(size=(1, 2, 4, 4))
proju = rng.normal(size=(1, 2, 8, 8))
loss = lambda: float((ops.upsample_nearest(xu, 2) * proju).sum())
gu = ops.upsample_nearest_backward(proju, 2)
print(f"upsample    grad        rel err {scale_rel(gu, finite_difference(loss, xu)):.2e}")

# fused softmax + cross-entropy
logits = rng.normal(size=(1, 12, 4, 4))
labels = rng.integers(0, 12, size=(1, 4, 4))
loss = lambda: ops.softmax_cross_entropy(logits, labels)[0]
_, gl = ops.softmax_cross_entropy(logits, labels)
print(f"softmax+ce  grad        rel err {scale_rel(gl, finite_difference(loss, logits)):.2e}")
