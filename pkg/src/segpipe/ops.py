"""Dense NCHW tensor primitives with hand-derived backward passes.

Everything here is a pure function over plain numpy arrays: no caches, no
global state, safe to call concurrently on shared read-only inputs.
float32 is the production dtype, but each function keeps the float dtype
it is given so numerical checks can run the exact same code in float64.

Convolution uses cross-correlation semantics (no kernel flip), the usual
deep-learning convention.
"""

import numpy as np

from .errors import (
    DimensionError,
    GeometryError,
    LabelError,
    NumericError,
    ParameterError,
)


def _require_4d(name: str, a: np.ndarray) -> None:
    if a.ndim != 4:
        raise DimensionError(f"{name} must be 4-d (N, C, H, W), got shape {a.shape}")


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Output length along one spatial axis: (size + 2*padding - kernel)//stride + 1.

    Floor division is the usual convention for strided windows (a trailing
    partial window is dropped); a kernel that does not fit at all is a
    geometry error.
    """
    span = size + 2 * padding - kernel
    if span < 0:
        raise GeometryError(
            f"kernel {kernel} does not fit size {size} with padding {padding}"
        )
    return span // stride + 1


def _check_conv_args(x, weights, bias, stride, padding):
    _require_4d("input", x)
    _require_4d("weights", weights)
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weights.shape
    if cin_w != cin:
        raise DimensionError(
            f"weights expect {cin_w} input channels, input has {cin}"
        )
    if bias.shape != (cout,):
        raise DimensionError(f"bias must have shape ({cout},), got {bias.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"kernel dims must be odd, got {kh}x{kw}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ParameterError(f"padding must be >= 0, got {padding}")
    hout = conv_output_size(h, kh, stride, padding)
    wout = conv_output_size(w, kw, stride, padding)
    return hout, wout


def _im2col(x, kh, kw, stride, padding, hout, wout):
    """Gather sliding windows into rows: (N*hout*wout, Cin*kh*kw)."""
    n, c, _, _ = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    iy = stride * np.arange(hout)[:, None] + np.arange(kh)[None, :]
    ix = stride * np.arange(wout)[:, None] + np.arange(kw)[None, :]
    patches = x[:, :, iy, :][:, :, :, :, ix]  # (n, c, hout, kh, wout, kw)
    return patches.transpose(0, 2, 4, 1, 3, 5).reshape(n * hout * wout, c * kh * kw)


def conv2d_forward(x, weights, bias, stride: int = 1, padding: int = 0):
    """2-d cross-correlation of an NCHW batch with OIHW weights.

    out[n, co, y, x] = bias[co]
                     + sum_{ci,dy,dx} in[n, ci, y*s - p + dy, x*s - p + dx]
                                      * weights[co, ci, dy, dx]
    with zero padding outside the input.
    """
    x = np.asarray(x)
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    hout, wout = _check_conv_args(x, weights, bias, stride, padding)
    n = x.shape[0]
    cout, _, kh, kw = weights.shape
    cols = _im2col(x, kh, kw, stride, padding, hout, wout)
    out = cols @ weights.reshape(cout, -1).T
    out += bias
    return np.ascontiguousarray(
        out.reshape(n, hout, wout, cout).transpose(0, 3, 1, 2)
    )


def conv2d_backward(x, weights, grad_output, stride: int = 1, padding: int = 0):
    """Exact analytic gradients of conv2d_forward.

    Returns (grad_input, grad_weights, grad_bias) for the given upstream
    grad_output of shape (N, Cout, H', W').
    """
    x = np.asarray(x)
    weights = np.asarray(weights)
    grad_output = np.asarray(grad_output)
    cout, cin, kh, kw = weights.shape
    hout, wout = _check_conv_args(x, weights, np.zeros(cout, weights.dtype), stride, padding)
    n, _, h, w = x.shape
    if grad_output.shape != (n, cout, hout, wout):
        raise DimensionError(
            f"grad_output must have shape {(n, cout, hout, wout)}, "
            f"got {grad_output.shape}"
        )

    cols = _im2col(x, kh, kw, stride, padding, hout, wout)
    g = grad_output.transpose(0, 2, 3, 1).reshape(n * hout * wout, cout)

    grad_bias = g.sum(axis=0)
    grad_weights = (g.T @ cols).reshape(weights.shape)

    # scatter column gradients back onto the padded input plane
    dcols = g @ weights.reshape(cout, -1)
    dpatch = dcols.reshape(n, hout, wout, cin, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    hp, wp = h + 2 * padding, w + 2 * padding
    gxp = np.zeros((n, cin, hp, wp), dtype=dcols.dtype)
    for dy in range(kh):
        for dx in range(kw):
            gxp[:, :, dy : dy + stride * hout : stride,
                dx : dx + stride * wout : stride] += dpatch[:, :, dy, dx]
    grad_input = np.ascontiguousarray(gxp[:, :, padding : padding + h, padding : padding + w])
    return grad_input, grad_weights, grad_bias


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")


def leaky_relu(x, alpha: float = 0.01):
    """x if x >= 0 else alpha * x, elementwise."""
    _check_alpha(alpha)
    x = np.asarray(x)
    a = x.dtype.type(alpha)
    return np.where(x >= 0, x, a * x)


def leaky_relu_backward(x, grad_output, alpha: float = 0.01):
    """Multiply upstream gradient by 1 (x >= 0) or alpha (x < 0).

    The subgradient at exactly 0 is taken as 1.
    """
    _check_alpha(alpha)
    x = np.asarray(x)
    grad_output = np.asarray(grad_output)
    if grad_output.shape != x.shape:
        raise DimensionError(
            f"grad_output shape {grad_output.shape} must match input {x.shape}"
        )
    a = grad_output.dtype.type(alpha)
    return np.where(x >= 0, grad_output, a * grad_output)


def upsample_nearest(x, factor: int):
    """Nearest-neighbor upsampling: out[n,c,y,x] = in[n,c,y//f,x//f]."""
    if factor < 1:
        raise ParameterError(f"upsample factor must be >= 1, got {factor}")
    x = np.asarray(x)
    _require_4d("input", x)
    if factor == 1:
        return x.copy()
    return np.repeat(np.repeat(x, factor, axis=2), factor, axis=3)


def upsample_nearest_backward(grad_output, factor: int):
    """Sum-pool the gradients of the factor**2 replicas of each source pixel."""
    if factor < 1:
        raise ParameterError(f"upsample factor must be >= 1, got {factor}")
    grad_output = np.asarray(grad_output)
    _require_4d("grad_output", grad_output)
    n, c, fh, fw = grad_output.shape
    if fh % factor or fw % factor:
        raise DimensionError(
            f"grad_output spatial dims {fh}x{fw} are not multiples of {factor}"
        )
    if factor == 1:
        return grad_output.copy()
    h, w = fh // factor, fw // factor
    return grad_output.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))


def softmax(logits, axis: int = -1):
    """Numerically stable softmax along one axis."""
    logits = np.asarray(logits)
    if logits.shape[axis] < 2:
        raise DimensionError(
            f"softmax needs at least 2 classes along axis {axis}, "
            f"got {logits.shape[axis]}"
        )
    if not np.isfinite(logits).all():
        raise NumericError("softmax input contains non-finite values")
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def one_hot(labels, num_classes: int, dtype=np.float32, class_axis: int = -1):
    """Expand integer class indices to indicator vectors.

    The result has one extra axis of length num_classes, placed at
    class_axis; exactly one entry per position is 1.
    """
    labels = np.asarray(labels)
    _check_labels(labels, num_classes)
    expanded = np.eye(num_classes, dtype=dtype)[labels]
    return np.moveaxis(expanded, -1, class_axis)


def _check_labels(labels, num_classes):
    if labels.size == 0:
        raise DimensionError("labels must be non-empty")
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelError(f"labels must be integers, got dtype {labels.dtype}")
    lo, hi = int(labels.min()), int(labels.max())
    if lo < 0 or hi >= num_classes:
        raise LabelError(
            f"label values must lie in [0, {num_classes}), found range [{lo}, {hi}]"
        )


def cross_entropy(probs, labels, class_axis: int = 1) -> float:
    """Mean negative log probability of the true class.

    probs carries a probability distribution along class_axis; labels holds
    the integer class index for every remaining position. Probabilities are
    clamped at 1e-12 before the log; the mean is accumulated in float64.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    _check_labels(labels, probs.shape[class_axis])
    idx = np.expand_dims(labels, class_axis)
    p_true = np.take_along_axis(probs, idx, axis=class_axis)
    p_true = np.maximum(p_true.astype(np.float64), 1e-12)
    return float(-np.log(p_true).mean())


def softmax_cross_entropy(logits, labels, class_axis: int = 1):
    """Fused softmax + cross-entropy; returns (loss, grad_logits).

    grad_logits = (softmax(logits) - one_hot(labels)) / M where M is the
    number of labeled positions, so the loss is the mean over batch and
    pixels and gradients are resolution independent.
    """
    logits = np.asarray(logits)
    probs = softmax(logits, axis=class_axis)
    loss = cross_entropy(probs, labels, class_axis=class_axis)
    targets = one_hot(np.asarray(labels), logits.shape[class_axis],
                      dtype=probs.dtype, class_axis=class_axis)
    grad = (probs - targets) / np.asarray(labels).size
    return loss, grad.astype(logits.dtype, copy=False)
