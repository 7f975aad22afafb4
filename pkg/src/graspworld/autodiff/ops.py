"""Differentiable operations.

Every public function takes and returns :class:`Tensor` values, computes
eagerly in float64, and registers a backward rule on the active tape when
any input requires gradients.  Convolutions go through im2col so the heavy
lifting is a single matmul per layer; their adjoints reuse the same
column<->image helpers, which is what makes the conv/deconv adjoint
identity hold to machine precision.

Conventions:
  - images are B x C x H x W
  - conv kernels are F x C x K x K (square kernels only)
  - deconv consumes B x F x h x w and produces B x C x (s*h) x (s*w); this
    size convention requires 1 <= K - 2*padding <= stride
  - spatial softmax coordinates are pixel centers mapped into [-1, 1], x
    along the W axis, y along the H axis (increasing downward)
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import DTYPE, ShapeError, Tape, Tensor, accumulate_grad

LOG_SIGMA_MIN = -6.0
LOG_SIGMA_MAX = 4.0


def _maybe_record(out: Tensor, inputs: Sequence[Tensor], backward) -> Tensor:
    tape = Tape.active()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(g, b.shape))

    return _maybe_record(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(-g, b.shape))

    return _maybe_record(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(g * a.data, b.shape))

    return _maybe_record(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g * c)

    return _maybe_record(out, (a,), backward)


def square(a: Tensor) -> Tensor:
    return mul(a, a)


# ---------------------------------------------------------------------------
# reductions and structure


def sum_(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if not a.requires_grad:
            return
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        accumulate_grad(a, np.broadcast_to(g, a.shape))

    return _maybe_record(out, (a,), backward)


def mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g.reshape(a.shape))

    return _maybe_record(out, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                accumulate_grad(t, g[tuple(idx)])

    return _maybe_record(out, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# activations


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g * (a.data > 0.0))

    return _maybe_record(out, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    out = Tensor(np.where(a.data > 0.0, a.data, slope * a.data))

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g * np.where(a.data > 0.0, 1.0, slope))

    return _maybe_record(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g * (1.0 - y * y))

    return _maybe_record(out, (a,), backward)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g * y)

    return _maybe_record(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g / a.data)

    return _maybe_record(out, (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(a.data, lo, hi))

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g * ((a.data >= lo) & (a.data <= hi)))

    return _maybe_record(out, (a,), backward)


def softmax(a: Tensor, axis: int) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p)

    def backward(g):
        if a.requires_grad:
            inner = (g * p).sum(axis=axis, keepdims=True)
            accumulate_grad(a, p * (g - inner))

    return _maybe_record(out, (a,), backward)


def log_softmax(a: Tensor, axis: int) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    ls = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = Tensor(ls)

    def backward(g):
        if a.requires_grad:
            accumulate_grad(a, g - np.exp(ls) * g.sum(axis=axis, keepdims=True))

    return _maybe_record(out, (a,), backward)


# ---------------------------------------------------------------------------
# dense and convolutional layers


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias for x: B x I, weight: I x O, bias: O."""
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise ShapeError(
            f"dense expects x(B,I), weight(I,O), bias(O); got {x.shape}, {weight.shape}, {bias.shape}"
        )
    if x.shape[1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise ShapeError(
            f"dense shapes do not conform: x{x.shape} @ w{weight.shape} + b{bias.shape}"
        )
    out = Tensor(x.data @ weight.data + bias.data)

    def backward(g):
        if x.requires_grad:
            accumulate_grad(x, g @ weight.data.T)
        if weight.requires_grad:
            accumulate_grad(weight, x.data.T @ g)
        if bias.requires_grad:
            accumulate_grad(bias, g.sum(axis=0))

    return _maybe_record(out, (x, weight, bias), backward)


def _conv_geometry(h: int, w: int, k: int, stride: int, padding: int) -> tuple[int, int]:
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if k > h + 2 * padding or k > w + 2 * padding:
        raise ShapeError(
            f"kernel {k} exceeds padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv output would be empty: {ho}x{wo}")
    return ho, wo


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """xp: B x C x Hp x Wp (already padded) -> B x (C*k*k) x (ho*wo)."""
    b, c = xp.shape[:2]
    cols = np.empty((b, c, k, k, ho, wo), dtype=DTYPE)
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = xp[
                :, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride
            ]
    return cols.reshape(b, c * k * k, ho * wo)


def _col2im(
    dcols: np.ndarray, b: int, c: int, hp: int, wp: int, k: int, stride: int, ho: int, wo: int
) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add columns back into an image."""
    dxp = np.zeros((b, c, hp, wp), dtype=DTYPE)
    dview = dcols.reshape(b, c, k, k, ho, wo)
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += dview[
                :, :, ki, kj
            ]
    return dxp


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _conv_forward(x: np.ndarray, k: np.ndarray, stride: int, padding: int):
    b, c, h, w = x.shape
    f, ck, kk, _ = k.shape
    ho, wo = _conv_geometry(h, w, kk, stride, padding)
    cols = _im2col(_pad(x, padding), kk, stride, ho, wo)
    y = np.matmul(k.reshape(f, ck * kk * kk), cols)
    return y.reshape(b, f, ho, wo), cols


def _conv_dx(gy: np.ndarray, k: np.ndarray, stride: int, padding: int, hw: tuple[int, int]):
    b, f, ho, wo = gy.shape
    _, c, kk, _ = k.shape
    h, w = hw
    dcols = np.matmul(k.reshape(f, c * kk * kk).T, gy.reshape(b, f, ho * wo))
    dxp = _col2im(dcols, b, c, h + 2 * padding, w + 2 * padding, kk, stride, ho, wo)
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return dxp


def _conv_dk(cols: np.ndarray, gy: np.ndarray, kshape: tuple):
    b, f, ho, wo = gy.shape
    g2 = gy.reshape(b, f, ho * wo)
    dk = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0)
    return dk.reshape(kshape)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x: B x C x H x W with kernel: F x C x K x K."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel; got {x.shape}, {kernel.shape}")
    if kernel.shape[2] != kernel.shape[3]:
        raise ShapeError(f"conv2d kernels must be square; got {kernel.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.shape[1]}, kernel expects {kernel.shape[1]}"
        )
    y, cols = _conv_forward(x.data, kernel.data, stride, padding)
    out = Tensor(y)
    hw = x.shape[2:]

    def backward(g):
        if x.requires_grad:
            accumulate_grad(x, _conv_dx(g, kernel.data, stride, padding, hw))
        if kernel.requires_grad:
            accumulate_grad(kernel, _conv_dk(cols, g, kernel.shape))

    return _maybe_record(out, (x, kernel), backward)


def deconv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution: the exact adjoint of :func:`conv2d`.

    Consumes B x F x h x w, produces B x C x (stride*h) x (stride*w), where
    the kernel is the F x C x K x K kernel of the matching forward conv.
    The fixed output-size convention requires 1 <= K - 2*padding <= stride.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"deconv2d expects 4-d input and kernel; got {x.shape}, {kernel.shape}")
    if x.shape[1] != kernel.shape[0]:
        raise ShapeError(
            f"deconv2d channel mismatch: input has {x.shape[1]}, kernel maps from {kernel.shape[0]}"
        )
    kk = kernel.shape[2]
    if kernel.shape[2] != kernel.shape[3]:
        raise ShapeError(f"deconv2d kernels must be square; got {kernel.shape}")
    if not (1 <= kk - 2 * padding <= stride):
        raise ShapeError(
            f"deconv2d size convention needs 1 <= K - 2*padding <= stride; "
            f"got K={kk}, padding={padding}, stride={stride}"
        )
    b, f, hi, wi = x.shape
    hw = (stride * hi, stride * wi)
    y = _conv_dx(x.data, kernel.data, stride, padding, hw)
    out = Tensor(y)

    def backward(g):
        if x.requires_grad:
            gy, _ = _conv_forward(g, kernel.data, stride, padding)
            accumulate_grad(x, gy)
        if kernel.requires_grad:
            _, gcols = _conv_forward(g, kernel.data, stride, padding)
            accumulate_grad(kernel, _conv_dk(gcols, x.data, kernel.shape))

    return _maybe_record(out, (x, kernel), backward)


# ---------------------------------------------------------------------------
# feature points and losses


def spatial_softmax_expectation(responses: Tensor) -> Tensor:
    """Per-channel softmax over locations, then expected (x, y) in [-1, 1]^2.

    Input B x C x H x W, output B x C x 2 with x from the W axis and y from
    the H axis; coordinates are pixel centers, so a single dominant location
    maps to (2j+1)/W - 1, (2i+1)/H - 1.
    """
    if responses.ndim != 4:
        raise ShapeError(f"spatial softmax expects B x C x H x W, got {responses.shape}")
    b, c, h, w = responses.shape
    flat = reshape(responses, (b, c, h * w))
    p = softmax(flat, axis=2)
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    xs = Tensor(((2.0 * jj.ravel() + 1.0) / w) - 1.0)
    ys = Tensor(((2.0 * ii.ravel() + 1.0) / h) - 1.0)
    ex = sum_(mul(p, xs), axis=2, keepdims=True)
    ey = sum_(mul(p, ys), axis=2, keepdims=True)
    return concat([ex, ey], axis=2)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all elements of the squared difference."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    return mean(square(sub(pred, target)))


def gaussian_kl(mean_t: Tensor, log_sigma: Tensor) -> Tensor:
    """KL(N(mean, diag sigma^2) || N(0, I)), summed over dims, batch-averaged.

    log_sigma is clamped to [LOG_SIGMA_MIN, LOG_SIGMA_MAX] before
    exponentiation, mirroring the clamp in :func:`reparameterize`.
    """
    if mean_t.ndim != 2 or mean_t.shape != log_sigma.shape:
        raise ShapeError(
            f"gaussian_kl expects matching B x L inputs, got {mean_t.shape}, {log_sigma.shape}"
        )
    ls = clip(log_sigma, LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    var = exp(scale(ls, 2.0))
    per_dim = sub(sub(add(square(mean_t), var), scale(ls, 2.0)), Tensor(np.ones(mean_t.shape)))
    return mean(sum_(scale(per_dim, 0.5), axis=1))


def reparameterize(mean_t: Tensor, log_sigma: Tensor, noise: Tensor) -> Tensor:
    """mean + exp(clamped log_sigma) * noise; gradient does not reach noise."""
    if mean_t.shape != log_sigma.shape or mean_t.shape != noise.shape:
        raise ShapeError(
            f"reparameterize shape mismatch: {mean_t.shape}, {log_sigma.shape}, {noise.shape}"
        )
    sigma = exp(clip(log_sigma, LOG_SIGMA_MIN, LOG_SIGMA_MAX))
    return add(mean_t, mul(sigma, noise.detach()))
