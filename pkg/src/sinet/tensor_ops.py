"""Dense H x W x C tensors and the convolution/reduction primitives built on them.

Images, feature maps and gradients are all plain ``numpy.ndarray`` objects of
shape ``(height, width, channels)`` in row-major order; this module is the
single place that defines the convolution convention (cross-correlation,
zero-padded "same") used everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def check_tensor3(t: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate that *t* is a finite 3-D (H, W, C) array with positive dims."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"{name} must be a 3-D (H, W, C) array, got shape {t.shape}")
    if min(t.shape) < 1:
        raise ValueError(f"{name} must have positive dimensions, got shape {t.shape}")
    return t


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


@dataclass
class KernelBank:
    """A bank of 2-D convolution kernels with optional per-output bias.

    ``weights`` has shape (out_channels, in_channels, kernel_size, kernel_size)
    with odd kernel_size so that "same" padding is symmetric.
    """

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        if self.weights.ndim != 4:
            raise ValueError(
                f"weights must be 4-D (out, in, k, k), got shape {self.weights.shape}"
            )
        if self.weights.shape[2] != self.weights.shape[3]:
            raise ValueError(f"kernels must be square, got shape {self.weights.shape}")
        if self.weights.shape[2] % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.weights.shape[2]}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias)
            if self.bias.shape != (self.weights.shape[0],):
                raise ValueError(
                    f"bias must have shape ({self.weights.shape[0]},), "
                    f"got {self.bias.shape}"
                )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


def conv2d_same(image: np.ndarray, bank: KernelBank) -> np.ndarray:
    """Zero-padded "same" 2-D convolution (cross-correlation convention).

    out(y, x, o) = sum_{i,dy,dx} image(y+dy-p, x+dx-p, i) * w(o, i, dy, dx) + bias(o)
    with p = (kernel_size - 1) / 2 and out-of-range input treated as zero.
    """
    image = check_tensor3(image, "image")
    h, w, cin = image.shape
    if cin != bank.in_channels:
        raise ValueError(
            f"channel mismatch: image has {cin} channels, bank expects "
            f"{bank.in_channels}"
        )
    k = bank.kernel_size
    p = k // 2
    dtype = np.result_type(image.dtype, bank.weights.dtype)
    padded = np.zeros((h + 2 * p, w + 2 * p, cin), dtype=dtype)
    padded[p : p + h, p : p + w, :] = image
    out = np.zeros((h * w, bank.out_channels), dtype=dtype)
    wts = bank.weights.astype(dtype, copy=False)
    # Shift-and-add: one (H*W, cin) x (cin, cout) product per kernel tap,
    # accumulated in fixed (dy, dx) order.
    for dy in range(k):
        for dx in range(k):
            window = padded[dy : dy + h, dx : dx + w, :].reshape(h * w, cin)
            out += window @ wts[:, :, dy, dx].T
    out = out.reshape(h, w, bank.out_channels)
    if bank.bias is not None:
        out = out + bank.bias.astype(dtype, copy=False)
    return out


def transpose_bank(bank: KernelBank) -> KernelBank:
    """Adjoint bank: kernels flipped 180 degrees, in/out roles swapped, no bias."""
    flipped = bank.weights[:, :, ::-1, ::-1]
    return KernelBank(weights=np.ascontiguousarray(flipped.transpose(1, 0, 2, 3)))


def conv2d_adjoint(image: np.ndarray, bank: KernelBank) -> np.ndarray:
    """Adjoint of bias-free ``conv2d_same`` with respect to the image argument.

    Satisfies dot(conv2d_same(u, bank), v) == dot(u, conv2d_adjoint(v, bank))
    for bias-free banks and conforming u, v.
    """
    image = check_tensor3(image, "image")
    if image.shape[2] != bank.out_channels:
        raise ValueError(
            f"channel mismatch: image has {image.shape[2]} channels, adjoint of "
            f"bank expects {bank.out_channels}"
        )
    return conv2d_same(image, transpose_bank(bank))


def conv2d_param_grad(
    image: np.ndarray, out_grad: np.ndarray, kernel_size: int, with_bias: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Gradient of conv2d_same w.r.t. the bank, given the output cotangent.

    Returns (weight_grad, bias_grad) where weight_grad(o, i, dy, dx) =
    sum_{y,x} out_grad(y, x, o) * image_padded(y+dy, x+dx, i).
    """
    image = check_tensor3(image, "image")
    out_grad = check_tensor3(out_grad, "out_grad")
    if image.shape[:2] != out_grad.shape[:2]:
        raise ValueError(
            f"spatial shape mismatch: {image.shape[:2]} vs {out_grad.shape[:2]}"
        )
    h, w, cin = image.shape
    cout = out_grad.shape[2]
    k = kernel_size
    p = k // 2
    dtype = np.result_type(image.dtype, out_grad.dtype)
    padded = np.zeros((h + 2 * p, w + 2 * p, cin), dtype=dtype)
    padded[p : p + h, p : p + w, :] = image
    grad_flat = out_grad.reshape(h * w, cout).astype(dtype, copy=False)
    wgrad = np.zeros((cout, cin, k, k), dtype=dtype)
    for dy in range(k):
        for dx in range(k):
            window = padded[dy : dy + h, dx : dx + w, :].reshape(h * w, cin)
            wgrad[:, :, dy, dx] = grad_flat.T @ window
    bgrad = out_grad.sum(axis=(0, 1)) if with_bias else None
    return wgrad, bgrad


# ---------------------------------------------------------------------------
# Elementwise and reduction primitives
# ---------------------------------------------------------------------------


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b)
    return a - b


def scale(t: np.ndarray, c: float) -> np.ndarray:
    return t * c


def abs_sum(t: np.ndarray) -> float:
    return float(np.abs(t).sum())


def sq_sum(t: np.ndarray) -> float:
    return float(np.square(t).sum())


def mean(t: np.ndarray) -> float:
    return float(t.mean())


def dot(a: np.ndarray, b: np.ndarray) -> float:
    _check_same_shape(a, b)
    return float((a * b).sum())


def map_unary(t: np.ndarray, fn) -> np.ndarray:
    """Apply a scalar function elementwise (vectorized when fn supports arrays)."""
    return fn(t)


# ---------------------------------------------------------------------------
# Sobel gradients
# ---------------------------------------------------------------------------

SOBEL_HORIZONTAL = np.array(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
)
SOBEL_VERTICAL = SOBEL_HORIZONTAL.T.copy()


def sobel_bank(channels: int, dtype=np.float64) -> KernelBank:
    """Bank computing, per input channel, the horizontal then vertical Sobel plane."""
    weights = np.zeros((2 * channels, channels, 3, 3), dtype=dtype)
    for c in range(channels):
        weights[2 * c, c] = SOBEL_HORIZONTAL
        weights[2 * c + 1, c] = SOBEL_VERTICAL
    return KernelBank(weights=weights)


def sobel_gradients(image: np.ndarray) -> np.ndarray:
    """Per-channel Sobel derivative planes, H x W x 2C (horizontal, vertical)."""
    image = check_tensor3(image, "image")
    return conv2d_same(image, sobel_bank(image.shape[2], dtype=image.dtype))
