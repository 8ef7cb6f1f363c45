"""Sparse feature estimation block: an unrolled soft-thresholding iteration stack.

One iteration computes

    z_k = S_{theta_k}( z_{k-1} - W_u^k(W_d^k(z_{k-1})) + W_in^k(I) ),   z_{-1} = 0,

with per-iteration convolution banks and a learned, strictly decreasing,
strictly positive threshold schedule. The tied configuration shares the
index-0 banks across iterations and aliases W_in to W_u, which makes the block
a learned version of the classic ISTA recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csc import soft_threshold
from .tensor_ops import (
    KernelBank,
    check_tensor3,
    conv2d_adjoint,
    conv2d_param_grad,
    conv2d_same,
)


def softplus(x):
    """ln(1 + e^x), overflow-safe."""
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass
class ThresholdSchedule:
    """Learned threshold schedule theta(k) = softplus(w_theta * k + b_theta).

    The slope is reparameterized as w_theta = -softplus(w_raw) so it stays
    strictly negative for any finite w_raw, making theta(k) strictly
    decreasing in k without any clipping.
    """

    w_raw: float = 0.0
    b_theta: float = 0.0

    @property
    def slope(self) -> float:
        return -float(softplus(self.w_raw))


def theta_at(schedule: ThresholdSchedule, k: int) -> float:
    """Threshold for iteration k, strictly positive."""
    if k < 0:
        raise ValueError(f"iteration index must be nonnegative, got {k}")
    return float(softplus(schedule.slope * k + schedule.b_theta))


@dataclass
class SfebParams:
    """Per-iteration banks plus the threshold schedule for one SFEB.

    ``w_in[k]`` and ``w_u[k]`` map the image channels to K code channels,
    ``w_d[k]`` maps K code channels back; all banks are bias-free. In tied
    mode only index-0 banks are stored: every iteration shares them and
    ``w_in`` aliases ``w_u`` (the stored ``w_in`` list is empty).
    """

    w_in: list
    w_u: list
    w_d: list
    schedule: ThresholdSchedule
    iterations: int
    tied: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        stored = 1 if self.tied else self.iterations
        if self.tied and len(self.w_in) != 0:
            raise ValueError("tied mode stores no w_in banks (aliases w_u)")
        if not self.tied and len(self.w_in) != stored:
            raise ValueError(f"expected {stored} w_in banks, got {len(self.w_in)}")
        if len(self.w_u) != stored or len(self.w_d) != stored:
            raise ValueError(
                f"expected {stored} w_u/w_d banks, got "
                f"{len(self.w_u)}/{len(self.w_d)}"
            )
        ks = self.w_u[0].kernel_size
        k_filters = self.w_u[0].out_channels
        cin = self.w_u[0].in_channels
        for bank in (*self.w_in, *self.w_u):
            if bank.kernel_size != ks:
                raise ValueError("all banks must share one kernel_size")
            if (bank.out_channels, bank.in_channels) != (k_filters, cin):
                raise ValueError("w_in/w_u banks must all map C -> K")
            if bank.bias is not None:
                raise ValueError("SFEB banks are bias-free")
        for bank in self.w_d:
            if bank.kernel_size != ks:
                raise ValueError("all banks must share one kernel_size")
            if (bank.out_channels, bank.in_channels) != (cin, k_filters):
                raise ValueError("w_d banks must all map K -> C")
            if bank.bias is not None:
                raise ValueError("SFEB banks are bias-free")

    @property
    def k_filters(self) -> int:
        return self.w_u[0].out_channels

    @property
    def in_channels(self) -> int:
        return self.w_u[0].in_channels

    @property
    def kernel_size(self) -> int:
        return self.w_u[0].kernel_size

    def _stored_index(self, k: int) -> int:
        return 0 if self.tied else k

    def w_in_at(self, k: int) -> KernelBank:
        if self.tied:
            return self.w_u[0]
        return self.w_in[k]

    def w_u_at(self, k: int) -> KernelBank:
        return self.w_u[self._stored_index(k)]

    def w_d_at(self, k: int) -> KernelBank:
        return self.w_d[self._stored_index(k)]


def _check_channel(params: SfebParams, channel: np.ndarray) -> np.ndarray:
    channel = check_tensor3(channel, "channel")
    if channel.shape[2] != params.in_channels:
        raise ValueError(
            f"channel count mismatch: input has {channel.shape[2]}, SFEB banks "
            f"expect {params.in_channels}"
        )
    return channel


def _thetas(params: SfebParams, theta_override) -> list[float]:
    if theta_override is not None:
        if len(theta_override) != params.iterations:
            raise ValueError(
                f"theta_override must provide {params.iterations} values, got "
                f"{len(theta_override)}"
            )
        return [float(t) for t in theta_override]
    return [theta_at(params.schedule, k) for k in range(params.iterations)]


def sfeb_forward(
    params: SfebParams,
    channel: np.ndarray,
    collect_trace: bool = True,
    theta_override=None,
):
    """Run the unrolled iteration stack on one image channel.

    Returns (code, trace) where trace is the list of all per-iteration codes
    (or None when ``collect_trace`` is off). ``theta_override`` is a testing
    hook that replaces the schedule with explicit per-iteration constants.
    """
    channel = _check_channel(params, channel)
    thetas = _thetas(params, theta_override)
    z = None
    trace = [] if collect_trace else None
    for k in range(params.iterations):
        pre = conv2d_same(channel, params.w_in_at(k))
        if z is not None:
            pre = pre + z - conv2d_same(conv2d_same(z, params.w_d_at(k)), params.w_u_at(k))
        z = soft_threshold(pre, thetas[k])
        if collect_trace:
            trace.append(z)
    return z, trace


def sfeb_backward(
    params: SfebParams,
    channel: np.ndarray,
    upstream_grad: np.ndarray,
    trace: list,
):
    """Reverse-mode gradients through the unrolled stack.

    ``trace`` must come from a matching ``sfeb_forward`` call. The
    soft-threshold derivative is 1 where the pre-activation magnitude exceeds
    its threshold and 0 elsewhere (subgradient 0 at the kink); the threshold
    derivative is -sgn(pre-activation) on that same active set. Returns
    (param_grads, input_grad) with ``param_grads`` shaped like ``params``.
    """
    channel = _check_channel(params, channel)
    t_iter = params.iterations
    if trace is None or len(trace) != t_iter:
        raise ValueError(
            f"trace must hold {t_iter} per-iteration codes, got "
            f"{'none' if trace is None else len(trace)}"
        )
    code_shape = (channel.shape[0], channel.shape[1], params.k_filters)
    upstream_grad = check_tensor3(upstream_grad, "upstream_grad")
    if upstream_grad.shape != code_shape:
        raise ValueError(
            f"upstream_grad shape {upstream_grad.shape} does not match code "
            f"shape {code_shape}"
        )
    for k, z in enumerate(trace):
        if np.asarray(z).shape != code_shape:
            raise ValueError(f"trace entry {k} has shape {np.asarray(z).shape}, "
                             f"expected {code_shape}")

    ks = params.kernel_size
    win_grads = [] if params.tied else [np.zeros_like(b.weights) for b in params.w_in]
    wu_grads = [np.zeros_like(b.weights) for b in params.w_u]
    wd_grads = [np.zeros_like(b.weights) for b in params.w_d]
    w_raw_grad = 0.0
    b_theta_grad = 0.0
    sig_w_raw = sigmoid(params.schedule.w_raw)
    slope = params.schedule.slope

    g = upstream_grad
    input_grad = np.zeros_like(channel)
    for k in range(t_iter - 1, -1, -1):
        z_k = trace[k]
        mask = z_k != 0
        gu = np.where(mask, g, 0.0)

        # dL/d(theta_k), then through theta_k = sp(slope*k + b) and
        # slope = -sp(w_raw).
        dtheta = -float((g * np.sign(z_k)).sum())
        sig_pre = sigmoid(slope * k + params.schedule.b_theta)
        b_theta_grad += dtheta * sig_pre
        w_raw_grad += dtheta * k * sig_pre * (-sig_w_raw)

        si = params._stored_index(k)
        wg, _ = conv2d_param_grad(channel, gu, ks, with_bias=False)
        if params.tied:
            wu_grads[0] += wg  # W_in aliases W_u in tied mode
        else:
            win_grads[si] += wg
        input_grad += conv2d_adjoint(gu, params.w_in_at(k))

        if k > 0:
            z_prev = trace[k - 1]
            d_k = conv2d_same(z_prev, params.w_d_at(k))
            t = conv2d_adjoint(gu, params.w_u_at(k))
            wg_u, _ = conv2d_param_grad(d_k, -gu, ks, with_bias=False)
            wu_grads[si] += wg_u
            wg_d, _ = conv2d_param_grad(z_prev, -t, ks, with_bias=False)
            wd_grads[si] += wg_d
            g = gu - conv2d_adjoint(t, params.w_d_at(k))
        # k == 0: z_{-1} = 0, so the W_u/W_d paths vanish.

    param_grads = SfebParams(
        w_in=[] if params.tied else [KernelBank(w) for w in win_grads],
        w_u=[KernelBank(w) for w in wu_grads],
        w_d=[KernelBank(w) for w in wd_grads],
        schedule=ThresholdSchedule(w_raw=w_raw_grad, b_theta=b_theta_grad),
        iterations=t_iter,
        tied=params.tied,
    )
    return param_grads, input_grad
