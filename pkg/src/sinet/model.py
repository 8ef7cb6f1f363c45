"""The full enhancement network: channel split, per-channel estimation blocks,
reconstruction convolutions, channel concatenation.

Four variants are supported:

* ``full``              - three untied SFEBs, one reconstruction conv each (DS4)
* ``ds1_plain_convs``   - each SFEB replaced by a plain 4-conv stack, no thresholding
* ``ds2_tied_lcsc``     - SFEBs with banks shared across iterations (LCSC-style)
* ``ds3_single_branch`` - one SFEB over the whole 3-channel image, one K->3 recon

Parameters are plain dataclasses of numpy arrays; ``named_parameters`` /
``replace_parameters`` define the canonical flat ordering shared by the
optimizer and the checkpoint codec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sfeb import SfebParams, ThresholdSchedule, sfeb_backward, sfeb_forward
from .tensor_ops import (
    KernelBank,
    check_tensor3,
    conv2d_adjoint,
    conv2d_param_grad,
    conv2d_same,
)

VARIANTS = ("full", "ds1_plain_convs", "ds2_tied_lcsc", "ds3_single_branch")
_DS1_STACK_DEPTH = 4


@dataclass
class ModelConfig:
    k_filters: int = 16
    kernel_size: int = 11
    iterations: int = 4
    variant: str = "full"

    def __post_init__(self):
        if self.k_filters < 1:
            raise ValueError(f"k_filters must be >= 1, got {self.k_filters}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.variant not in VARIANTS:
            raise ValueError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}"
            )


@dataclass
class PlainConvStack:
    """DS1 branch: a fixed stack of biased convolutions with identity activations."""

    banks: list

    def __post_init__(self):
        if len(self.banks) != _DS1_STACK_DEPTH:
            raise ValueError(
                f"plain stack must hold {_DS1_STACK_DEPTH} banks, got "
                f"{len(self.banks)}"
            )
        for bank in self.banks:
            if bank.bias is None:
                raise ValueError("plain stack banks carry a bias")

    @property
    def in_channels(self) -> int:
        return self.banks[0].in_channels

    @property
    def k_filters(self) -> int:
        return self.banks[-1].out_channels


def plain_stack_forward(stack: PlainConvStack, channel: np.ndarray, collect_trace=True):
    trace = [] if collect_trace else None
    out = channel
    for bank in stack.banks:
        out = conv2d_same(out, bank)
        if collect_trace:
            trace.append(out)
    return out, trace


def plain_stack_backward(stack: PlainConvStack, channel: np.ndarray, upstream_grad, trace):
    if trace is None or len(trace) != len(stack.banks):
        raise ValueError(
            f"trace must hold {len(stack.banks)} layer outputs, got "
            f"{'none' if trace is None else len(trace)}"
        )
    grads = []
    g = upstream_grad
    for j in range(len(stack.banks) - 1, -1, -1):
        layer_in = channel if j == 0 else trace[j - 1]
        wgrad, bgrad = conv2d_param_grad(
            layer_in, g, stack.banks[j].kernel_size, with_bias=True
        )
        grads.append(KernelBank(wgrad, bgrad))
        g = conv2d_adjoint(g, stack.banks[j])
    grads.reverse()
    return PlainConvStack(banks=grads), g


@dataclass
class SinetParams:
    """Complete trainable state: one estimation branch + recon bank per branch."""

    branches: list
    recon: list
    config: ModelConfig

    def __post_init__(self):
        expected = 1 if self.config.variant == "ds3_single_branch" else 3
        if len(self.branches) != expected or len(self.recon) != expected:
            raise ValueError(
                f"variant {self.config.variant} needs {expected} branch(es), got "
                f"{len(self.branches)} branches / {len(self.recon)} recon banks"
            )
        for bank in self.recon:
            if bank.bias is None:
                raise ValueError("reconstruction banks carry a bias")

    @property
    def dtype(self):
        if isinstance(self.branches[0], PlainConvStack):
            return self.branches[0].banks[0].weights.dtype
        return self.branches[0].w_u[0].weights.dtype


def split_channels(image: np.ndarray):
    """Lossless per-index split of an H x W x 3 image into three H x W x 1 planes."""
    image = check_tensor3(image, "image")
    if image.shape[2] != 3:
        raise ValueError(f"expected 3 channels, got {image.shape[2]}")
    return tuple(np.ascontiguousarray(image[:, :, i : i + 1]) for i in range(3))


def concat_channels(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Inverse of ``split_channels``."""
    planes = [check_tensor3(p, "plane") for p in (a, b, c)]
    base = planes[0].shape[:2]
    for p in planes:
        if p.shape[2] != 1:
            raise ValueError(f"planes must be H x W x 1, got {p.shape}")
        if p.shape[:2] != base:
            raise ValueError(f"spatial shape mismatch: {p.shape[:2]} vs {base}")
    return np.concatenate(planes, axis=2)


def sinet_forward(params: SinetParams, image: np.ndarray, collect_trace: bool = True):
    """Enhance one image. Returns (enhanced, codes, traces).

    Input values are nominally in [0, 1] (not enforced) and the output is not
    clamped; clamping to the displayable range is an I/O concern. The image is
    cast to the parameter dtype on entry.
    """
    image = check_tensor3(image, "image")
    if image.shape[2] != 3:
        raise ValueError(f"expected a 3-channel image, got {image.shape[2]}")
    image = image.astype(params.dtype, copy=False)
    variant = params.config.variant

    if variant == "ds3_single_branch":
        code, trace = sfeb_forward(params.branches[0], image, collect_trace)
        enhanced = conv2d_same(code, params.recon[0])
        return enhanced, [code], [trace]

    channels = split_channels(image)
    codes, traces, outs = [], [], []
    for i in range(3):
        if variant == "ds1_plain_convs":
            code, trace = plain_stack_forward(params.branches[i], channels[i], collect_trace)
        else:
            code, trace = sfeb_forward(params.branches[i], channels[i], collect_trace)
        codes.append(code)
        traces.append(trace)
        outs.append(conv2d_same(code, params.recon[i]))
    return concat_channels(*outs), codes, traces


def sinet_backward(
    params: SinetParams, image: np.ndarray, upstream_grad: np.ndarray, traces: list
) -> SinetParams:
    """Gradients of a scalar loss w.r.t. every trainable value.

    ``upstream_grad`` is the loss cotangent of the enhanced image;
    ``traces`` must come from the matching ``sinet_forward`` call.
    """
    image = check_tensor3(image, "image").astype(params.dtype, copy=False)
    upstream_grad = check_tensor3(upstream_grad, "upstream_grad")
    if upstream_grad.shape != (image.shape[0], image.shape[1], 3):
        raise ValueError(
            f"upstream_grad shape {upstream_grad.shape} does not match enhanced "
            f"shape {(image.shape[0], image.shape[1], 3)}"
        )
    variant = params.config.variant
    n_branches = len(params.branches)
    if traces is None or len(traces) != n_branches:
        raise ValueError(
            f"expected traces for {n_branches} branch(es), got "
            f"{'none' if traces is None else len(traces)}"
        )

    if variant == "ds3_single_branch":
        branch_inputs = [image]
        branch_upstreams = [upstream_grad]
    else:
        branch_inputs = list(split_channels(image))
        branch_upstreams = [
            np.ascontiguousarray(upstream_grad[:, :, i : i + 1]) for i in range(3)
        ]

    branch_grads, recon_grads = [], []
    for i in range(n_branches):
        trace = traces[i]
        if not trace:
            raise ValueError(f"branch {i} trace is empty")
        code = trace[-1]
        ks = params.recon[i].kernel_size
        wgrad, bgrad = conv2d_param_grad(code, branch_upstreams[i], ks, with_bias=True)
        recon_grads.append(KernelBank(wgrad, bgrad))
        code_grad = conv2d_adjoint(branch_upstreams[i], params.recon[i])
        if variant == "ds1_plain_convs":
            bgrads, _ = plain_stack_backward(
                params.branches[i], branch_inputs[i], code_grad, trace
            )
        else:
            bgrads, _ = sfeb_backward(
                params.branches[i], branch_inputs[i], code_grad, trace
            )
        branch_grads.append(bgrads)

    return SinetParams(branches=branch_grads, recon=recon_grads, config=params.config)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _draw_bank(rng, out_ch, in_ch, ks, dtype, with_bias=False) -> KernelBank:
    bound = np.sqrt(1.0 / (in_ch * ks * ks))
    weights = rng.uniform(-bound, bound, size=(out_ch, in_ch, ks, ks)).astype(dtype)
    bias = np.zeros(out_ch, dtype=dtype) if with_bias else None
    return KernelBank(weights=weights, bias=bias)


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> SinetParams:
    """Deterministic parameter initialization.

    Bank weights are uniform in [-b, b] with b = sqrt(1 / (in_channels * k^2));
    all biases start at 0; the schedule starts at w_raw = 0 (slope -ln 2) and
    b_theta = -2 (theta_0 = softplus(-2) ~ 0.127).
    """
    rng = np.random.default_rng(seed)
    ks = config.kernel_size
    kf = config.k_filters
    variant = config.variant
    n_branches = 1 if variant == "ds3_single_branch" else 3
    branch_cin = 3 if variant == "ds3_single_branch" else 1

    branches = []
    for _ in range(n_branches):
        if variant == "ds1_plain_convs":
            banks = [_draw_bank(rng, kf, branch_cin, ks, dtype, with_bias=True)]
            for _ in range(_DS1_STACK_DEPTH - 1):
                banks.append(_draw_bank(rng, kf, kf, ks, dtype, with_bias=True))
            branches.append(PlainConvStack(banks=banks))
            continue
        tied = variant == "ds2_tied_lcsc"
        stored = 1 if tied else config.iterations
        w_in, w_u, w_d = [], [], []
        for _ in range(stored):
            if not tied:
                w_in.append(_draw_bank(rng, kf, branch_cin, ks, dtype))
            w_u.append(_draw_bank(rng, kf, branch_cin, ks, dtype))
            w_d.append(_draw_bank(rng, branch_cin, kf, ks, dtype))
        branches.append(
            SfebParams(
                w_in=w_in,
                w_u=w_u,
                w_d=w_d,
                schedule=ThresholdSchedule(w_raw=0.0, b_theta=-2.0),
                iterations=config.iterations,
                tied=tied,
            )
        )

    recon = [
        _draw_bank(rng, branch_cin, kf, ks, dtype, with_bias=True)
        for _ in range(n_branches)
    ]
    return SinetParams(branches=branches, recon=recon, config=config)


# ---------------------------------------------------------------------------
# Flat parameter views (optimizer + checkpoint ordering)
# ---------------------------------------------------------------------------


def named_parameters(params: SinetParams) -> list:
    """Owned parameters as (name, array) in the canonical serialization order.

    Aliased banks (tied w_in, shared iteration banks) appear exactly once.
    Schedule scalars are exposed as 0-d float64 arrays.
    """
    entries = []
    for i, branch in enumerate(params.branches):
        if isinstance(branch, PlainConvStack):
            for j, bank in enumerate(branch.banks):
                entries.append((f"branch{i}.conv{j}.weights", bank.weights))
                entries.append((f"branch{i}.conv{j}.bias", bank.bias))
            continue
        stored = 1 if branch.tied else branch.iterations
        for k in range(stored):
            if not branch.tied:
                entries.append((f"branch{i}.iter{k}.w_in", branch.w_in[k].weights))
            entries.append((f"branch{i}.iter{k}.w_u", branch.w_u[k].weights))
            entries.append((f"branch{i}.iter{k}.w_d", branch.w_d[k].weights))
        entries.append((f"branch{i}.w_raw", np.asarray(float(branch.schedule.w_raw))))
        entries.append(
            (f"branch{i}.b_theta", np.asarray(float(branch.schedule.b_theta)))
        )
    for i, bank in enumerate(params.recon):
        entries.append((f"recon{i}.weights", bank.weights))
        entries.append((f"recon{i}.bias", bank.bias))
    return entries


def replace_parameters(params: SinetParams, values: list) -> SinetParams:
    """Rebuild a params object from flat values in ``named_parameters`` order."""
    expected = len(named_parameters(params))
    if len(values) != expected:
        raise ValueError(f"expected {expected} parameter arrays, got {len(values)}")
    it = iter(values)

    branches = []
    for branch in params.branches:
        if isinstance(branch, PlainConvStack):
            banks = [KernelBank(next(it).copy(), next(it).copy()) for _ in branch.banks]
            branches.append(PlainConvStack(banks=banks))
            continue
        stored = 1 if branch.tied else branch.iterations
        w_in, w_u, w_d = [], [], []
        for _ in range(stored):
            if not branch.tied:
                w_in.append(KernelBank(next(it).copy()))
            w_u.append(KernelBank(next(it).copy()))
            w_d.append(KernelBank(next(it).copy()))
        schedule = ThresholdSchedule(w_raw=float(next(it)), b_theta=float(next(it)))
        branches.append(
            SfebParams(
                w_in=w_in,
                w_u=w_u,
                w_d=w_d,
                schedule=schedule,
                iterations=branch.iterations,
                tied=branch.tied,
            )
        )
    recon = [KernelBank(next(it).copy(), next(it).copy()) for _ in params.recon]
    return SinetParams(branches=branches, recon=recon, config=params.config)
