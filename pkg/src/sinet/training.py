"""Adam optimizer, augmentation, the training loop, and the gradient verifier."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .dataset import DatasetIndex
from .imageio import load_image
from .losses import LossConfig, total_loss_and_grad
from .model import (
    ModelConfig,
    SinetParams,
    init_params,
    named_parameters,
    replace_parameters,
    sinet_backward,
    sinet_forward,
)
from .tensor_ops import sobel_gradients


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 4
    crop: int = 256
    epochs: int | None = 1
    max_steps: int | None = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    # Optional early stop: end training once the batch loss drops to this
    # fraction of the first step's loss.
    target_loss_ratio: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        for name in ("batch_size", "crop"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs is None and self.max_steps is None:
            raise ValueError("one of epochs/max_steps must be set")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    t: int
    m: list
    v: list


def adam_init(values: list) -> AdamState:
    return AdamState(
        t=0,
        m=[np.zeros_like(np.asarray(v, dtype=np.float64)) for v in values],
        v=[np.zeros_like(np.asarray(v, dtype=np.float64)) for v in values],
    )


def adam_step(values: list, grads: list, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update. Returns (new_values, new_state)."""
    if len(values) != len(grads) or len(values) != len(state.m):
        raise ValueError(
            f"params/grads/state length mismatch: {len(values)}/{len(grads)}/"
            f"{len(state.m)}"
        )
    t = state.t + 1
    new_values, new_m, new_v = [], [], []
    for p, g, m, v in zip(values, grads, state.m, state.v):
        p = np.asarray(p)
        g = np.asarray(g, dtype=np.float64)
        if p.shape != g.shape:
            raise ValueError(f"param/grad shape mismatch: {p.shape} vs {g.shape}")
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        update = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        new_values.append((p - update).astype(p.dtype, copy=False))
        new_m.append(m)
        new_v.append(v)
    return new_values, AdamState(t=t, m=new_m, v=new_v)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


def augment_pair(source, truth, crop: int, rng, flips=None):
    """Identical random crop + flips for a training pair.

    Draw order: crop row, crop column, horizontal flip, vertical flip (each
    flip with probability 0.5). ``flips`` forces (horizontal, vertical)
    decisions without consuming the flip draws.
    """
    source = np.asarray(source)
    truth = np.asarray(truth)
    if source.shape != truth.shape:
        raise ValueError(f"pair shape mismatch: {source.shape} vs {truth.shape}")
    h, w = source.shape[:2]
    if h < crop or w < crop:
        raise ValueError(f"image {h}x{w} smaller than crop {crop}")
    y0 = int(rng.integers(0, h - crop + 1))
    x0 = int(rng.integers(0, w - crop + 1))
    if flips is None:
        flip_h = bool(rng.random() < 0.5)
        flip_v = bool(rng.random() < 0.5)
    else:
        flip_h, flip_v = flips
    out = []
    for img in (source, truth):
        window = img[y0 : y0 + crop, x0 : x0 + crop]
        if flip_h:
            window = window[:, ::-1]
        if flip_v:
            window = window[::-1, :]
        out.append(np.ascontiguousarray(window))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    loss: float
    intensity: float
    texture: float
    ssim: float
    seconds: float

    def line(self) -> str:
        return (
            f"step {self.step} loss {self.loss:.6f} lint {self.intensity:.6f} "
            f"ltext {self.texture:.6f} lssim {self.ssim:.6f} "
            f"seconds {self.seconds:.3f}"
        )


def best_checkpoint_path(out_checkpoint) -> Path:
    out = Path(out_checkpoint)
    return out.with_name(out.stem + ".best" + (out.suffix or ".ckpt"))


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    dataset_dir,
    out_checkpoint,
    log_stream=None,
    initial_params: SinetParams | None = None,
) -> list[StepRecord]:
    """Train on the paired dataset under ``dataset_dir``.

    Runs shuffled mini-batches (batch mean of per-image total loss), logs one
    line per step, and writes the best (lowest step loss) and last parameter
    checkpoints. Deterministic for a fixed seed on one platform.
    """
    index = DatasetIndex.scan(dataset_dir, require_reference=True)
    if not index.pairs:
        raise ValueError(f"no training pairs found under {dataset_dir}")

    params = initial_params if initial_params is not None else init_params(
        model_cfg, train_cfg.seed
    )
    values = [v for _, v in named_parameters(params)]
    state = adam_init(values)
    rng = np.random.default_rng(train_cfg.seed)

    records: list[StepRecord] = []
    best_loss = np.inf
    best_values = values
    initial_loss = None
    step = 0
    epoch = 0
    done = False
    while not done:
        if train_cfg.epochs is not None and epoch >= train_cfg.epochs:
            break
        order = rng.permutation(len(index.pairs))
        for start in range(0, len(order), train_cfg.batch_size):
            batch = order[start : start + train_cfg.batch_size]
            t0 = time.perf_counter()
            grad_sum = None
            loss_sum = lint_sum = ltext_sum = lssim_sum = 0.0
            for idx in batch:
                pair = index.pairs[idx]
                source = load_image(pair.source)
                truth = load_image(pair.reference)
                if source.shape != truth.shape:
                    raise ValueError(
                        f"pair {pair.stem}: source shape {source.shape} differs "
                        f"from reference shape {truth.shape}"
                    )
                source, truth = augment_pair(source, truth, train_cfg.crop, rng)
                source = source.astype(params.dtype)
                truth = truth.astype(params.dtype)
                enhanced, _, traces = sinet_forward(params, source)
                terms, upstream = total_loss_and_grad(enhanced, truth, loss_cfg)
                grads = sinet_backward(params, source, upstream, traces)
                grad_values = [g for _, g in named_parameters(grads)]
                if grad_sum is None:
                    grad_sum = grad_values
                else:
                    grad_sum = [a + b for a, b in zip(grad_sum, grad_values)]
                loss_sum += terms.total
                lint_sum += terms.intensity
                ltext_sum += terms.texture
                lssim_sum += terms.ssim
            n = len(batch)
            grad_mean = [g / n for g in grad_sum]
            values, state = adam_step(values, grad_mean, state, train_cfg)
            params = replace_parameters(params, values)
            step += 1
            record = StepRecord(
                step=step,
                loss=loss_sum / n,
                intensity=lint_sum / n,
                texture=ltext_sum / n,
                ssim=lssim_sum / n,
                seconds=time.perf_counter() - t0,
            )
            records.append(record)
            if log_stream is not None:
                log_stream.write(record.line() + "\n")
            if initial_loss is None:
                initial_loss = record.loss
            if record.loss < best_loss:
                best_loss = record.loss
                best_values = [v.copy() for v in values]
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                done = True
                break
            if (
                train_cfg.target_loss_ratio is not None
                and record.loss <= train_cfg.target_loss_ratio * initial_loss
            ):
                done = True
                break
        epoch += 1

    save_checkpoint(params, out_checkpoint)
    best_params = replace_parameters(params, best_values)
    save_checkpoint(best_params, best_checkpoint_path(out_checkpoint))
    return records


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    tolerance: float
    checked: int
    skipped: int
    family_errors: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [
            f"grad check: {'PASS' if self.passed else 'FAIL'} "
            f"max_rel_error {self.max_rel_error:.3e} tolerance {self.tolerance:.1e} "
            f"checked {self.checked} skipped {self.skipped}"
        ]
        for family in sorted(self.family_errors):
            out.append(f"  family {family}: worst {self.family_errors[family]:.3e}")
        return out


def _family_of(name: str) -> str:
    leaf = name.split(".")[-1]
    if leaf.startswith("conv"):
        return leaf
    return leaf


def _activation_signature(enhanced, truth, traces, loss_cfg):
    """Fingerprint of every kink-relevant sign: threshold masks + L1 signs."""
    parts = []
    for trace in traces:
        for z in trace:
            parts.append((np.asarray(z) != 0).ravel())
    if loss_cfg.enable_int:
        parts.append(np.sign(enhanced - truth).ravel())
    if loss_cfg.enable_text:
        parts.append(np.sign(sobel_gradients(enhanced) - sobel_gradients(truth)).ravel())
    return np.concatenate(parts)


def grad_check(
    model_cfg: ModelConfig,
    seed: int,
    height: int = 12,
    width: int = 12,
    samples: int = 200,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    loss_cfg: LossConfig | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of the total loss against central differences.

    Checks a random subsample of at least ``samples`` scalar parameters while
    forcing every parameter family to be represented. A candidate is skipped
    (and resampled) when its perturbation crosses a soft-threshold or L1 kink,
    detected as any activation-mask or sign flip between the two perturbed
    evaluations. Relative error uses an absolute floor of 1e-3 so that
    finite-difference noise on negligible gradients cannot dominate.
    """
    if loss_cfg is None:
        loss_cfg = LossConfig()
    rng = np.random.default_rng(seed)
    params = init_params(model_cfg, seed, dtype=np.float64)
    image = rng.uniform(0.0, 1.0, size=(height, width, 3))

    enhanced0, _, traces0 = sinet_forward(params, image)
    # Truth offset bounded away from zero keeps the L1 terms off their kinks.
    offset = rng.uniform(0.05, 0.15, size=enhanced0.shape)
    offset *= rng.choice([-1.0, 1.0], size=enhanced0.shape)
    truth = enhanced0 + offset

    terms, upstream = total_loss_and_grad(enhanced0, truth, loss_cfg)
    grads = sinet_backward(params, image, upstream, traces0)
    named_vals = named_parameters(params)
    named_grads = named_parameters(grads)

    def loss_and_signature(values):
        candidate = replace_parameters(params, values)
        enhanced, _, traces = sinet_forward(candidate, image)
        terms, _ = total_loss_and_grad(enhanced, truth, loss_cfg)
        return terms.total, _activation_signature(enhanced, truth, traces, loss_cfg)

    # Candidate positions: (leaf index, flat offset within the leaf).
    positions = []
    for li, (_, arr) in enumerate(named_vals):
        for off in range(arr.size):
            positions.append((li, off))
    rng.shuffle(positions)
    families = {_family_of(name) for name, _ in named_vals}
    quota = {f: 2 for f in families}

    chosen, extra = [], []
    for li, off in positions:
        fam = _family_of(named_vals[li][0])
        if quota[fam] > 0:
            quota[fam] -= 1
            chosen.append((li, off))
        elif len(chosen) + len(extra) < samples:
            extra.append((li, off))
    chosen += extra

    base_values = [np.asarray(v, dtype=np.float64) for _, v in named_vals]
    max_err = 0.0
    family_errors: dict[str, float] = {}
    checked = skipped = 0
    for li, off in chosen:
        name = named_vals[li][0]
        fam = _family_of(name)
        plus = [v.copy() for v in base_values]
        minus = [v.copy() for v in base_values]
        plus[li].ravel()[off] += step
        minus[li].ravel()[off] -= step
        loss_plus, sig_plus = loss_and_signature(plus)
        loss_minus, sig_minus = loss_and_signature(minus)
        if not np.array_equal(sig_plus, sig_minus):
            skipped += 1
            continue
        fd = (loss_plus - loss_minus) / (2.0 * step)
        analytic = float(np.asarray(named_grads[li][1]).ravel()[off])
        err = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-3)
        max_err = max(max_err, err)
        family_errors[fam] = max(family_errors.get(fam, 0.0), err)
        checked += 1

    return GradCheckReport(
        passed=max_err < tolerance and checked > 0,
        max_rel_error=max_err,
        tolerance=tolerance,
        checked=checked,
        skipped=skipped,
        family_errors=family_errors,
    )
