"""Evaluation metrics (PSNR, SSIM) and the analytic FLOPs estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import load_checkpoint
from .dataset import DatasetIndex
from .imageio import load_image
from .losses import ssim
from .model import _DS1_STACK_DEPTH, ModelConfig, sinet_forward
from .tensor_ops import check_tensor3

PSNR_CAP_DB = 100.0


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB over all elements jointly.

    Identical inputs return the cap value 100.0 dB.
    """
    a = check_tensor3(a, "a")
    b = check_tensor3(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(peak * peak / mse)))


# ---------------------------------------------------------------------------
# FLOPs accounting
# ---------------------------------------------------------------------------


@dataclass
class FlopsReport:
    macs: int
    flops: int
    elementwise: int
    per_layer: list

    def lines(self) -> list:
        out = [f"{name}: {macs} MACs" for name, macs in self.per_layer]
        out.append(f"total MACs {self.macs}")
        out.append(f"total FLOPs (2 x MACs) {self.flops}")
        out.append(f"elementwise ops {self.elementwise}")
        return out


def conv_macs(height: int, width: int, in_ch: int, out_ch: int, kernel_size: int) -> int:
    return height * width * in_ch * out_ch * kernel_size * kernel_size


def _sfeb_layers(height, width, in_ch, kf, ks, iterations, prefix):
    """Per-conv MAC entries for one estimation branch.

    Iteration 0 starts from a zero code, so its update/downdate convolutions
    are never executed; only w_in runs. Elementwise work (the subtraction,
    addition, and thresholding) is tallied separately by the caller.
    """
    layers = []
    for t in range(iterations):
        layers.append(
            (f"{prefix}.iter{t}.w_in", conv_macs(height, width, in_ch, kf, ks))
        )
        if t > 0:
            layers.append(
                (f"{prefix}.iter{t}.w_d", conv_macs(height, width, kf, in_ch, ks))
            )
            layers.append(
                (f"{prefix}.iter{t}.w_u", conv_macs(height, width, in_ch, kf, ks))
            )
    return layers


def flops_estimate(config: ModelConfig, height: int, width: int) -> FlopsReport:
    """Closed-form MAC/FLOP count for one forward pass at the given resolution.

    MACs follow the standard H*W*Cin*Cout*k^2 convolution accounting; FLOPs is
    reported as 2 x MACs. Elementwise additions/thresholdings are counted
    separately and excluded from the MAC total.
    """
    if height < 1 or width < 1:
        raise ValueError(f"resolution must be positive, got {height}x{width}")
    kf = config.k_filters
    ks = config.kernel_size
    hw = height * width
    layers = []
    elementwise = 0

    if config.variant == "ds3_single_branch":
        layers += _sfeb_layers(height, width, 3, kf, ks, config.iterations, "branch0")
        layers.append(("recon0", conv_macs(height, width, kf, 3, ks)))
        # Per iteration: threshold shift + soft threshold (2 ops per code
        # element); iterations past the first also form the residual combination.
        elementwise += config.iterations * 2 * hw * kf
        elementwise += (config.iterations - 1) * 2 * hw * kf
        elementwise += hw * 3  # recon bias add
    elif config.variant == "ds1_plain_convs":
        for b in range(3):
            for j in range(_DS1_STACK_DEPTH):
                cin = 1 if j == 0 else kf
                layers.append(
                    (f"branch{b}.conv{j}", conv_macs(height, width, cin, kf, ks))
                )
                elementwise += hw * kf  # bias add
            layers.append(("recon%d" % b, conv_macs(height, width, kf, 1, ks)))
            elementwise += hw
    else:  # full, ds2_tied_lcsc (tying shares weights, not work)
        for b in range(3):
            layers += _sfeb_layers(
                height, width, 1, kf, ks, config.iterations, f"branch{b}"
            )
            layers.append((f"recon{b}", conv_macs(height, width, kf, 1, ks)))
            elementwise += config.iterations * 2 * hw * kf
            elementwise += (config.iterations - 1) * 2 * hw * kf
            elementwise += hw

    macs = sum(m for _, m in layers)
    return FlopsReport(macs=macs, flops=2 * macs, elementwise=elementwise, per_layer=layers)


# ---------------------------------------------------------------------------
# Directory evaluation
# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    image_ids: list
    psnr_db: list
    ssim: list
    warnings: list

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_db))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))

    def csv_lines(self) -> list:
        lines = ["image,psnr_db,ssim"]
        for name, p, s in zip(self.image_ids, self.psnr_db, self.ssim):
            lines.append(f"{name},{p:.6f},{s:.6f}")
        return lines

    def summary_lines(self) -> list:
        lines = []
        for name, p, s in zip(self.image_ids, self.psnr_db, self.ssim):
            lines.append(f"{name}: psnr {p:.4f} dB ssim {s:.6f}")
        lines.append(
            f"mean over {len(self.image_ids)} image(s): psnr {self.mean_psnr:.4f} dB "
            f"ssim {self.mean_ssim:.6f}"
        )
        return lines


def evaluate_pairs(params, index: DatasetIndex) -> MetricReport:
    ids, psnrs, ssims = [], [], []
    warnings = index.mismatch_report()
    for pair in index.pairs:
        if pair.reference is None:
            warnings.append(f"warning: {pair.source} has no matching reference; skipped")
            continue
        source = load_image(pair.source)
        truth = load_image(pair.reference)
        if source.shape != truth.shape:
            raise ValueError(
                f"pair {pair.stem}: source shape {source.shape} differs from "
                f"reference shape {truth.shape}"
            )
        enhanced, _, _ = sinet_forward(params, source, collect_trace=False)
        enhanced = np.clip(np.asarray(enhanced, dtype=np.float64), 0.0, 1.0)
        ids.append(pair.stem)
        psnrs.append(psnr(enhanced, truth))
        ssims.append(ssim(enhanced, truth))
    if not ids:
        raise ValueError(f"no evaluable pairs under {index.root}")
    return MetricReport(image_ids=ids, psnr_db=psnrs, ssim=ssims, warnings=warnings)


def evaluate_dir(checkpoint_path, dataset_dir) -> MetricReport:
    """Enhance every paired image at native resolution and score it."""
    params = load_checkpoint(checkpoint_path)
    index = DatasetIndex.scan(dataset_dir, require_reference=True)
    return evaluate_pairs(params, index)
