"""Training losses: intensity (L1), texture (L1 on Sobel gradients), and SSIM.

All three are means over elements so the loss weights stay
resolution-independent. Each loss comes with a closed-form gradient with
respect to the enhanced image; the SSIM gradient is derived by
differentiating the windowed similarity map through the Gaussian filters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_ops import check_tensor3, conv2d_adjoint, sobel_bank, sobel_gradients

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class LossConfig:
    """Weights and on/off flags for the three loss terms."""

    alpha1: float = 40.0
    alpha2: float = 40.0
    alpha3: float = 100.0
    enable_int: bool = True
    enable_text: bool = True
    enable_ssim: bool = True

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def from_setting(cls, setting: str, **kwargs) -> "LossConfig":
        """LS1: intensity only; LS2: + texture; LS3: all three."""
        setting = setting.upper()
        if setting not in ("LS1", "LS2", "LS3"):
            raise ValueError(f"unknown loss setting {setting!r}")
        return cls(
            enable_int=True,
            enable_text=setting in ("LS2", "LS3"),
            enable_ssim=setting == "LS3",
            **kwargs,
        )


def _check_pair(enhanced, truth):
    enhanced = check_tensor3(enhanced, "enhanced")
    truth = check_tensor3(truth, "truth")
    if enhanced.shape != truth.shape:
        raise ValueError(f"shape mismatch: {enhanced.shape} vs {truth.shape}")
    return enhanced, truth


def loss_intensity(enhanced, truth) -> float:
    """Mean absolute difference over all elements."""
    enhanced, truth = _check_pair(enhanced, truth)
    return float(np.abs(enhanced - truth).mean())


def loss_intensity_grad(enhanced, truth) -> np.ndarray:
    enhanced, truth = _check_pair(enhanced, truth)
    return np.sign(enhanced - truth) / enhanced.size


def loss_texture(enhanced, truth) -> float:
    """Mean absolute difference between Sobel gradient stacks (all 2C planes)."""
    enhanced, truth = _check_pair(enhanced, truth)
    return float(np.abs(sobel_gradients(enhanced) - sobel_gradients(truth)).mean())


def loss_texture_grad(enhanced, truth) -> np.ndarray:
    enhanced, truth = _check_pair(enhanced, truth)
    diff = sobel_gradients(enhanced) - sobel_gradients(truth)
    cotangent = np.sign(diff) / diff.size
    return conv2d_adjoint(cotangent, sobel_bank(enhanced.shape[2], dtype=enhanced.dtype))


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """1-D Gaussian taps, normalized to sum 1; the 2-D window is their outer product."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return g / g.sum()


def _gauss_blur(t: np.ndarray) -> np.ndarray:
    """Separable zero-padded 11x11 Gaussian filter over the spatial axes.

    Symmetric taps + zero padding make this operator self-adjoint, which the
    SSIM gradient relies on.
    """
    g = gaussian_window().astype(t.dtype)
    size = g.shape[0]
    p = size // 2
    h, w, c = t.shape
    padded = np.zeros((h + 2 * p, w, c), dtype=t.dtype)
    padded[p : p + h] = t
    out = np.zeros_like(t)
    for i in range(size):
        out += g[i] * padded[i : i + h]
    padded = np.zeros((h, w + 2 * p, c), dtype=t.dtype)
    padded[:, p : p + w] = out
    out = np.zeros_like(t)
    for i in range(size):
        out += g[i] * padded[:, i : i + w]
    return out


def _ssim_maps(a, b):
    mu_a = _gauss_blur(a)
    mu_b = _gauss_blur(b)
    mu_aa = _gauss_blur(a * a)
    mu_bb = _gauss_blur(b * b)
    mu_ab = _gauss_blur(a * b)
    var_a = mu_aa - mu_a * mu_a
    var_b = mu_bb - mu_b * mu_b
    cov = mu_ab - mu_a * mu_b
    a1 = 2.0 * mu_a * mu_b + SSIM_C1
    a2 = 2.0 * cov + SSIM_C2
    b1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1
    b2 = var_a + var_b + SSIM_C2
    return mu_a, mu_b, a1, a2, b1, b2


def ssim_map(a, b) -> np.ndarray:
    """Per-pixel, per-channel SSIM map (dynamic range 1)."""
    a, b = _check_pair(a, b)
    _, _, a1, a2, b1, b2 = _ssim_maps(a, b)
    return (a1 * a2) / (b1 * b2)


def ssim(a, b) -> float:
    """Mean SSIM over pixels and channels."""
    return float(ssim_map(a, b).mean())


def ssim_grad(a, b) -> np.ndarray:
    """Gradient of mean SSIM with respect to the first argument.

    Chains through mu_a = G*a, mu_aa = G*(a*a), mu_ab = G*(a*b); the blur is
    self-adjoint so each path closes with another blur.
    """
    a, b = _check_pair(a, b)
    mu_a, mu_b, a1, a2, b1, b2 = _ssim_maps(a, b)
    n = a.size
    denom = b1 * b2
    # Partials of S = a1*a2 / (b1*b2) w.r.t. the five blurred moments.
    d_mu_ab = 2.0 * a1 / denom
    d_mu_aa = -(a1 * a2) / (denom * b2)
    d_mu_a = (
        2.0 * mu_b * a2 / denom
        - 2.0 * mu_b * a1 / denom
        - 2.0 * mu_a * a1 * a2 / (denom * b1)
        + 2.0 * mu_a * a1 * a2 / (denom * b2)
    )
    grad = _gauss_blur(d_mu_a / n)
    grad += 2.0 * a * _gauss_blur(d_mu_aa / n)
    grad += b * _gauss_blur(d_mu_ab / n)
    return grad


def loss_ssim(enhanced, truth) -> float:
    return 1.0 - ssim(enhanced, truth)


def loss_ssim_grad(enhanced, truth) -> np.ndarray:
    return -ssim_grad(enhanced, truth)


# ---------------------------------------------------------------------------
# Composite loss
# ---------------------------------------------------------------------------


@dataclass
class LossTerms:
    total: float
    intensity: float
    texture: float
    ssim: float


def loss_terms(enhanced, truth, cfg: LossConfig) -> LossTerms:
    """All enabled loss terms plus their weighted sum; disabled terms read 0."""
    enhanced, truth = _check_pair(enhanced, truth)
    l_int = loss_intensity(enhanced, truth) if cfg.enable_int else 0.0
    l_text = loss_texture(enhanced, truth) if cfg.enable_text else 0.0
    l_ssim = loss_ssim(enhanced, truth) if cfg.enable_ssim else 0.0
    total = cfg.alpha1 * l_int + cfg.alpha2 * l_text + cfg.alpha3 * l_ssim
    return LossTerms(total=total, intensity=l_int, texture=l_text, ssim=l_ssim)


def total_loss(enhanced, truth, cfg: LossConfig) -> float:
    return loss_terms(enhanced, truth, cfg).total


def total_loss_and_grad(enhanced, truth, cfg: LossConfig):
    """(terms, d total / d enhanced) in one call."""
    terms = loss_terms(enhanced, truth, cfg)
    grad = np.zeros_like(np.asarray(enhanced))
    if cfg.enable_int:
        grad = grad + cfg.alpha1 * loss_intensity_grad(enhanced, truth)
    if cfg.enable_text:
        grad = grad + cfg.alpha2 * loss_texture_grad(enhanced, truth)
    if cfg.enable_ssim:
        grad = grad + cfg.alpha3 * loss_ssim_grad(enhanced, truth)
    return terms, grad
