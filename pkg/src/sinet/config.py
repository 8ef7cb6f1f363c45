"""Run configuration: `key = value` files merged over the published defaults."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .losses import LossConfig
from .model import VARIANTS, ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Raised for malformed configuration files."""


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    dataset_dir: Path | None = None
    output_dir: Path = Path(".")
    checkpoint: Path = Path("sinet.ckpt")
    seed: int = 0


def _parse_int(raw, key, lineno):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: key {key!r} expects an integer, got {raw!r}")


def _parse_float(raw, key, lineno):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: key {key!r} expects a number, got {raw!r}")


def _parse_optional_int(raw, key, lineno):
    if raw.lower() == "none":
        return None
    return _parse_int(raw, key, lineno)


def _parse_variant(raw, key, lineno):
    if raw not in VARIANTS:
        raise ConfigError(
            f"line {lineno}: key {key!r} expects one of {', '.join(VARIANTS)}, got {raw!r}"
        )
    return raw


def _parse_loss_setting(raw, key, lineno):
    try:
        return LossConfig.from_setting(raw.upper())
    except ValueError:
        raise ConfigError(
            f"line {lineno}: key {key!r} expects LS1, LS2, or LS3, got {raw!r}"
        )


# key -> (section, attribute, parser)
_SCHEMA = {
    "k_filters": ("model", "k_filters", _parse_int),
    "kernel_size": ("model", "kernel_size", _parse_int),
    "iterations": ("model", "iterations", _parse_int),
    "variant": ("model", "variant", _parse_variant),
    "learning_rate": ("train", "learning_rate", _parse_float),
    "batch_size": ("train", "batch_size", _parse_int),
    "crop": ("train", "crop", _parse_int),
    "epochs": ("train", "epochs", _parse_optional_int),
    "max_steps": ("train", "max_steps", _parse_optional_int),
    "alpha1": ("loss", "alpha1", _parse_float),
    "alpha2": ("loss", "alpha2", _parse_float),
    "alpha3": ("loss", "alpha3", _parse_float),
    "loss_setting": ("loss", None, _parse_loss_setting),
    "dataset_dir": ("run", "dataset_dir", None),
    "output_dir": ("run", "output_dir", None),
    "checkpoint": ("run", "checkpoint", None),
    "seed": ("run", "seed", _parse_int),
}

_PATH_KEYS = {"dataset_dir", "output_dir", "checkpoint"}


def parse_config(path) -> RunConfig:
    """Parse a config file; missing keys fall back to the documented defaults
    (K=16, kernel 11, T=4, lr 1e-4, batch 4, crop 256, alphas 40/40/100).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}")

    model_kw, train_kw, run_kw = {}, {}, {}
    loss_cfg = None
    loss_kw = {}
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"line {lineno}: expected 'key = value', got {stripped!r}"
            )
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(
                f"line {lineno}: key {key!r} already set on line {seen[key]}"
            )
        seen[key] = lineno
        if not raw:
            raise ConfigError(f"line {lineno}: key {key!r} has no value")
        section, attr, parser = _SCHEMA[key]
        value = Path(raw) if key in _PATH_KEYS else parser(raw, key, lineno)
        if section == "model":
            model_kw[attr] = value
        elif section == "train":
            train_kw[attr] = value
        elif section == "loss":
            if attr is None:
                loss_cfg = value
            else:
                loss_kw[attr] = value
        else:
            run_kw[attr] = value

    if "seed" in run_kw:
        train_kw.setdefault("seed", run_kw["seed"])
    try:
        model = ModelConfig(**model_kw)
        train = TrainConfig(**train_kw)
        loss = loss_cfg if loss_cfg is not None else LossConfig()
        for attr, value in loss_kw.items():
            setattr(loss, attr, value)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    return RunConfig(model=model, train=train, loss=loss, **run_kw)
