"""Command-line interface: train / enhance / eval / dump-features / flops / verify."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointFormatError, load_checkpoint
from .config import ConfigError, parse_config
from .dataset import DatasetIndex, RAW_SUBDIR
from .imageio import (
    ImageFormatError,
    SUPPORTED_SUFFIXES,
    load_image,
    save_grayscale,
    save_image,
)
from .metrics import evaluate_pairs, flops_estimate
from .model import sinet_forward
from .training import train
from .verify import run_all_suites

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _default_threads() -> int:
    return os.cpu_count() or 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinet",
        description=(
            "Channel-specific sparse-coding network for underwater image "
            "enhancement: training, inference, metrics, and self-verification."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", required=True, help="key = value config file")

    p_enh = sub.add_parser("enhance", help="enhance images with a trained model")
    p_enh.add_argument("--checkpoint", required=True)
    p_enh.add_argument("--input", required=True, help="image file or directory")
    p_enh.add_argument("--output", required=True, help="output directory")
    p_enh.add_argument("--threads", type=int, default=_default_threads())

    p_eval = sub.add_parser("eval", help="PSNR/SSIM over a paired dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True, help="dataset root (raw/ + reference/)")
    p_eval.add_argument("--output", default=".", help="directory for metrics.csv")
    p_eval.add_argument("--threads", type=int, default=_default_threads())

    p_dump = sub.add_parser(
        "dump-features", help="write per-iteration sparse code planes as PNGs"
    )
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.add_argument("--input", required=True, help="one image file")
    p_dump.add_argument("--output", required=True, help="output directory")

    p_flops = sub.add_parser("flops", help="analytic MAC/FLOP count for one forward pass")
    p_flops.add_argument("--config", help="optional config file (defaults otherwise)")
    p_flops.add_argument("--height", type=int, default=320)
    p_flops.add_argument("--width", type=int, default=640)

    sub.add_parser("verify", help="run the built-in correctness suites")
    return parser


def _input_files(path: Path) -> list:
    if path.is_file():
        return [path]
    if path.is_dir():
        root = path / RAW_SUBDIR if (path / RAW_SUBDIR).is_dir() else path
        files = [
            p
            for p in sorted(root.iterdir())
            if p.is_file() and p.suffix.lower() in SUPPORTED_SUFFIXES
        ]
        if not files:
            raise ValueError(f"no supported images ({', '.join(SUPPORTED_SUFFIXES)}) in {root}")
        return files
    raise ValueError(f"input path does not exist: {path}")


def _cmd_train(args) -> int:
    run = parse_config(args.config)
    if run.dataset_dir is None:
        raise ValueError(f"{args.config}: config must set dataset_dir for training")
    if not Path(run.dataset_dir).is_dir():
        raise ValueError(f"dataset_dir does not exist: {run.dataset_dir}")
    out_dir = Path(run.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = run.checkpoint
    if not Path(checkpoint).is_absolute():
        checkpoint = out_dir / checkpoint
    log_path = out_dir / "train.log"
    with open(log_path, "w", encoding="utf-8") as log_file:
        class Tee:
            def write(self, text):
                sys.stdout.write(text)
                log_file.write(text)

        train(
            model_cfg=run.model,
            train_cfg=run.train,
            loss_cfg=run.loss,
            dataset_dir=run.dataset_dir,
            out_checkpoint=checkpoint,
            log_stream=Tee(),
        )
    print(f"checkpoint written to {checkpoint}")
    print(f"log written to {log_path}")
    return EXIT_OK


def _cmd_enhance(args) -> int:
    params = load_checkpoint(args.checkpoint)
    files = _input_files(Path(args.input))
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)

    def enhance_one(path: Path) -> Path:
        image = load_image(path)
        enhanced, _, _ = sinet_forward(params, image, collect_trace=False)
        target = out_dir / (path.stem + ".png")
        save_image(np.clip(enhanced, 0.0, 1.0), target)
        return target

    threads = max(1, args.threads)
    if threads == 1 or len(files) == 1:
        outputs = [enhance_one(p) for p in files]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(enhance_one, files))
    for path in outputs:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    index = DatasetIndex.scan(args.data, require_reference=True)
    report = evaluate_pairs(params, index)
    for line in report.warnings:
        print(line, file=sys.stderr)
    for line in report.summary_lines():
        print(line)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "metrics.csv"
    csv_path.write_text("\n".join(report.csv_lines()) + "\n", encoding="utf-8")
    print(f"table written to {csv_path}")
    return EXIT_OK


def _normalize_plane(plane: np.ndarray) -> np.ndarray:
    lo = float(plane.min())
    hi = float(plane.max())
    if hi == lo:
        return np.full(plane.shape, 128.0 / 255.0)
    return (plane - lo) / (hi - lo)


def _cmd_dump_features(args) -> int:
    params = load_checkpoint(args.checkpoint)
    source = Path(args.input)
    if not source.is_file():
        raise ValueError(f"input image does not exist: {source}")
    image = load_image(source)
    _, _, traces = sinet_forward(params, image, collect_trace=True)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for i, trace in enumerate(traces):
        for k, code in enumerate(trace):
            for j in range(code.shape[2]):
                plane = _normalize_plane(np.asarray(code[:, :, j], dtype=np.float64))
                save_grayscale(plane, out_dir / f"branch{i}_iter{k}_filter{j}.png")
                count += 1
    print(f"wrote {count} feature maps to {out_dir}")
    return EXIT_OK


def _cmd_flops(args) -> int:
    if args.config:
        model_cfg = parse_config(args.config).model
    else:
        from .model import ModelConfig

        model_cfg = ModelConfig()
    if args.height < 1 or args.width < 1:
        raise ValueError(f"resolution must be positive, got {args.height}x{args.width}")
    report = flops_estimate(model_cfg, args.height, args.width)
    for line in report.lines():
        print(line)
    return EXIT_OK


def _cmd_verify(_args) -> int:
    results = run_all_suites()
    for result in results:
        print(result.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


_HANDLERS = {
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "eval": _cmd_eval,
    "dump-features": _cmd_dump_features,
    "flops": _cmd_flops,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (
        ConfigError,
        CheckpointFormatError,
        ImageFormatError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
