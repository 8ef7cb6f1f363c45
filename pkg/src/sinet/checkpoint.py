"""Binary parameter checkpoints.

Layout (all integers little-endian):

    bytes 0..7    magic ``SINETV01``
    bytes 8..27   five u32 fields: variant code, filter count K, kernel size,
                  iteration count T, precision code (0 = float32, 1 = float64)
    bytes 28..    parameter payload, concatenated in canonical parameter order

The payload holds each array's raw little-endian values with no per-array
framing; shapes are implied by the header. Files are rejected with a
``CheckpointFormatError`` naming the byte offset of the problem.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import (
    VARIANTS,
    ModelConfig,
    SinetParams,
    init_params,
    named_parameters,
    replace_parameters,
)

MAGIC = b"SINETV01"
_HEADER_FIELDS = 5
_HEADER_SIZE = len(MAGIC) + 4 * _HEADER_FIELDS

_PRECISION_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_PRECISION_DTYPES = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}


class CheckpointFormatError(ValueError):
    """Raised when checkpoint bytes do not match the documented layout."""


def variant_code(variant: str) -> int:
    return VARIANTS.index(variant)


def save_checkpoint(params: SinetParams, path, dtype=np.float32) -> None:
    """Write ``params`` to ``path``. Values are cast to ``dtype`` (default f32)."""
    dtype = np.dtype(dtype)
    if dtype not in _PRECISION_CODES:
        raise ValueError(f"unsupported checkpoint dtype {dtype}")
    cfg = params.config
    header = np.array(
        [
            variant_code(cfg.variant),
            cfg.k_filters,
            cfg.kernel_size,
            cfg.iterations,
            _PRECISION_CODES[dtype],
        ],
        dtype="<u4",
    )
    chunks = [MAGIC, header.tobytes()]
    for _, value in named_parameters(params):
        chunks.append(np.ascontiguousarray(value, dtype=dtype.newbyteorder("<")).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> SinetParams:
    """Read a checkpoint back into a parameter set."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC):
        raise CheckpointFormatError(
            f"{path}: file ends at byte {len(blob)}, expected {len(MAGIC)} magic bytes"
        )
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(
            f"{path}: bad magic at byte 0: {blob[:len(MAGIC)]!r} (expected {MAGIC!r})"
        )
    if len(blob) < _HEADER_SIZE:
        raise CheckpointFormatError(
            f"{path}: header truncated at byte {len(blob)}, expected {_HEADER_SIZE} bytes"
        )
    fields = np.frombuffer(blob, dtype="<u4", count=_HEADER_FIELDS, offset=len(MAGIC))
    code, k_filters, kernel_size, iterations, precision = (int(f) for f in fields)
    if code >= len(VARIANTS):
        raise CheckpointFormatError(
            f"{path}: unknown variant code {code} at byte {len(MAGIC)}"
        )
    if precision not in _PRECISION_DTYPES:
        raise CheckpointFormatError(
            f"{path}: unknown precision code {precision} at byte {len(MAGIC) + 16}"
        )
    dtype = _PRECISION_DTYPES[precision]
    try:
        cfg = ModelConfig(
            k_filters=k_filters,
            kernel_size=kernel_size,
            iterations=iterations,
            variant=VARIANTS[code],
        )
    except ValueError as exc:
        raise CheckpointFormatError(f"{path}: invalid header fields: {exc}") from exc

    template = init_params(cfg, seed=0, dtype=dtype)
    values = []
    offset = _HEADER_SIZE
    for name, value in named_parameters(template):
        nbytes = value.size * dtype.itemsize
        if offset + nbytes > len(blob):
            raise CheckpointFormatError(
                f"{path}: payload truncated at byte {len(blob)} while reading "
                f"{name} (needs bytes {offset}..{offset + nbytes})"
            )
        flat = np.frombuffer(
            blob, dtype=dtype.newbyteorder("<"), count=value.size, offset=offset
        )
        values.append(flat.astype(dtype, copy=True).reshape(value.shape))
        offset += nbytes
    if offset != len(blob):
        raise CheckpointFormatError(
            f"{path}: {len(blob) - offset} trailing bytes after payload "
            f"(payload ends at byte {offset})"
        )
    return replace_parameters(template, values)
