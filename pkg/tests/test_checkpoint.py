import numpy as np
import pytest

from sinet.checkpoint import (
    MAGIC,
    CheckpointFormatError,
    load_checkpoint,
    save_checkpoint,
    variant_code,
)
from sinet.model import (
    ModelConfig,
    VARIANTS,
    init_params,
    named_parameters,
    sinet_forward,
)

SMALL = dict(k_filters=4, kernel_size=3, iterations=2)


def test_variant_codes_are_stable():
    assert [variant_code(v) for v in VARIANTS] == [0, 1, 2, 3]
    assert VARIANTS == ("full", "ds1_plain_convs", "ds2_tied_lcsc", "ds3_single_branch")


def test_header_bytes(tmp_path):
    params = init_params(ModelConfig(variant="ds2_tied_lcsc", **SMALL), seed=1)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    assert blob[:8] == MAGIC == b"SINETV01"
    fields = np.frombuffer(blob, dtype="<u4", count=5, offset=8)
    assert list(fields) == [2, SMALL["k_filters"], SMALL["kernel_size"], SMALL["iterations"], 0]
    payload_values = sum(v.size for _, v in named_parameters(params))
    assert len(blob) == 28 + 4 * payload_values


def test_round_trip_bytes_identical_all_variants(tmp_path):
    for variant in VARIANTS:
        params = init_params(ModelConfig(variant=variant, **SMALL), seed=2)
        first = tmp_path / f"{variant}.ckpt"
        second = tmp_path / f"{variant}2.ckpt"
        save_checkpoint(params, first)
        loaded = load_checkpoint(first)
        save_checkpoint(loaded, second)
        assert first.read_bytes() == second.read_bytes(), variant
        assert loaded.config == params.config


def test_round_trip_preserves_forward(tmp_path):
    rng = np.random.default_rng(3)
    image = rng.uniform(0, 1, size=(6, 6, 3))
    params = init_params(ModelConfig(**SMALL), seed=4)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    a, _, _ = sinet_forward(params, image)
    b, _, _ = sinet_forward(loaded, image)
    np.testing.assert_array_equal(a, b)


def test_float64_round_trip_exact(tmp_path):
    params = init_params(ModelConfig(**SMALL), seed=5, dtype=np.float64)
    path = tmp_path / "m64.ckpt"
    save_checkpoint(params, path, dtype=np.float64)
    blob = path.read_bytes()
    assert np.frombuffer(blob, dtype="<u4", count=5, offset=8)[4] == 1
    loaded = load_checkpoint(path)
    assert loaded.dtype == np.float64
    for (na, va), (nb, vb) in zip(named_parameters(params), named_parameters(loaded)):
        assert na == nb
        np.testing.assert_array_equal(np.asarray(va, dtype=np.float64), vb, err_msg=na)


def test_unsupported_save_dtype(tmp_path):
    params = init_params(ModelConfig(**SMALL), seed=0)
    with pytest.raises(ValueError):
        save_checkpoint(params, tmp_path / "m.ckpt", dtype=np.float16)


def test_bad_magic(tmp_path):
    params = init_params(ModelConfig(**SMALL), seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    blob = bytearray(path.read_bytes())
    blob[:8] = b"NOTSINET"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointFormatError, match="byte 0"):
        load_checkpoint(path)


def test_empty_and_truncated_header(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"")
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)
    params = init_params(ModelConfig(**SMALL), seed=0)
    save_checkpoint(params, path)
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(CheckpointFormatError, match="header truncated"):
        load_checkpoint(path)


def test_truncated_payload_names_parameter(tmp_path):
    params = init_params(ModelConfig(**SMALL), seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 10])
    with pytest.raises(CheckpointFormatError, match="truncated at byte"):
        load_checkpoint(path)
    # cutting inside the very first array names it
    path.write_bytes(blob[:30])
    with pytest.raises(CheckpointFormatError, match="branch0.iter0.w_in"):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    params = init_params(ModelConfig(**SMALL), seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    path.write_bytes(path.read_bytes() + b"\x00\x00\x00")
    with pytest.raises(CheckpointFormatError, match="trailing"):
        load_checkpoint(path)


def test_unknown_variant_and_precision_codes(tmp_path):
    params = init_params(ModelConfig(**SMALL), seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    blob = bytearray(path.read_bytes())

    bad = blob.copy()
    bad[8:12] = np.array([9], dtype="<u4").tobytes()
    path.write_bytes(bytes(bad))
    with pytest.raises(CheckpointFormatError, match="variant code 9"):
        load_checkpoint(path)

    bad = blob.copy()
    bad[24:28] = np.array([7], dtype="<u4").tobytes()
    path.write_bytes(bytes(bad))
    with pytest.raises(CheckpointFormatError, match="precision code 7"):
        load_checkpoint(path)


def test_invalid_header_fields(tmp_path):
    params = init_params(ModelConfig(**SMALL), seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    blob = bytearray(path.read_bytes())
    blob[16:20] = np.array([4], dtype="<u4").tobytes()  # even kernel size
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointFormatError, match="invalid header"):
        load_checkpoint(path)


def test_checkpoint_error_is_value_error():
    assert issubclass(CheckpointFormatError, ValueError)
