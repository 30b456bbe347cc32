import struct

import numpy as np
import pytest

from edgepool.checkpoint import (
    MAGIC,
    CheckpointError,
    load_checkpoint,
    load_params_into,
    read_checkpoint,
    save_checkpoint,
)
from edgepool.models import ClassifierSpec, build_classifier


@pytest.fixture
def model():
    return build_classifier(ClassifierSpec(pooling="lgca", widths=(8, 16), se_reduction=4), seed=3,
                            dtype=np.float32)


def test_round_trip_bit_identical(tmp_path, model):
    path = save_checkpoint(model, tmp_path / "m.ckpt", step=42)
    loaded, ckpt = load_checkpoint(path)
    assert ckpt.step == 42
    assert ckpt.spec_hash == model.spec.spec_hash()
    assert loaded.spec == model.spec
    for name, p in model.params.items():
        assert loaded.params[name].data.tobytes() == p.data.tobytes()


def test_layout(tmp_path, model):
    buf = save_checkpoint(model, tmp_path / "m.ckpt").read_bytes()
    assert buf[:8] == MAGIC
    assert struct.unpack("<II", buf[8:16]) == (1, len(model.params))
    ckpt = read_checkpoint(tmp_path / "m.ckpt")
    names = [n for n, _, _ in ckpt.manifest]
    assert names == list(model.params)
    total = 4 * sum(p.data.size for p in model.params.values())
    offsets = [o for _, _, o in ckpt.manifest]
    assert offsets[0] == 0 and offsets == sorted(offsets)
    # blob starts 8-byte aligned and is followed only by the checksum
    blob_start = len(buf) - 4 - total
    assert blob_start % 8 == 0
    assert struct.unpack("<Q", buf[blob_start - 8 : blob_start])[0] == total


def test_float64_model_saved_as_float32(tmp_path):
    m64 = build_classifier(ClassifierSpec(widths=(4, 8)), seed=0)
    save_checkpoint(m64, tmp_path / "m.ckpt")
    ckpt = read_checkpoint(tmp_path / "m.ckpt")
    for name, p in m64.params.items():
        assert ckpt.params[name].dtype == np.float32
        np.testing.assert_array_equal(ckpt.params[name], p.data.astype(np.float32))


def test_corrupted_byte_rejected(tmp_path, model):
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    buf = bytearray(path.read_bytes())
    buf[len(buf) // 2] ^= 0xFF
    path.write_bytes(bytes(buf))
    with pytest.raises(CheckpointError, match="checksum"):
        read_checkpoint(path)


def test_truncation_rejected(tmp_path, model):
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    buf = path.read_bytes()
    path.write_bytes(buf[:-100])
    with pytest.raises(CheckpointError):
        read_checkpoint(path)
    path.write_bytes(buf[:12])
    with pytest.raises(CheckpointError):
        read_checkpoint(path)


def test_version_and_magic_rejected(tmp_path, model):
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    buf = bytearray(path.read_bytes())
    buf[8:12] = struct.pack("<I", 99)
    path.write_bytes(bytes(buf))
    with pytest.raises(CheckpointError, match="version 99"):
        read_checkpoint(path)
    path.write_bytes(b"NOTACKPT" + bytes(buf[8:]))
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(path)


def test_hash_mismatch_rejected(tmp_path, model):
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    with pytest.raises(CheckpointError, match="does not match"):
        load_checkpoint(path, expect_hash=ClassifierSpec().spec_hash())


def test_lookup_by_name_ignores_order(model):
    params = {n: p.data.copy() + 1 for n, p in reversed(list(model.params.items()))}
    load_params_into(model, params)
    for n, p in model.params.items():
        np.testing.assert_array_equal(p.data, params[n])


def test_shape_and_name_mismatch_rejected(model):
    params = {n: p.data.copy() for n, p in model.params.items()}
    params["head.b"] = np.zeros(5, np.float32)
    with pytest.raises(CheckpointError, match="head.b"):
        load_params_into(model, params)
    del params["head.b"]
    with pytest.raises(CheckpointError, match="missing"):
        load_params_into(model, params)
