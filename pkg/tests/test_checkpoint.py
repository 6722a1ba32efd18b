"""Checkpoint format: byte-exact round-trips, self-description, corruption."""

import struct

import numpy as np
import pytest

from gnp.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from gnp.models import Model, ModelSpec


SPEC = ModelSpec(encoder="attentive", head="kvv", width=16, depth=2,
                 rep_dim=8, attn_heads=2, d_g=4)


def test_roundtrip_values_exact(tmp_path):
    model = Model(SPEC)
    values = model.init_params(7)
    path = tmp_path / "model.gnpc"
    save_checkpoint(path, SPEC, values)
    spec2, values2 = load_checkpoint(path)
    assert spec2 == SPEC
    assert sorted(values2) == sorted(values)
    for name, arr in values.items():
        assert values2[name].shape == arr.shape
        assert values2[name].tobytes() == arr.tobytes()


def test_save_is_deterministic(tmp_path):
    values = Model(SPEC).init_params(7)
    p1, p2 = tmp_path / "a.gnpc", tmp_path / "b.gnpc"
    save_checkpoint(p1, SPEC, values)
    save_checkpoint(p2, SPEC, values)
    assert p1.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path):
    path = tmp_path / "m.gnpc"
    save_checkpoint(path, SPEC, {"w": np.arange(6.0).reshape(2, 3)})
    raw = path.read_bytes()
    assert raw[:4] == b"GNPC"
    version, count = struct.unpack_from("<II", raw, 4)
    assert version == 1
    assert count == 1 + len(SPEC.to_meta())


def test_crc_detects_corruption(tmp_path):
    path = tmp_path / "m.gnpc"
    save_checkpoint(path, SPEC, {"w": np.arange(6.0)})
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "m.gnpc"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_rejects_meta_parameter_collision(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "m.gnpc", SPEC, {"meta.width": np.zeros(1)})
