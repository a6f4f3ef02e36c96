import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from riemcl import checkpoint as C
from riemcl.distill import ModelConfig, init_student


def _state(seed=0):
    s = init_student(ModelConfig(layer_dims=[3, 4, 4]), seed)
    s.kappa = -0.75
    return s


class TestCodec:
    def test_roundtrip(self):
        params = {"b": np.arange(3.0), "a": np.eye(2), "scalar": np.array(2.5)}
        out, meta = C.decode_checkpoint(C.encode_checkpoint(params, {"kappa": 1.0}))
        assert meta["kappa"] == 1.0 and meta["n_tensors"] == 3
        for k, v in params.items():
            np.testing.assert_array_equal(out[k], v)
            assert out[k].shape == v.shape

    @settings(max_examples=40, deadline=None)
    @given(arr=hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4)))
    def test_roundtrip_bitwise(self, arr):
        out, _ = C.decode_checkpoint(C.encode_checkpoint({"x": arr}, {}))
        assert out["x"].shape == arr.shape and out["x"].tobytes() == arr.tobytes()

    def test_header(self):
        data = C.encode_checkpoint({}, {"kappa": 0.5})
        assert data[:8] == b"RIEMCLCK"
        assert struct.unpack_from("<I", data, 8)[0] == C.VERSION

    def test_tensor_order_independent_of_insertion(self):
        a = C.encode_checkpoint({"x": np.ones(2), "y": np.zeros(1)}, {})
        b = C.encode_checkpoint({"y": np.zeros(1), "x": np.ones(2)}, {})
        assert a == b

    def test_flipped_byte(self):
        data = bytearray(C.encode_checkpoint({"x": np.ones(4)}, {}))
        data[len(data) // 2] ^= 0x01
        with pytest.raises(C.CheckpointError, match="checksum"):
            C.decode_checkpoint(bytes(data))

    def test_bad_magic(self):
        data = C.encode_checkpoint({"x": np.ones(1)}, {})
        with pytest.raises(C.CheckpointError, match="magic"):
            C.decode_checkpoint(b"NOTACKPT" + data[8:])

    def test_truncated(self):
        with pytest.raises(C.CheckpointError):
            C.decode_checkpoint(C.encode_checkpoint({"x": np.ones(4)}, {})[:-9])

    def test_future_version(self):
        data = bytearray(C.encode_checkpoint({}, {})[:-4])
        data[8:12] = struct.pack("<I", 99)
        data += struct.pack("<I", __import__("zlib").crc32(bytes(data)))
        with pytest.raises(C.CheckpointError, match="version"):
            C.decode_checkpoint(bytes(data))


class TestFiles:
    def test_save_load(self, tmp_path):
        s = _state()
        C.save_checkpoint(tmp_path / "t1.ckpt", s, task_index=1, seed=3, config_hash="abc")
        loaded, meta = C.load_checkpoint(tmp_path / "t1.ckpt")
        assert loaded.kappa == -0.75 and loaded.model == s.model
        assert (meta["task_index"], meta["seed"], meta["config_hash"]) == (1, 3, "abc")
        assert loaded.params.keys() == s.params.keys()
        for k in s.params:
            np.testing.assert_array_equal(loaded.params[k], s.params[k])

    def test_same_state_same_bytes(self, tmp_path):
        C.save_checkpoint(tmp_path / "a.ckpt", _state(1), 1, 1)
        C.save_checkpoint(tmp_path / "b.ckpt", _state(1), 1, 1)
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_overwrite_leaves_no_temp(self, tmp_path):
        path = tmp_path / "sub" / "x.ckpt"
        C.save_checkpoint(path, _state(0), 1, 0)
        C.save_checkpoint(path, _state(1), 2, 0)
        assert [p.name for p in path.parent.iterdir()] == ["x.ckpt"]
        assert C.load_checkpoint(path)[1]["task_index"] == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(C.CheckpointError):
            C.load_checkpoint(tmp_path / "nope.ckpt")

    def test_bad_model_block(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(C.encode_checkpoint({}, {"kappa": 1.0, "model": {"curvature_mode": "bogus"}}))
        with pytest.raises(C.CheckpointError, match="model"):
            C.load_checkpoint(path)
