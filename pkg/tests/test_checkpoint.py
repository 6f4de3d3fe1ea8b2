import numpy as np
import pytest

from lumen.checkpoint import load_checkpoint, save_checkpoint


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {
        "enc.w": rng.standard_normal((7, 5)),
        "enc.b": rng.standard_normal(5) * 1e-30,
        "head.w": np.array([np.pi, -0.0, 1e308]),
    }
    meta = {"epoch": 3, "note": "unit"}
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, meta)
    loaded, got_meta = load_checkpoint(path)
    assert got_meta == meta
    assert list(loaded) == list(params)
    for k in params:
        assert loaded[k].dtype == np.float64
        np.testing.assert_array_equal(loaded[k], params[k])


def test_identical_saves_identical_bytes(tmp_path):
    params = {"w": np.arange(6, dtype=np.float64).reshape(2, 3)}
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, params, {"k": 1})
    save_checkpoint(b, params, {"k": 1})
    assert a.read_bytes() == b.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(ValueError, match="bad magic"):
        load_checkpoint(path)
