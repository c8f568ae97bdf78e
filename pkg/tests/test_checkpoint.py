import numpy as np
import numpy.testing as npt
import pytest

from eqprop import FormatError
from eqprop.checkpoint import MAGIC, expected_size, load_checkpoint, save_checkpoint
from eqprop.training import init_params


@pytest.fixture
def params():
    return init_params((6, 5, 4), rng_seed=11)


class TestRoundTrip:
    def test_save_load_save_is_bitwise_identity(self, params, tmp_path):
        path = tmp_path / "a.eqp"
        save_checkpoint(path, params, epoch=3, rng_seed=99)
        blob = path.read_bytes()
        ckpt = load_checkpoint(path)
        assert ckpt.epoch == 3
        assert ckpt.rng_seed == 99
        assert ckpt.precision == "f64"
        for a, b in zip(ckpt.params.weights, params.weights):
            npt.assert_array_equal(a, b)
        for a, b in zip(ckpt.params.biases, params.biases):
            npt.assert_array_equal(a, b)
        again = tmp_path / "b.eqp"
        save_checkpoint(again, ckpt.params, ckpt.epoch, ckpt.rng_seed)
        assert again.read_bytes() == blob

    def test_f32_round_trip(self, params, tmp_path):
        path = tmp_path / "a.eqp"
        f32 = params.astype(np.float32)
        save_checkpoint(path, f32, epoch=0, rng_seed=0)
        ckpt = load_checkpoint(path)
        assert ckpt.precision == "f32"
        assert ckpt.params.dtype == np.float32
        for a, b in zip(ckpt.params.weights, f32.weights):
            npt.assert_array_equal(a, b)


class TestFormat:
    def test_file_size_matches_arithmetic(self, params, tmp_path):
        path = tmp_path / "a.eqp"
        save_checkpoint(path, params, epoch=0, rng_seed=0)
        n_values = 6 * 5 + 5 + 5 * 4 + 4
        want = 4 + 1 + 4 + 4 * 3 + 8 * n_values + 8 + 32
        assert path.stat().st_size == want
        assert expected_size((6, 5, 4), "f64") == want

    def test_mnist_f64_payload_size(self):
        values = 784 * 500 + 500 + 500 * 10 + 10
        assert expected_size((784, 500, 10), "f64") == 4 + 1 + 4 + 12 + 8 * values + 40

    def test_bad_magic(self, params, tmp_path):
        path = tmp_path / "a.eqp"
        save_checkpoint(path, params, epoch=0, rng_seed=0)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"EQP9"
        bad = tmp_path / "bad.eqp"
        bad.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="EQP9"):
            load_checkpoint(bad)

    def test_truncation(self, params, tmp_path):
        path = tmp_path / "a.eqp"
        save_checkpoint(path, params, epoch=0, rng_seed=0)
        bad = tmp_path / "bad.eqp"
        bad.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FormatError, match="length|truncated"):
            load_checkpoint(bad)

    def test_trailing_garbage(self, params, tmp_path):
        path = tmp_path / "a.eqp"
        save_checkpoint(path, params, epoch=0, rng_seed=0)
        bad = tmp_path / "bad.eqp"
        bad.write_bytes(path.read_bytes() + b"\x00\x01")
        with pytest.raises(FormatError):
            load_checkpoint(bad)

    def test_bad_precision_flag(self, params, tmp_path):
        path = tmp_path / "a.eqp"
        save_checkpoint(path, params, epoch=0, rng_seed=0)
        blob = bytearray(path.read_bytes())
        blob[4] = 7
        bad = tmp_path / "bad.eqp"
        bad.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="precision"):
            load_checkpoint(bad)

    def test_magic_constant(self):
        assert MAGIC == b"EQP1"
