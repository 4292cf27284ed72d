"""Tests for checkpoint files."""
import struct

import numpy as np
import pytest

from pbca_forecast import checkpoint
from pbca_forecast.const import CHECKPOINT_CONFIG_NAME, CHECKPOINT_MAGIC
from pbca_forecast.exceptions import ConfigError
from pbca_forecast.model import forward


class TestRoundTrip:
    """Test save followed by load."""

    @pytest.mark.parametrize("variant", ["A", "pi1", "pi3", "multi-pi2"])
    def test_bit_identical(self, make_model, tmp_path, variant):
        """Test that parameters and configuration survive exactly."""
        model = make_model(variant, K=2, target=1, learning_rate=3e-4, columns=("a", "b"))
        path = tmp_path / "model.ckpt"
        checkpoint.save(model, path)
        loaded = checkpoint.load(path)
        assert loaded.config == model.config
        assert list(loaded.params) == list(model.params)
        for name, value in model.params.items():
            assert loaded.params[name].tobytes() == value.tobytes()

    def test_same_forecast(self, make_model, tmp_path, rng):
        """Test that a loaded model forecasts identically."""
        model = make_model("pi2")
        path = tmp_path / "model.ckpt"
        checkpoint.save(model, path)
        window = rng.normal(size=(8, 1))
        assert np.array_equal(forward(checkpoint.load(path), window).predictions, forward(model, window).predictions)

    def test_layout(self, make_model, tmp_path):
        """Test the header and the leading configuration array."""
        model = make_model("A")
        path = tmp_path / "model.ckpt"
        checkpoint.save(model, path)
        payload = path.read_bytes()
        assert payload.startswith(CHECKPOINT_MAGIC)
        offset = len(CHECKPOINT_MAGIC)
        (count,) = struct.unpack_from("<I", payload, offset)
        assert count == len(model.params) + 1
        (name_len,) = struct.unpack_from("<H", payload, offset + 4)
        name = payload[offset + 6 : offset + 6 + name_len].decode("utf-8")
        assert name == CHECKPOINT_CONFIG_NAME


class TestArrays:
    """Test the named-array codec."""

    def test_encode_decode(self):
        """Test shapes and values of mixed-rank arrays."""
        arrays = {"x": np.arange(6.0).reshape(2, 3), "y": np.array([-0.5]), "s": np.array(2.5)}
        decoded = checkpoint.decode_arrays(checkpoint.encode_arrays(arrays))
        assert list(decoded) == ["x", "y", "s"]
        assert decoded["x"].shape == (2, 3) and decoded["s"].shape == ()
        assert decoded["x"].tolist() == arrays["x"].tolist()
        assert float(decoded["s"]) == 2.5

    def test_bad_magic(self):
        """Test that foreign files are refused."""
        with pytest.raises(ConfigError, match="magic"):
            checkpoint.decode_arrays(b"NOTPBCA" + bytes(10))

    def test_truncated(self):
        """Test that a cut-off payload is refused."""
        payload = checkpoint.encode_arrays({"x": np.ones((4, 4))})
        with pytest.raises(ConfigError, match="truncated"):
            checkpoint.decode_arrays(payload[:-3])

    def test_trailing_bytes(self):
        """Test that extra bytes are refused."""
        payload = checkpoint.encode_arrays({"x": np.ones(2)})
        with pytest.raises(ConfigError, match="trailing"):
            checkpoint.decode_arrays(payload + b"\x00")

    def test_repeated_name(self):
        """Test that a name may appear once."""
        one = checkpoint.encode_arrays({"x": np.ones(1)})
        body = one[len(CHECKPOINT_MAGIC) + 4 :]
        payload = CHECKPOINT_MAGIC + struct.pack("<I", 2) + body + body
        with pytest.raises(ConfigError, match="repeats"):
            checkpoint.decode_arrays(payload)


class TestLoad:
    """Test load failures."""

    def test_missing_file(self, tmp_path):
        """Test an unreadable path."""
        with pytest.raises(ConfigError):
            checkpoint.load(tmp_path / "absent.ckpt")

    def test_without_config(self, tmp_path):
        """Test that the configuration array must come first."""
        path = tmp_path / "bare.ckpt"
        path.write_bytes(checkpoint.encode_arrays({"out.b": np.zeros((1, 1))}))
        with pytest.raises(ConfigError, match=CHECKPOINT_CONFIG_NAME):
            checkpoint.load(path)

    def test_parameters_do_not_match_config(self, make_model, tmp_path):
        """Test that a dropped parameter is reported as a bad checkpoint."""
        model = make_model("pi1")
        path = tmp_path / "model.ckpt"
        checkpoint.save(model, path)
        loaded = checkpoint.decode_arrays(path.read_bytes())
        del loaded["att0.pi"]
        path.write_bytes(checkpoint.encode_arrays(loaded))
        with pytest.raises(ConfigError, match="does not match"):
            checkpoint.load(path)
