import struct

import numpy as np
import pytest

from spheregaze.checkpoint import MAGIC, encode_checkpoint, load_checkpoint, save_checkpoint
from spheregaze.config import LARGE
from spheregaze.errors import CheckpointError, ConfigError
from spheregaze.model import build_model


@pytest.fixture
def saved(tmp_path, desk):
    model = build_model("full", desk.model, seed=3)
    path = tmp_path / "model.gzp"
    save_checkpoint(model, desk, path)
    return model, path


class TestRoundtrip:
    def test_save_load_save_is_byte_identical(self, tmp_path, saved):
        _, path = saved
        ckpt = load_checkpoint(path)
        again = tmp_path / "again.gzp"
        save_checkpoint(ckpt.model, ckpt.config, again)
        assert again.read_bytes() == path.read_bytes()

    def test_parameters_and_config_survive(self, desk, saved):
        model, path = saved
        ckpt = load_checkpoint(path)
        assert ckpt.config == desk
        assert ckpt.model.kind is model.kind
        original, loaded = model.params.named(), ckpt.model.params.named()
        assert sorted(original) == sorted(loaded)
        assert all(np.array_equal(original[k].data, loaded[k].data) for k in original)

    @pytest.mark.parametrize("kind", ["temporal_only", "center_fixed"])
    def test_ablation_kinds(self, tmp_path, desk, kind):
        path = tmp_path / f"{kind}.gzp"
        save_checkpoint(build_model(kind, desk.model), desk, path)
        assert load_checkpoint(path).model.kind.value == kind

    def test_config_must_describe_the_model(self, desk):
        with pytest.raises(ConfigError):
            encode_checkpoint(build_model("full", desk.model), LARGE)


class TestCorruption:
    def test_bad_magic(self, saved):
        _, path = saved
        path.write_bytes(b"XXXX" + path.read_bytes()[4:])
        with pytest.raises(CheckpointError, match="bad magic"):
            load_checkpoint(path)

    def test_unknown_version(self, saved):
        _, path = saved
        data = path.read_bytes()
        path.write_bytes(MAGIC + struct.pack("<I", 9) + data[8:])
        with pytest.raises(CheckpointError, match="version 9"):
            load_checkpoint(path)

    def test_truncated(self, saved):
        _, path = saved
        path.write_bytes(path.read_bytes()[:-40])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, saved):
        _, path = saved
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "absent.gzp")

    def test_wrong_architecture_names_first_array(self, saved):
        _, path = saved
        with pytest.raises(CheckpointError, match=r"shape mismatch for 'fusion\.comb_b'"):
            load_checkpoint(path, expected=LARGE.model)

    def test_checkpoint_errors_are_data_errors(self, saved):
        _, path = saved
        path.write_bytes(b"")
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(path)
        assert info.value.exit_code == 2
