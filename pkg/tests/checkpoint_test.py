import struct

import numpy as np
import pytest

from hpgn.checkpoint import MAGIC, Checkpoint
from hpgn.data import ingest
from hpgn.errors import CheckpointError
from hpgn.tensor import Tensor, no_grad
from hpgn.training import model_from_checkpoint, train


@pytest.fixture
def trained(make_corpus, tiny_config):
    return train(tiny_config.model_copy(update={"steps": 2}), ingest(make_corpus(count=2)))


class TestCheckpoint:
    def test_byte_identical_round_trip(self, trained, tmp_path):
        """save -> load -> save reproduces every byte"""
        first = tmp_path / "a.ckpt"
        second = tmp_path / "b.ckpt"
        trained.save(first)
        Checkpoint.load(first).save(second)
        assert first.read_bytes() == second.read_bytes()

    def test_contents(self, trained):
        restored = Checkpoint.from_bytes(trained.to_bytes())
        assert restored.step == 2 and restored.adam_t == 2
        assert restored.config == trained.config
        assert list(restored.params) == list(trained.params)
        assert set(restored.optimizer) == {f"adam.{k}.{n}" for k in "mv" for n in trained.params}
        assert restored.rng_state == trained.rng_state

    def test_forward_bit_exact_after_load(self, trained, tmp_path):
        path = tmp_path / "model.ckpt"
        trained.save(path)
        x = Tensor(np.random.default_rng(0).uniform(0, 0.3, (1, 3, 16, 16)))
        with no_grad():
            before = model_from_checkpoint(trained)(x, 60).enhanced.data
            after = model_from_checkpoint(Checkpoint.load(path))(x, 60).enhanced.data
        assert before.tobytes() == after.tobytes()

    def test_version_mismatch(self, trained):
        payload = bytearray(trained.to_bytes())
        payload[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 99)
        with pytest.raises(CheckpointError, match="version 99"):
            Checkpoint.from_bytes(bytes(payload))

    def test_bad_magic(self):
        with pytest.raises(CheckpointError, match="magic"):
            Checkpoint.from_bytes(b"NOTACKPT" + bytes(16))

    def test_truncated_and_trailing(self, trained):
        payload = trained.to_bytes()
        with pytest.raises(CheckpointError, match="truncated"):
            Checkpoint.from_bytes(payload[:-3])
        with pytest.raises(CheckpointError, match="trailing"):
            Checkpoint.from_bytes(payload + b"\0")

    def test_tampered_config(self, trained):
        payload = trained.to_bytes().replace(b'"seed":3', b'"seed":4')
        with pytest.raises(CheckpointError, match="hash"):
            Checkpoint.from_bytes(payload)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            Checkpoint.load(tmp_path / "nope.ckpt")
