"""Checkpoint container: round-trips, atomicity, metadata validation."""

import os

import numpy as np
import pytest

from lmner.checkpoint import Checkpoint, require_matching_meta
from lmner.errors import CheckpointError


def sample_checkpoint():
    rng = np.random.default_rng(0)
    entries = {
        "encoder.char_emb": rng.standard_normal((7, 4)).astype(np.float32),
        "crf.transitions": rng.standard_normal((3, 3)).astype(np.float32),
        "ner.decoder.bias": rng.standard_normal(3).astype(np.float32),
    }
    return Checkpoint(entries, {"hidden_dim": 256, "num_tags": 3})


def test_round_trip(tmp_path):
    ckpt = sample_checkpoint()
    path = str(tmp_path / "model.ckpt")
    ckpt.save(path)
    loaded = Checkpoint.load(path)
    assert loaded.names() == ckpt.names()
    assert loaded.meta == ckpt.meta
    for name in ckpt.names():
        assert np.array_equal(loaded[name], ckpt[name])


def test_save_is_deterministic(tmp_path):
    ckpt = sample_checkpoint()
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    ckpt.save(p1)
    ckpt.save(p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_insertion_order_does_not_matter(tmp_path):
    ckpt = sample_checkpoint()
    reordered = Checkpoint({n: ckpt[n] for n in reversed(ckpt.names())}, ckpt.meta)
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    ckpt.save(p1)
    reordered.save(p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_payload_is_float32_even_from_float64(tmp_path):
    ckpt = Checkpoint({"w": np.ones((2, 2), dtype=np.float64) * np.pi})
    path = str(tmp_path / "m.ckpt")
    ckpt.save(path)
    loaded = Checkpoint.load(path)
    assert loaded["w"].dtype == np.float32


def test_no_temp_files_left_behind(tmp_path):
    ckpt = sample_checkpoint()
    ckpt.save(str(tmp_path / "m.ckpt"))
    assert sorted(os.listdir(tmp_path)) == ["m.ckpt"]


def test_truncated_file_rejected(tmp_path):
    path = str(tmp_path / "m.ckpt")
    sample_checkpoint().save(path)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[: len(blob) - 8])
    with pytest.raises(CheckpointError):
        Checkpoint.load(path)


def test_not_a_checkpoint_rejected(tmp_path):
    path = str(tmp_path / "m.ckpt")
    open(path, "wb").write(b"definitely not a checkpoint")
    with pytest.raises(CheckpointError):
        Checkpoint.load(path)


def test_missing_entry_named(tmp_path):
    ckpt = sample_checkpoint()
    with pytest.raises(CheckpointError, match="no.such.entry"):
        ckpt["no.such.entry"]


def test_namespace_filter():
    ckpt = sample_checkpoint()
    assert set(ckpt.namespace("crf")) == {"crf.transitions"}
    assert set(ckpt.namespace("encoder")) == {"encoder.char_emb"}


def test_meta_mismatch_lists_keys():
    ckpt = sample_checkpoint()
    with pytest.raises(CheckpointError) as err:
        require_matching_meta(ckpt, {"hidden_dim": 128, "num_tags": 3},
                              ["hidden_dim", "num_tags"])
    assert "hidden_dim" in str(err.value)
    assert "num_tags" not in str(err.value)
