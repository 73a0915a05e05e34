import numpy as np
import pytest

from adaptrec.checkpoint import load_model, read_container, save_model, write_container
from adaptrec.config import RunConfig
from adaptrec.errors import CheckpointError
from adaptrec.trainer import ModelState


def tiny_model(**overrides):
    base = dict(embed_dim=6, state_dim=5, ff_dim=8, rec_ff_dim=12, num_blocks=1,
                actor_dim=4, critic_dim=4, max_seq_len=16, epochs=1, seed=5)
    base.update(overrides)
    return ModelState(RunConfig(**base), num_users=4, num_items=9)


def test_container_round_trip(tmp_path):
    path = tmp_path / "blob.bin"
    meta = {"alpha": "1", "beta": "two"}
    tensors = {
        "scalarish": np.array(3.5),
        "vec": np.arange(4.0),
        "mat": np.arange(6.0).reshape(2, 3),
    }
    write_container(path, meta, tensors)
    meta2, tensors2 = read_container(path)
    assert meta2 == meta
    assert set(tensors2) == set(tensors)
    for name in tensors:
        assert np.array_equal(tensors2[name], tensors[name])
        assert tensors2[name].shape == tensors[name].shape


def test_magic_and_truncation_rejected(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        read_container(path)
    write_container(path, {}, {"v": np.arange(8.0)})
    data = path.read_bytes()
    path.write_bytes(data[:-9])
    with pytest.raises(CheckpointError, match="truncated"):
        read_container(path)


def test_model_round_trip(tmp_path):
    model = tiny_model()
    path = tmp_path / "model.bin"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.config == model.config
    assert loaded.num_users == model.num_users
    assert loaded.num_items == model.num_items
    for name, p in model.named_params().items():
        assert np.array_equal(loaded.named_params()[name].data, p.data), name


def test_model_round_trip_unshared_embeddings(tmp_path):
    model = tiny_model(shared_embeddings=False)
    path = tmp_path / "model.bin"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.rec_embeddings is not loaded.embeddings
    assert set(loaded.named_params()) == set(model.named_params())


def test_dimension_mismatch_is_load_error(tmp_path):
    model = tiny_model()
    path = tmp_path / "model.bin"
    save_model(path, model)
    meta, tensors = read_container(path)
    meta["config.embed_dim"] = "7"  # inconsistent with the stored tensors
    write_container(path, meta, tensors)
    with pytest.raises(CheckpointError):
        load_model(path)


def test_missing_tensor_is_load_error(tmp_path):
    model = tiny_model()
    path = tmp_path / "model.bin"
    save_model(path, model)
    meta, tensors = read_container(path)
    tensors.pop(sorted(tensors)[0])
    write_container(path, meta, tensors)
    with pytest.raises(CheckpointError, match="parameter set"):
        load_model(path)
