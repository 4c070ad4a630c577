import json

import numpy as np
import pytest

from socialpec.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from socialpec.errors import CheckpointError
from socialpec.model import LocationPredictor, ModelConfig, loc_predict


def perturbed_model(seed=0):
    model = LocationPredictor(seed=seed)
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data *= np.exp(rng.normal(0, 1e-3, p.shape))  # break any short decimal forms
    return model


def test_round_trip_is_exact(tmp_path):
    model = perturbed_model()
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, path, {"seed": 0, "epochs": 3, "best_val_nll": -1.25})
    loaded, meta = load_checkpoint(path)
    for (name, p), (name2, q) in zip(model.named_parameters().items(),
                                     loaded.named_parameters().items()):
        assert name == name2 and np.array_equal(p.data, q.data)
    assert meta == {"seed": 0, "epochs": 3, "best_val_nll": -1.25}
    window = np.cumsum(np.random.default_rng(1).normal(size=(3, 8, 2)), axis=1)
    a, b = loc_predict(model, window, 0), loc_predict(loaded, window, 0)
    assert np.array_equal(a.mu.data, b.mu.data) and np.array_equal(a.rho.data, b.rho.data)


def test_truncated_file(tmp_path):
    path = tmp_path / "ckpt.json"
    save_checkpoint(perturbed_model(), path)
    text = path.read_text()
    path.write_text(text[:len(text) // 2])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_architecture_mismatch(tmp_path):
    path = tmp_path / "ckpt.json"
    save_checkpoint(LocationPredictor(), path)
    with pytest.raises(CheckpointError, match="context_patterns"):
        load_checkpoint(path, ModelConfig(context_patterns=50))


def edit(path, fn):
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


def test_version_and_schema_errors_name_the_field(tmp_path):
    path = tmp_path / "ckpt.json"
    small = ModelConfig(context_patterns=3, context_channels=2, target_patterns=2,
                        target_channels=2, mlp_widths=(4, 4, 4, 5))
    save_checkpoint(LocationPredictor(small), path)
    edit(path, lambda d: d.update(format_version=FORMAT_VERSION + 1))
    with pytest.raises(CheckpointError, match="format_version"):
        load_checkpoint(path)

    save_checkpoint(LocationPredictor(small), path)
    edit(path, lambda d: d["parameters"].pop("mlp.2.bias"))
    with pytest.raises(CheckpointError, match="mlp.2.bias"):
        load_checkpoint(path)

    save_checkpoint(LocationPredictor(small), path)
    edit(path, lambda d: d["parameters"]["target.scale"].update(shape=[3]))
    with pytest.raises(CheckpointError, match="target.scale"):
        load_checkpoint(path)

    save_checkpoint(LocationPredictor(small), path)
    edit(path, lambda d: d.pop("architecture"))
    with pytest.raises(CheckpointError, match="architecture"):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.json")
