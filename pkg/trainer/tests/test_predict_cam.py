"""Inference output contract and activation-map properties."""

import numpy as np
import pytest
import torch

from conftest import make_corpus
from fundus_trainer.cam import (
    _normalize,
    heat_color,
    tensor_to_rgb,
    write_overlay,
    xgradcam_fused,
)
from fundus_trainer.errors import DataError
from fundus_trainer.io import ImageRow, read_manifest, read_tensor
from fundus_trainer.model import build_model
from fundus_trainer.predict import predict


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(11)
    return build_model(pretrained=False)


def test_predict_rows_sum_to_one(tmp_path, model):
    manifest, tensor_dir, _ = make_corpus(tmp_path, n_train=5, n_val=3)
    rows = read_manifest(manifest)
    outcome = predict(model, rows, tensor_dir, batch_size=4)
    assert len(outcome.rows) == 8
    assert not outcome.failures
    for image_id, p0, p1 in outcome.rows:
        assert abs(p0 + p1 - 1.0) <= 1e-6
        assert 0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0
    assert [r[0] for r in outcome.rows] == [r.image_id for r in rows]


def test_predict_missing_tensor_fails_per_record(tmp_path, model):
    manifest, tensor_dir, _ = make_corpus(tmp_path, n_train=3, n_val=2)
    rows = read_manifest(manifest)
    rows.append(ImageRow(image_id="ghost", split="test", label=0))
    outcome = predict(model, rows, tensor_dir, batch_size=4)
    assert len(outcome.rows) == 5
    assert len(outcome.failures) == 1
    assert outcome.failures[0][0] == "ghost"


def test_predict_rejects_duplicates(tmp_path, model):
    manifest, tensor_dir, _ = make_corpus(tmp_path, n_train=2, n_val=2)
    rows = read_manifest(manifest)
    with pytest.raises(DataError):
        predict(model, rows + rows[:1], tensor_dir)


def test_normalize_constant_grid_is_zeros():
    grid = torch.full((5, 7), 3.25)
    assert torch.equal(_normalize(grid), torch.zeros(5, 7))
    ramp = torch.linspace(0, 1, 12).reshape(3, 4)
    normed = _normalize(ramp * 8 - 2)
    assert float(normed.min()) == 0.0 and float(normed.max()) == 1.0


def test_cam_contract(tmp_path, model):
    rng = np.random.default_rng(12)
    values = rng.uniform(-1, 1, size=(3, 96, 96)).astype(np.float32)
    result = xgradcam_fused(model, values, image_id="probe")
    assert result.heatmap.shape == (96, 96)
    assert len(result.block_maps) == 3
    for block in result.block_maps:
        assert block.shape == (96, 96)
        assert block.min() >= 0.0 and block.max() <= 1.0
    assert result.heatmap.min() >= 0.0 and result.heatmap.max() <= 1.0
    fused = np.mean(np.stack(result.block_maps), axis=0)
    assert np.abs(result.heatmap - fused).max() <= 1e-6


def test_cam_target_defaults_to_argmax(tmp_path, model):
    rng = np.random.default_rng(13)
    values = rng.uniform(-1, 1, size=(3, 64, 64)).astype(np.float32)
    with torch.no_grad():
        logits = model(torch.from_numpy(values).unsqueeze(0))
    expected = int(logits.argmax(dim=1))
    result = xgradcam_fused(model, values)
    assert result.target_class == expected
    forced = xgradcam_fused(model, values, target_class=1 - expected)
    assert forced.target_class == 1 - expected


def test_cam_deterministic(model):
    rng = np.random.default_rng(14)
    values = rng.uniform(-1, 1, size=(3, 48, 48)).astype(np.float32)
    a = xgradcam_fused(model, values, target_class=1)
    b = xgradcam_fused(model, values, target_class=1)
    assert np.array_equal(a.heatmap, b.heatmap)


def test_cam_rejects_bad_input(model):
    with pytest.raises(DataError):
        xgradcam_fused(model, np.zeros((1, 8, 8), dtype=np.float32))
    with pytest.raises(DataError):
        xgradcam_fused(model, np.zeros((3, 64, 64), dtype=np.float32),
                       target_class=5)


def test_tensor_to_rgb_endpoints():
    values = np.zeros((3, 1, 3), dtype=np.float32)
    values[:, 0, 0] = -1.0
    values[:, 0, 1] = 1.0
    values[:, 0, 2] = 0.0
    rgb = tensor_to_rgb(values)
    assert rgb[0, 0].tolist() == [0, 0, 0]
    assert rgb[0, 1].tolist() == [255, 255, 255]
    assert rgb[0, 2].tolist() == [128, 128, 128]


def test_heat_color_ramp():
    heat = np.array([[0.0, 0.5, 1.0]])
    colors = heat_color(heat)
    assert colors[0, 0].tolist() == [0, 0, 0]
    assert colors[0, 1].tolist() == [255, 0, 0]
    assert colors[0, 2].tolist() == [255, 255, 0]


def test_write_overlay_round_trip(tmp_path, model):
    from PIL import Image

    rng = np.random.default_rng(15)
    values = rng.uniform(-1, 1, size=(3, 40, 40)).astype(np.float32)
    heat = rng.uniform(0, 1, size=(40, 40))
    path = tmp_path / "overlay.png"
    write_overlay(path, values, heat)
    with Image.open(path) as img:
        assert img.size == (40, 40)
        assert img.mode == "RGB"
