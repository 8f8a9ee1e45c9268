"""
API Tests for the ExpoMask HTTP service.
Runs every endpoint in-process through FastAPI's TestClient.

Usage:
    pytest test_api.py
"""

import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from expomask.config import settings
from expomask.main import app
from expomask.models.image import ImageU8
from expomask.models.training import TrainConfig
from expomask.network.checkpoint import save_model
from expomask.network.unet import init_params
from expomask.tools.image_io import decode_png, encode_png


@pytest.fixture
def client():
    with TestClient(app) as c:
        yield c


def png(data) -> bytes:
    array = np.asarray(data, dtype=np.uint8)
    if array.ndim == 2:
        array = array[:, :, np.newaxis]
    return encode_png(ImageU8(data=array))


def decode_mask(encoded: str) -> np.ndarray:
    return decode_png(base64.b64decode(encoded)).data[:, :, 0]


# ==================== Info ====================

def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_root_lists_endpoints(client):
    body = client.get("/").json()
    assert body["name"] == "ExpoMask API"
    assert "predict" in body["endpoints"]


# ==================== Masks ====================

def test_generate_manual_mask(client):
    response = client.post(
        "/api/masks/generate",
        files={"file": ("low.png", png([[119, 120], [200, 255]]), "image/png")},
        data={"method": "manual", "exposure": "low"},
    )
    assert response.status_code == 200
    body = response.json()
    assert (body["width"], body["height"]) == (2, 2)
    assert body["coverage"] == 0.75
    assert body["threshold"] is None
    assert decode_mask(body["mask_png"]).tolist() == [[0, 255], [255, 255]]


def test_generate_otsu_mask_reports_threshold(client):
    values = np.array([50] * 10 + [200] * 6).reshape(4, 4)
    response = client.post(
        "/api/masks/generate",
        files={"file": ("low.png", png(values), "image/png")},
        data={"method": "otsu", "exposure": "low"},
    )
    body = response.json()
    assert body["threshold"] == 50
    assert body["coverage"] == 6 / 16


def test_generate_with_custom_range(client):
    response = client.post(
        "/api/masks/generate",
        files={"file": ("low.png", png([[10, 60]]), "image/png")},
        data={"exposure": "low", "low_range": "50:100"},
    )
    assert decode_mask(response.json()["mask_png"]).tolist() == [[0, 255]]


def test_generate_rejects_bad_png(client):
    response = client.post(
        "/api/masks/generate",
        files={"file": ("bad.png", b"not a png at all, only some bytes here", "image/png")},
    )
    assert response.status_code == 400


def test_generate_rejects_bad_range(client):
    response = client.post(
        "/api/masks/generate",
        files={"file": ("low.png", png([[10]]), "image/png")},
        data={"low_range": "200:100"},
    )
    assert response.status_code == 400


def test_compare(client):
    low = png(np.full((4, 4), 150))
    high = png(np.full((4, 4), 250))
    response = client.post(
        "/api/masks/compare",
        files={"low": ("low.png", low, "image/png"), "high": ("high.png", high, "image/png")},
        data={"scene_id": "flat"},
    )
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert len(rows) == 8
    manual = {r["exposure"]: r["coverage"] for r in rows if r["method"] == "manual"}
    assert manual == {"low": 1.0, "high": 0.0, "merged": 1.0, "residual": 0.0}


def test_compare_size_mismatch(client):
    response = client.post(
        "/api/masks/compare",
        files={
            "low": ("low.png", png(np.zeros((4, 4))), "image/png"),
            "high": ("high.png", png(np.zeros((4, 5))), "image/png"),
        },
    )
    assert response.status_code == 400


# ==================== Metrics ====================

def test_evaluate(client):
    prediction = png([[255, 255, 0, 0], [255, 0, 200, 10]])
    ground_truth = png([[255, 255, 255, 0], [0, 0, 255, 0]])
    response = client.post(
        "/api/metrics/evaluate",
        files={
            "prediction": ("pred.png", prediction, "image/png"),
            "ground_truth": ("gt.png", ground_truth, "image/png"),
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["counts"] == {"tp": 3, "fp": 1, "tn": 3, "fn": 1}
    assert body["dice"] == 0.75
    assert body["jaccard"] == 0.6


def test_evaluate_rejects_grey_ground_truth(client):
    response = client.post(
        "/api/metrics/evaluate",
        files={
            "prediction": ("pred.png", png([[0, 255]]), "image/png"),
            "ground_truth": ("gt.png", png([[0, 128]]), "image/png"),
        },
    )
    assert response.status_code == 400


# ==================== Prediction ====================

def test_predict_without_model(client, monkeypatch):
    monkeypatch.setattr(settings, "model_path", None)
    response = client.post("/api/predict", files={"file": ("x.png", png(np.zeros((16, 16))), "image/png")})
    assert response.status_code == 404


def test_predict_with_corrupt_model(client, monkeypatch, tmp_path):
    path = tmp_path / "broken.model"
    path.write_bytes(b"EXPOMASK1 but nothing useful after the magic")
    monkeypatch.setattr(settings, "model_path", path)
    response = client.post("/api/predict", files={"file": ("x.png", png(np.zeros((16, 16))), "image/png")})
    assert response.status_code == 500
    assert response.json()["detail"].startswith("Configured model is unusable")


def test_predict_with_model(client, monkeypatch, tmp_path):
    cfg = TrainConfig(input_size=32, channel_scale=8)
    path = tmp_path / "low.model"
    save_model(path, init_params(seed=0, channel_scale=8), meta={"config": cfg.model_dump(mode="json")})
    monkeypatch.setattr(settings, "model_path", path)

    image = np.random.default_rng(0).integers(0, 256, size=(40, 24, 3))
    response = client.post("/api/predict", files={"file": ("x.png", png(image), "image/png")})
    assert response.status_code == 200
    body = response.json()
    assert body["method"] == "unet"
    assert (body["width"], body["height"]) == (32, 32)
    assert decode_mask(body["mask_png"]).shape == (32, 32)
