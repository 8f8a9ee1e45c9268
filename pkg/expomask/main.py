"""
Main FastAPI Application
ExpoMask HTTP service: ground-truth masks, coverage comparison, metrics and U-Net prediction.
"""

import base64
import logging
from contextlib import asynccontextmanager
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ValidationError

from expomask import __version__
from expomask.config import settings
from expomask.errors import ExpoMaskError
from expomask.models.image import BinaryMask, ExposureClass, ThresholdRanges
from expomask.models.report import ConfusionCounts, CoverageRow
from expomask.models.training import GtMethod, TrainConfig
from expomask.network.checkpoint import load_model
from expomask.network.unet import UNetParams, predict
from expomask.tools.color import luminance
from expomask.tools.ground_truth import generate_mask, mask_coverage, otsu_threshold
from expomask.tools.image_io import decode_png, encode_png, image_to_mask, mask_to_image
from expomask.tools.metrics import binarize, confusion, metric_row
from expomask.workflows.coverage import scene_coverage
from expomask.workflows.training import config_from_meta, prepare_image

logger = logging.getLogger(__name__)


# Lifespan context manager for startup/shutdown
@asynccontextmanager
async def lifespan(app: FastAPI):
    """Log startup and the configured model."""
    logger.info("🚀 Starting ExpoMask service %s", __version__)
    if settings.model_path is not None:
        logger.info("Prediction model: %s", settings.model_path)
    yield
    logger.info("👋 Shutting down...")


# Create FastAPI app
app = FastAPI(
    title="ExpoMask API",
    description="""
    Well-exposed region masks for multi-exposure LDR images.

    - Generate manual or Otsu ground-truth masks
    - Compare manual and Otsu coverage for a low/high pair
    - Score a predicted mask against ground truth
    - Predict a mask with a trained U-Net
    """,
    version=__version__,
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# ==================== API Models ====================

class HealthResponse(BaseModel):
    """Health check response."""
    status: str
    version: str
    timestamp: str


class MaskResponse(BaseModel):
    """A generated or predicted mask."""
    method: str
    exposure: str
    width: int
    height: int
    coverage: float
    threshold: Optional[int] = None
    mask_png: str  # base64


class CompareResponse(BaseModel):
    """Coverage rows of both methods for one low/high pair."""
    rows: List[CoverageRow]


class EvaluateResponse(BaseModel):
    """Metrics of one prediction against its ground truth."""
    counts: ConfusionCounts
    dice: float
    jaccard: float
    sensitivity: float
    specificity: float
    auc: float
    avg: float


def _encode_mask(mask: BinaryMask) -> str:
    return base64.b64encode(encode_png(mask_to_image(mask))).decode("ascii")


def _ranges(low_range: Optional[str], high_range: Optional[str]) -> ThresholdRanges:
    values = {}
    if low_range:
        values["low_range"] = low_range
    if high_range:
        values["high_range"] = high_range
    return ThresholdRanges(**values)


def _bad_request(e: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(e))


@lru_cache(maxsize=4)
def _cached_model(path: str, mtime: float) -> Tuple[UNetParams, TrainConfig]:
    params, meta = load_model(Path(path))
    return params, config_from_meta(meta, params)


def get_model() -> Tuple[UNetParams, TrainConfig]:
    """The model at settings.model_path, reloaded when the file changes."""
    path = settings.model_path
    if path is None or not Path(path).is_file():
        raise HTTPException(status_code=404, detail="No prediction model is configured")
    return _cached_model(str(path), Path(path).stat().st_mtime)


# ==================== API Endpoints ====================

@app.get("/", tags=["Root"])
async def root():
    """Root endpoint with API info."""
    return {
        "name": "ExpoMask API",
        "version": __version__,
        "status": "running",
        "docs": "/docs",
        "endpoints": {
            "generate_mask": "POST /api/masks/generate",
            "compare_methods": "POST /api/masks/compare",
            "evaluate": "POST /api/metrics/evaluate",
            "predict": "POST /api/predict",
            "health": "GET /health",
        },
    }


@app.get("/health", response_model=HealthResponse, tags=["Health"])
async def health_check():
    """Health check endpoint."""
    return HealthResponse(
        status="healthy",
        version=__version__,
        timestamp=datetime.now().isoformat(),
    )


@app.post("/api/masks/generate", response_model=MaskResponse, tags=["Masks"])
async def generate_mask_endpoint(
    file: UploadFile = File(...),
    method: GtMethod = Form(GtMethod.MANUAL),
    exposure: ExposureClass = Form(ExposureClass.LOW),
    low_range: Optional[str] = Form(None),
    high_range: Optional[str] = Form(None),
):
    """
    Ground-truth mask of an uploaded 8-bit PNG.

    Manual masks keep the class's luminance range; Otsu masks also report
    the threshold they used.
    """
    try:
        image = decode_png(await file.read(), file.filename or "upload")
        plane = luminance(image)
        mask = generate_mask(plane, exposure, method, _ranges(low_range, high_range))
        return MaskResponse(
            method=method.value,
            exposure=exposure.value,
            width=image.width,
            height=image.height,
            coverage=mask_coverage(mask),
            threshold=otsu_threshold(plane) if method is GtMethod.OTSU else None,
            mask_png=_encode_mask(mask),
        )
    except (ExpoMaskError, ValidationError) as e:
        raise _bad_request(e)
    except Exception as e:
        logger.exception("Mask generation failed")
        raise HTTPException(status_code=500, detail=f"Error generating mask: {str(e)}")


@app.post("/api/masks/compare", response_model=CompareResponse, tags=["Masks"])
async def compare_masks_endpoint(
    low: UploadFile = File(...),
    high: UploadFile = File(...),
    scene_id: str = Form("upload"),
    low_range: Optional[str] = Form(None),
    high_range: Optional[str] = Form(None),
):
    """Manual vs. Otsu coverage (low, high, merged, residual) of a low/high pair."""
    try:
        low_image = decode_png(await low.read(), low.filename or "low")
        high_image = decode_png(await high.read(), high.filename or "high")
        rows = scene_coverage(scene_id, low_image, high_image, _ranges(low_range, high_range))
        return CompareResponse(rows=rows)
    except (ExpoMaskError, ValidationError) as e:
        raise _bad_request(e)
    except Exception as e:
        logger.exception("Coverage comparison failed")
        raise HTTPException(status_code=500, detail=f"Error comparing masks: {str(e)}")


@app.post("/api/metrics/evaluate", response_model=EvaluateResponse, tags=["Metrics"])
async def evaluate_endpoint(
    prediction: UploadFile = File(...),
    ground_truth: UploadFile = File(...),
):
    """
    Score a predicted mask against a {0,255} ground-truth mask.

    The prediction may be any 8-bit grayscale PNG; it is binarized at 0.5
    of full scale.
    """
    try:
        pred_image = decode_png(await prediction.read(), prediction.filename or "prediction")
        gt = image_to_mask(decode_png(await ground_truth.read(), ground_truth.filename or "ground_truth"))
        pred = binarize(luminance(pred_image).y / 255.0)
        counts = confusion(pred, gt)
        row = metric_row("upload", counts)
        return EvaluateResponse(counts=counts, **row.model_dump(exclude={"loss_name"}))
    except (ExpoMaskError, ValidationError) as e:
        raise _bad_request(e)
    except Exception as e:
        logger.exception("Evaluation failed")
        raise HTTPException(status_code=500, detail=f"Error evaluating prediction: {str(e)}")


@app.post("/api/predict", response_model=MaskResponse, tags=["Prediction"])
async def predict_endpoint(file: UploadFile = File(...)):
    """
    Well-exposed region mask predicted by the configured U-Net.

    The image is resized to the model's input size; the mask is returned
    at that size.
    """
    try:
        params, cfg = get_model()
    except ExpoMaskError as e:
        logger.error("Configured model %s failed to load: %s", settings.model_path, e)
        raise HTTPException(status_code=500, detail=f"Configured model is unusable: {str(e)}")
    try:
        image = decode_png(await file.read(), file.filename or "upload")
        x = prepare_image(image, cfg)[np.newaxis]
        mask = binarize(predict(params, x, batch_size=1)[0, :, :, 0])
        return MaskResponse(
            method="unet",
            exposure=cfg.exposure_class.value,
            width=cfg.input_size,
            height=cfg.input_size,
            coverage=mask_coverage(mask),
            mask_png=_encode_mask(mask),
        )
    except (ExpoMaskError, ValidationError) as e:
        raise _bad_request(e)
    except Exception as e:
        logger.exception("Prediction failed")
        raise HTTPException(status_code=500, detail=f"Error predicting mask: {str(e)}")


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("expomask.main:app", host=settings.host, port=settings.port, reload=settings.debug)
