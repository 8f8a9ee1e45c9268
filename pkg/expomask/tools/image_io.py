"""
Image and dataset I/O, plus the synthetic multi-exposure scene generator.
PNG is the only raster format: 8-bit grayscale or RGB, no alpha.
"""

import io
import logging
import struct
from pathlib import Path
from typing import Tuple

import numpy as np
from PIL import Image

from expomask.errors import ImageIOError, InvalidParams, NonBinaryGroundTruth, UnsupportedFormat
from expomask.models.image import (
    BinaryMask,
    DatasetScan,
    ExposureStack,
    ImageU8,
    SceneEntry,
    SynthSceneParams,
)

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# IHDR colour types accepted as-is: grayscale, truecolour
_SUPPORTED_COLOR_TYPES = {0: "grayscale", 2: "RGB"}
_COLOR_TYPE_NAMES = {3: "palette", 4: "grayscale+alpha", 6: "RGBA"}

STACK_FILES = ("low.png", "mid.png", "high.png")
GT_FILES = {"gt_low": "gt_low.png", "gt_mid": "gt_mid.png", "gt_high": "gt_high.png"}


# ==================== PNG ====================

def _check_png_header(head: bytes, source: str) -> None:
    """Validate signature, bit depth and colour type from the IHDR chunk."""
    if len(head) < 33 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise UnsupportedFormat(f"Not a PNG file: {source}")
    _, _, bit_depth, color_type = struct.unpack(">IIBB", head[16:26])
    if color_type not in _SUPPORTED_COLOR_TYPES:
        kind = _COLOR_TYPE_NAMES.get(color_type, f"color type {color_type}")
        raise UnsupportedFormat(f"{source}: {kind} PNGs are not supported")
    if bit_depth != 8:
        raise UnsupportedFormat(f"{source}: bit depth {bit_depth} is not supported, expected 8")


def _decode(fp, source: str) -> ImageU8:
    try:
        with Image.open(fp) as im:
            im.load()
            transparent = "transparency" in im.info
            data = np.asarray(im, dtype=np.uint8)
    except OSError as e:
        raise ImageIOError(f"Failed to decode {source}: {e}") from e
    # tRNS on a grayscale or RGB image is alpha by another name
    if transparent:
        raise UnsupportedFormat(f"{source}: PNGs with a transparency chunk are not supported")
    if data.ndim == 2:
        data = data[:, :, np.newaxis]
    return ImageU8(data=np.ascontiguousarray(data))


def load_png(path: Path) -> ImageU8:
    """
    Load an 8-bit grayscale or RGB PNG.

    The bit depth is read from the IHDR chunk before decoding, because the
    decoder would silently reduce 16-bit RGB to 8 bits.

    Args:
        path: PNG file path.

    Returns:
        Decoded ImageU8 (H x W x 1 or H x W x 3).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Image not found: {path}")
    with open(path, "rb") as f:
        _check_png_header(f.read(33), str(path))
    return _decode(path, str(path))


def decode_png(data: bytes, source: str = "upload") -> ImageU8:
    """load_png for in-memory bytes."""
    _check_png_header(data[:33], source)
    return _decode(io.BytesIO(data), source)


def _to_pil(image: ImageU8) -> Image.Image:
    if image.channels == 1:
        return Image.fromarray(np.ascontiguousarray(image.data[:, :, 0]))
    return Image.fromarray(np.ascontiguousarray(image.data))


def save_png(image: ImageU8, path: Path) -> None:
    """
    Save an ImageU8 as PNG; load_png returns bit-identical data.

    Args:
        image: Image to write.
        path: Destination. Its parent directory must already exist.
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise ImageIOError(f"Directory does not exist: {path.parent}")
    try:
        _to_pil(image).save(path, format="PNG")
    except OSError as e:
        raise ImageIOError(f"Failed to write {path}: {e}") from e


def encode_png(image: ImageU8) -> bytes:
    """PNG bytes of an image."""
    buffer = io.BytesIO()
    _to_pil(image).save(buffer, format="PNG")
    return buffer.getvalue()


def mask_to_image(mask: BinaryMask) -> ImageU8:
    """Mask {0,1} -> 1-channel image {0,255}."""
    return ImageU8(data=(mask.m * 255).astype(np.uint8)[:, :, np.newaxis])


def image_to_mask(image: ImageU8) -> BinaryMask:
    """1-channel image {0,255} -> mask {0,1}."""
    if image.channels != 1:
        raise NonBinaryGroundTruth("Mask images must have a single channel")
    plane = image.data[:, :, 0]
    if not np.all((plane == 0) | (plane == 255)):
        raise NonBinaryGroundTruth("Mask images may only contain 0 and 255")
    return BinaryMask(m=(plane // 255).astype(np.uint8))


def load_mask(path: Path) -> BinaryMask:
    """Load a {0,255} mask PNG."""
    return image_to_mask(load_png(path))


def save_mask(mask: BinaryMask, path: Path) -> None:
    """Save a mask as a 1-channel {0,255} PNG."""
    save_png(mask_to_image(mask), path)


# ==================== Resampling ====================

def resize_image(image: ImageU8, size: Tuple[int, int]) -> ImageU8:
    """
    Bilinear resize to (height, width).

    Args:
        image: Source image.
        size: Target (height, width).

    Returns:
        Resized ImageU8 with the same channel count.
    """
    height, width = size
    if (image.height, image.width) == (height, width):
        return image
    channels = [
        np.asarray(
            Image.fromarray(np.ascontiguousarray(image.data[:, :, c])).resize(
                (width, height), Image.Resampling.BILINEAR
            ),
            dtype=np.uint8,
        )
        for c in range(image.channels)
    ]
    return ImageU8(data=np.stack(channels, axis=2))


def resize_mask(mask: BinaryMask, size: Tuple[int, int]) -> BinaryMask:
    """Nearest-neighbour resize to (height, width); keeps the mask binary."""
    height, width = size
    if (mask.height, mask.width) == (height, width):
        return mask
    resized = Image.fromarray(np.ascontiguousarray(mask.m)).resize((width, height), Image.Resampling.NEAREST)
    return BinaryMask(m=np.asarray(resized, dtype=np.uint8))


# ==================== Synthetic scenes ====================

def _validate_params(params: SynthSceneParams) -> None:
    height, width = params.size
    if height <= 0 or width <= 0:
        raise InvalidParams(f"size must be positive, got {params.size}")
    if params.blob_count < 1:
        raise InvalidParams(f"blob_count must be >= 1, got {params.blob_count}")
    if params.noise_sigma < 0:
        raise InvalidParams(f"noise_sigma must be >= 0, got {params.noise_sigma}")
    if params.gamma <= 0:
        raise InvalidParams(f"gamma must be > 0, got {params.gamma}")
    low, mid, high = params.exposure_scales
    if low <= 0:
        raise InvalidParams(f"exposure scales must be positive, got {params.exposure_scales}")
    if not (low < mid < high):
        raise InvalidParams(f"exposure scales must be strictly increasing, got {params.exposure_scales}")


def synth_radiance(params: SynthSceneParams, rng: np.random.Generator) -> np.ndarray:
    """
    Positive radiance field: a floor, a horizontal ramp and Gaussian blobs.

    The blobs put very bright regions next to dim ones so every stack holds
    both under- and over-exposed areas.
    """
    height, width = params.size
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]

    ramp = np.linspace(0.0, 1.0, width)[None, :]
    if rng.random() < 0.5:
        ramp = ramp[:, ::-1]
    radiance = 0.01 + 0.5 * np.broadcast_to(ramp, (height, width))

    extent = float(min(height, width))
    for _ in range(params.blob_count):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        sigma = rng.uniform(0.08, 0.25) * extent
        amplitude = rng.uniform(0.5, 5.0)
        radiance = radiance + amplitude * np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * sigma**2))
    return radiance


def expose(radiance: np.ndarray, scale: float, gamma: float) -> np.ndarray:
    """Noise-free 8-bit-range response: clip(255 * (scale * radiance)^(1/gamma), 0, 255)."""
    return np.clip(255.0 * np.power(scale * radiance, 1.0 / gamma), 0.0, 255.0)


def synth_stack(params: SynthSceneParams) -> Tuple[ExposureStack, np.ndarray]:
    """
    Generate a seeded low/mid/high exposure stack and its radiance.

    Args:
        params: Scene parameters; the seed fully determines the output.

    Returns:
        (ExposureStack, radiance[H, W] float64).
    """
    _validate_params(params)
    rng = np.random.default_rng(params.seed)

    radiance = synth_radiance(params, rng)
    tint = rng.uniform(0.8, 1.0, size=3)

    images = []
    for scale in params.exposure_scales:
        channels = expose(radiance[:, :, None] * tint[None, None, :], scale, params.gamma)
        if params.noise_sigma > 0:
            channels = channels + rng.normal(0.0, params.noise_sigma, size=channels.shape)
        quantized = np.rint(np.clip(channels, 0.0, 255.0)).astype(np.uint8)
        images.append(ImageU8(data=quantized))

    stack = ExposureStack(
        low=images[0],
        mid=images[1],
        high=images[2],
        scene_id=f"synth_{params.seed}",
    )
    return stack, radiance


def write_synthetic_dataset(
    root: Path,
    count: int,
    params: SynthSceneParams,
    save_radiance: bool = False,
) -> list:
    """
    Write `count` synthetic scenes under root as scene_0000, scene_0001, ...

    Scene i uses seed params.seed + i.

    Returns:
        List of written scene directories.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(count):
        scene_params = params.model_copy(update={"seed": params.seed + i})
        stack, radiance = synth_stack(scene_params)
        scene_dir = root / f"scene_{i:04d}"
        scene_dir.mkdir(exist_ok=True)
        save_png(stack.low, scene_dir / "low.png")
        save_png(stack.mid, scene_dir / "mid.png")
        save_png(stack.high, scene_dir / "high.png")
        if save_radiance:
            np.save(scene_dir / "radiance.npy", radiance)
        written.append(scene_dir)
        logger.debug("Wrote synthetic scene %s (seed %d)", scene_dir.name, scene_params.seed)
    logger.info("Wrote %d synthetic scenes to %s", count, root)
    return written


# ==================== Datasets ====================

def scan_dataset(root: Path) -> DatasetScan:
    """
    Find scene directories holding low.png, mid.png and high.png.

    Incomplete scenes are skipped and reported in the warnings list.

    Args:
        root: Dataset root; one sub-directory per scene.

    Returns:
        DatasetScan with entries in lexicographic scene order.
    """
    root = Path(root)
    if not root.is_dir():
        raise ImageIOError(f"Dataset root does not exist: {root}")

    scan = DatasetScan()
    for scene_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        missing = [name for name in STACK_FILES if not (scene_dir / name).is_file()]
        if missing:
            message = f"{scene_dir.name}: missing {', '.join(missing)}"
            logger.warning("Skipping scene %s", message)
            scan.warnings.append(message)
            continue

        optional = {
            key: scene_dir / name for key, name in GT_FILES.items() if (scene_dir / name).is_file()
        }
        scan.entries.append(
            SceneEntry(
                scene_id=scene_dir.name,
                low=scene_dir / "low.png",
                mid=scene_dir / "mid.png",
                high=scene_dir / "high.png",
                **optional,
            )
        )
    return scan


def load_stack(entry: SceneEntry) -> ExposureStack:
    """Load the three exposures of a scanned scene."""
    return ExposureStack(
        low=load_png(entry.low),
        mid=load_png(entry.mid),
        high=load_png(entry.high),
        scene_id=entry.scene_id,
    )
