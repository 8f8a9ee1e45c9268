"""
Model file container.

Layout:
    b"EXPOMASK1\\n"
    uint64 little-endian manifest length
    manifest: UTF-8 JSON with sorted keys
        {"architecture": {"widths": [...], "input_channels": C},
         "meta": {...},
         "tensors": [{"name", "shape", "offset"}, ...]}
    payload: every tensor as little-endian float64, in manifest order;
             offsets are relative to the start of the payload
"""

import json
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from expomask.errors import ImageIOError, ModelFormatError
from expomask.network.unet import UNetParams, param_shapes

logger = logging.getLogger(__name__)

MAGIC = b"EXPOMASK1\n"
_LENGTH = struct.Struct("<Q")
_DTYPE = np.dtype("<f8")


def save_model(path: Path, params: UNetParams, meta: Optional[Dict[str, Any]] = None) -> None:
    """
    Write params and a JSON-serializable meta dict to path.

    The bytes written depend only on params and meta.
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise ImageIOError(f"Directory does not exist: {path.parent}")

    entries = []
    chunks = []
    offset = 0
    for name, tensor in params.tensors.items():
        data = np.ascontiguousarray(tensor, dtype=_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)

    manifest = {
        "architecture": {"widths": list(params.widths), "input_channels": params.input_channels},
        "meta": meta or {},
        "tensors": entries,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(_LENGTH.pack(len(manifest_bytes)))
            f.write(manifest_bytes)
            for chunk in chunks:
                f.write(chunk)
    except OSError as e:
        raise ImageIOError(f"Failed to write model {path}: {e}") from e
    logger.info("Saved model with %d tensors to %s", len(entries), path)


def load_model(
    path: Path,
    widths: Optional[Tuple[int, ...]] = None,
    input_channels: Optional[int] = None,
) -> Tuple[UNetParams, Dict[str, Any]]:
    """
    Read a model file written by save_model.

    Args:
        path: Model file.
        widths: Expected encoder widths; checked when given.
        input_channels: Expected input channels; checked when given.

    Returns:
        (params, meta).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Model not found: {path}")
    raw = path.read_bytes()

    if not raw.startswith(MAGIC):
        raise ModelFormatError(f"{path}: not an expomask model file")
    start = len(MAGIC)
    if len(raw) < start + _LENGTH.size:
        raise ModelFormatError(f"{path}: truncated header")
    (manifest_length,) = _LENGTH.unpack_from(raw, start)
    start += _LENGTH.size
    try:
        manifest = json.loads(raw[start:start + manifest_length].decode("utf-8"))
        architecture = manifest["architecture"]
        file_widths = tuple(int(w) for w in architecture["widths"])
        file_channels = int(architecture["input_channels"])
        entries = manifest["tensors"]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
        raise ModelFormatError(f"{path}: unreadable manifest ({e})") from e
    payload = memoryview(raw)[start + manifest_length:]

    if widths is not None and tuple(widths) != file_widths:
        raise ModelFormatError(f"{path}: widths {file_widths} do not match expected {tuple(widths)}")
    if input_channels is not None and input_channels != file_channels:
        raise ModelFormatError(
            f"{path}: {file_channels} input channels, expected {input_channels}"
        )

    expected = param_shapes(file_widths, file_channels)
    if [entry.get("name") for entry in entries] != list(expected):
        raise ModelFormatError(f"{path}: tensor names do not follow the U-Net layout")

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in entries:
        name = entry["name"]
        shape = tuple(entry["shape"])
        if shape != expected[name]:
            raise ModelFormatError(f"{path}: {name} has shape {shape}, expected {expected[name]}")
        count = int(np.prod(shape))
        begin = int(entry["offset"])
        end = begin + count * _DTYPE.itemsize
        if begin < 0 or end > len(payload):
            raise ModelFormatError(f"{path}: {name} lies outside the payload")
        tensors[name] = np.frombuffer(payload[begin:end], dtype=_DTYPE).astype(np.float64).reshape(shape)

    params = UNetParams(tensors=tensors, widths=file_widths, input_channels=file_channels)
    return params, manifest.get("meta", {})
