"""
Image input for inference.

Two formats are accepted:

* binary PPM (``P6``, maxval <= 255): pixels are scaled to [0, 1] and
  normalised per channel with the ``IMAGE_MEAN`` / ``IMAGE_STD`` settings;
* raw tensors: a 16-byte header of four little-endian u32 extents
  (N, C, H, W) followed by little-endian float32 elements, used as is.
"""

import logging
import math
import struct

import numpy as np

from .conf import get_setting
from .exceptions import GeometryError, ImageError
from .tensor import Tensor
from .van import model_forward

logger = logging.getLogger(__name__)

RAW_HEADER = struct.Struct('<4I')


def _ppm_tokens(payload, count):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, position = [], 0
    while len(tokens) < count:
        while position < len(payload) and payload[position:position + 1].isspace():
            position += 1
        if payload[position:position + 1] == b'#':
            while position < len(payload) and payload[position:position + 1] not in (b'\n', b'\r'):
                position += 1
            continue
        start = position
        while position < len(payload) and not payload[position:position + 1].isspace():
            position += 1
        if start == position:
            raise ImageError("Truncated PPM header")
        tokens.append(payload[start:position])
    # exactly one whitespace byte separates the header from the raster
    return tokens, position + 1


def decode_ppm(payload):
    """Return an (H, W, 3) uint8 array from P6 bytes."""
    tokens, offset = _ppm_tokens(payload, 4)
    if tokens[0] != b'P6':
        raise ImageError(f"Unsupported PPM magic {tokens[0]!r} (only binary P6 is read)")
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError:
        raise ImageError("PPM header extents are not integers")
    if width < 1 or height < 1:
        raise ImageError(f"PPM has empty extent {width}x{height}")
    if not 0 < maxval <= 255:
        raise ImageError(f"Only 8-bit PPM files are supported (maxval {maxval})")
    expected = width * height * 3
    raster = payload[offset:offset + expected]
    if len(raster) != expected:
        raise ImageError(f"PPM raster holds {len(raster)} bytes, expected {expected}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return pixels, maxval


def encode_ppm(pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    height, width, _ = pixels.shape
    return f'P6\n{width} {height}\n255\n'.encode('ascii') + pixels.tobytes()


def normalise(pixels, maxval=255):
    mean = np.asarray(get_setting('IMAGE_MEAN'), dtype=np.float64).reshape(-1, 1, 1)
    std = np.asarray(get_setting('IMAGE_STD'), dtype=np.float64).reshape(-1, 1, 1)
    scaled = pixels.astype(np.float64).transpose(2, 0, 1) / maxval
    return ((scaled - mean) / std)[None]


def decode_raw(payload):
    if len(payload) < RAW_HEADER.size:
        raise ImageError("Raw tensor file is shorter than its 16-byte header")
    shape = RAW_HEADER.unpack_from(payload)
    if min(shape) < 1:
        raise ImageError(f"Raw tensor has empty extent {list(shape)}")
    expected = 4 * math.prod(shape)
    body = payload[RAW_HEADER.size:]
    if len(body) != expected:
        raise ImageError(f"Raw tensor payload holds {len(body)} bytes, expected {expected}")
    return np.frombuffer(body, dtype='<f4').reshape(shape).astype(np.float32)


def encode_raw(array):
    array = np.asarray(array, dtype='<f4')
    if array.ndim != 4:
        raise ImageError(f"Raw tensors are (N, C, H, W), got rank {array.ndim}")
    return RAW_HEADER.pack(*array.shape) + array.tobytes()


def center_crop(array, multiple):
    """Crop the trailing two extents to the largest centred multiple of ``multiple``."""
    height, width = array.shape[-2:]
    new_h, new_w = height - height % multiple, width - width % multiple
    if new_h == 0 or new_w == 0:
        raise GeometryError(f"{height}x{width} image is smaller than {multiple}x{multiple}")
    if (new_h, new_w) != (height, width):
        logger.warning(f"Center-cropping {height}x{width} image to {new_h}x{new_w}")
    top, left = (height - new_h) // 2, (width - new_w) // 2
    return array[..., top:top + new_h, left:left + new_w]


def load_image(path, precision=None, crop_multiple=None):
    """Read a PPM or raw-tensor file into an (N, C, H, W) Tensor."""
    with open(path, 'rb') as handle:
        payload = handle.read()
    if payload[:2] == b'P6':
        pixels, maxval = decode_ppm(payload)
        array = normalise(pixels, maxval)
    else:
        array = decode_raw(payload)
    if crop_multiple:
        array = center_crop(array, crop_multiple)
    logger.debug(f"Loaded image {path} as {list(array.shape)}")
    return Tensor(array, precision)


def infer_image(path, model, crop=False):
    """Classify one image file; returns (argmax class index, logit vector) per image."""
    multiple = model.variant.total_stride if crop else None
    images = load_image(path, model.precision, crop_multiple=multiple)
    logits, _ = model_forward(images, model)
    logits = logits.data
    return logits.argmax(axis=1), logits
