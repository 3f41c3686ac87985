"""
Binary checkpoint files.

Layout (all integers little-endian):

    magic    4 bytes  b'VANW'
    version  u16
    count    u32
    count x entry:
        name length u32, name UTF-8 bytes
        dtype tag   u8   (0 = float32, 1 = float64)
        rank        u8
        extents     rank x u32
        payload     little-endian elements, row-major

Entries follow the model's traversal order and include the batch-norm
running statistics.
"""

import logging
import math
import struct
from collections import OrderedDict

import numpy as np

from .conf import get_setting
from .exceptions import CorruptionError, FormatError, IntegrityError, VersionError
from .tensor import Tensor
from .van import assemble, model_layout
from .weights import named_tensors

logger = logging.getLogger(__name__)

MAGIC = b'VANW'
DTYPE_TAGS = {'float32': 0, 'float64': 1}
TAG_DTYPES = {0: np.dtype('<f4'), 1: np.dtype('<f8')}


def encode_checkpoint(model, version=None):
    version = get_setting('CHECKPOINT_VERSION') if version is None else version
    entries = list(named_tensors(model))
    chunks = [MAGIC, struct.pack('<HI', version, len(entries))]
    for name, tensor, _ in entries:
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<BB', DTYPE_TAGS[tensor.precision], tensor.ndim))
        chunks.append(struct.pack(f'<{tensor.ndim}I', *tensor.shape))
        chunks.append(tensor.data.astype(tensor.data.dtype.newbyteorder('<'), copy=False).tobytes())
    return b''.join(chunks)


def save_checkpoint(model, path):
    payload = encode_checkpoint(model)
    with open(path, 'wb') as handle:
        handle.write(payload)
    logger.info(f"Wrote VAN-{model.variant.name} checkpoint to {path} ({len(payload)} bytes)")


class _Reader:
    def __init__(self, payload):
        self.payload = payload
        self.offset = 0

    def take(self, size, what):
        end = self.offset + size
        if end > len(self.payload):
            raise CorruptionError(
                f"Checkpoint truncated while reading {what} "
                f"(need {size} bytes at offset {self.offset}, file has {len(self.payload)})"
            )
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_entries(payload):
    """Parse checkpoint bytes into an ordered name -> Tensor mapping."""
    reader = _Reader(payload)
    if len(payload) < len(MAGIC) or payload[:len(MAGIC)] != MAGIC:
        raise FormatError(f"Not a VAN checkpoint (magic {bytes(payload[:4])!r}, expected {MAGIC!r})")
    reader.take(len(MAGIC), 'magic')
    version, count = reader.unpack('<HI', 'header')
    expected = get_setting('CHECKPOINT_VERSION')
    if version != expected:
        raise VersionError(f"Checkpoint version {version} is not supported (expected {expected})")

    entries = OrderedDict()
    for index in range(count):
        (length,) = reader.unpack('<I', f'name length of entry {index}')
        try:
            name = reader.take(length, f'name of entry {index}').decode('utf-8')
        except UnicodeDecodeError:
            raise FormatError(f"Entry {index} has a name that is not valid UTF-8")
        tag, rank = reader.unpack('<BB', f"header of '{name}'")
        if tag not in TAG_DTYPES:
            raise FormatError(f"Entry '{name}' has unknown dtype tag {tag}")
        if rank == 0:
            raise FormatError(f"Entry '{name}' has rank 0")
        shape = reader.unpack(f'<{rank}I', f"extents of '{name}'")
        dtype = TAG_DTYPES[tag]
        raw = reader.take(dtype.itemsize * math.prod(shape), f"payload of '{name}'")
        if name in entries:
            raise FormatError(f"Duplicate entry '{name}'")
        array = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder('='))
        entries[name] = Tensor.wrap(array, check_finite=False)
        logger.debug(f"Read '{name}' {list(shape)} {dtype.name}")
    if reader.offset != len(payload):
        raise CorruptionError(f"{len(payload) - reader.offset} trailing bytes after the last entry")
    return entries


def read_entries(path):
    with open(path, 'rb') as handle:
        return decode_entries(handle.read())


def check_entries(entries, variant):
    """Raise IntegrityError naming the first tensor that disagrees with ``variant``."""
    layout = model_layout(variant)
    names = list(entries)
    for position, entry in enumerate(layout):
        if position >= len(names):
            raise IntegrityError(f"Checkpoint ends before '{entry.name}'", tensor_name=entry.name)
        name = names[position]
        if name != entry.name:
            raise IntegrityError(
                f"Expected '{entry.name}' at position {position}, found '{name}'", tensor_name=entry.name
            )
        shape = tuple(entries[name].shape)
        if shape != entry.shape:
            raise IntegrityError(
                f"Tensor '{name}' has shape {list(shape)}, VAN-{variant.name} expects {list(entry.shape)}",
                tensor_name=name,
            )
    if len(names) > len(layout):
        extra = names[len(layout)]
        raise IntegrityError(f"Unexpected extra tensor '{extra}'", tensor_name=extra)


def load_checkpoint(path, variant):
    entries = read_entries(path)
    check_entries(entries, variant)
    model = assemble(variant, entries)
    logger.info(f"Loaded VAN-{variant.name} checkpoint from {path}")
    return model
