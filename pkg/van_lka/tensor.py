"""
Shape-checked N-dimensional arrays.

A ``Tensor`` is an immutable wrapper around a row-major numpy buffer.
Feature maps use (batch, channels, height, width) order. Every public
operation returns a new tensor; buffers handed out are read-only.
"""

import logging

import numpy as np

from .exceptions import NumericalError, ParameterError, ShapeError

logger = logging.getLogger(__name__)

PRECISIONS = {
    'float32': np.float32,
    'float64': np.float64,
}


def resolve_precision(precision):
    """Map a precision name (or numpy dtype) onto a numpy scalar type."""
    if precision is None:
        from .conf import get_setting
        precision = get_setting('DEFAULT_PRECISION')
    if isinstance(precision, str):
        try:
            return PRECISIONS[precision]
        except KeyError:
            raise ParameterError(
                f"Unknown precision '{precision}' (expected one of {', '.join(PRECISIONS)})"
            )
    dtype = np.dtype(precision).type
    if dtype not in (np.float32, np.float64):
        raise ParameterError(f"Unsupported precision {np.dtype(precision).name}")
    return dtype


def check_extents(shape):
    shape = tuple(int(extent) for extent in shape)
    if not shape:
        raise ShapeError("Tensors need at least one extent")
    if any(extent < 1 for extent in shape):
        raise ShapeError(f"Every extent must be >= 1, got {list(shape)}")
    return shape


class Tensor:
    """Immutable N-dimensional float array (32- or 64-bit)."""

    __slots__ = ('_data',)

    def __init__(self, data, precision=None, check_finite=True):
        if isinstance(data, Tensor):
            data = data._data
        dtype = resolve_precision(precision) if precision is not None else None
        array = np.array(data, dtype=dtype, copy=True, order='C')
        if dtype is None:
            if array.dtype not in (np.float32, np.float64):
                array = array.astype(resolve_precision(None))
        if array.ndim == 0:
            raise ShapeError("Tensors need at least one extent")
        check_extents(array.shape)
        if check_finite and not np.isfinite(array).all():
            raise NumericalError("Tensor contains NaN or Inf elements")
        array.flags.writeable = False
        self._data = array

    @classmethod
    def wrap(cls, array, check_finite=True):
        """Adopt a freshly computed array without copying it."""
        tensor = cls.__new__(cls)
        array = np.ascontiguousarray(array)
        if array.ndim == 0:
            raise ShapeError("Tensors need at least one extent")
        check_extents(array.shape)
        if check_finite and not np.isfinite(array).all():
            raise NumericalError("Operation produced NaN or Inf elements")
        array.flags.writeable = False
        tensor._data = array
        return tensor

    @property
    def shape(self):
        return self._data.shape

    @property
    def data(self):
        """Read-only numpy view of the buffer."""
        return self._data

    @property
    def precision(self):
        return self._data.dtype.name

    @property
    def size(self):
        return int(self._data.size)

    @property
    def ndim(self):
        return self._data.ndim

    def astype(self, precision):
        return Tensor.wrap(self._data.astype(resolve_precision(precision)))

    def numpy(self):
        """Writable copy of the buffer."""
        return self._data.copy()

    def equals(self, other):
        """Bitwise equality of shape, precision and contents."""
        return (
            isinstance(other, Tensor)
            and self.shape == other.shape
            and self.precision == other.precision
            and np.array_equal(self._data, other._data)
        )

    def __repr__(self):
        return f"Tensor(shape={list(self.shape)}, precision={self.precision})"


def as_array(value):
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def tensor_filled(shape, value, precision=None):
    shape = check_extents(shape)
    return Tensor.wrap(np.full(shape, value, dtype=resolve_precision(precision)))


def tensor_random_normal(shape, mean=0.0, std=1.0, seed=0, precision=None):
    """
    Deterministic normal samples.

    Samples come from numpy's PCG64 bit generator seeded with ``seed`` and
    its ziggurat ``standard_normal`` transform, drawn in float64, scaled by
    ``std``, shifted by ``mean`` and finally cast to the requested precision.
    """
    if std < 0:
        raise ParameterError(f"Standard deviation must be >= 0, got {std}")
    shape = check_extents(shape)
    generator = np.random.Generator(np.random.PCG64(seed))
    samples = generator.standard_normal(shape) * std + mean
    return Tensor.wrap(samples.astype(resolve_precision(precision)))


def _check_same(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"Shape mismatch: {list(a.shape)} vs {list(b.shape)}")
    if a.precision != b.precision:
        raise ShapeError(f"Precision mismatch: {a.precision} vs {b.precision}")


def elementwise_mul(a, b):
    _check_same(a, b)
    return Tensor.wrap(a.data * b.data)


def elementwise_add(a, b):
    _check_same(a, b)
    return Tensor.wrap(a.data + b.data)


def scale_channels(x, lam):
    """out[n, c, ...] = lam[c] * x[n, c, ...]."""
    lam = as_array(lam).astype(x.data.dtype, copy=False).reshape(-1)
    if x.ndim < 2 or lam.shape[0] != x.shape[1]:
        raise ShapeError(
            f"Scale vector of length {lam.shape[0]} does not match channel extent of {list(x.shape)}"
        )
    view = lam.reshape((1, -1) + (1,) * (x.ndim - 2))
    return Tensor.wrap(x.data * view)
