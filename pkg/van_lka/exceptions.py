"""Exception hierarchy shared by every van_lka module."""


class VanLkaError(Exception):
    """Base class for all library errors."""


class ShapeError(VanLkaError):
    """Extents, ranks or precisions do not line up."""


class ParameterError(VanLkaError):
    """A scalar argument is outside its allowed range."""


class GeometryError(VanLkaError):
    """Convolution or stage geometry produces no valid output."""


class ConfigError(VanLkaError):
    """An LKA/VAN configuration is invalid."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class NumericalError(VanLkaError):
    """An operation produced NaN or Inf."""


class ImageError(VanLkaError):
    """An input image cannot be read or has an unsupported layout."""


class CheckpointError(VanLkaError):
    """Base class for checkpoint read failures."""


class FormatError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class IntegrityError(CheckpointError):
    """Checkpoint contents disagree with the variant they are loaded for."""

    def __init__(self, message, tensor_name=None):
        super().__init__(message)
        self.tensor_name = tensor_name


class CorruptionError(CheckpointError):
    pass
