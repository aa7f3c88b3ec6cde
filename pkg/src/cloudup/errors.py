"""Error taxonomy shared across the package.

All errors derive from ValueError so careless callers still get something
sensible; the CLI maps them onto exit codes.
"""


class CloudUpError(ValueError):
    """Base class for all package errors."""


class RangeError(CloudUpError):
    """An argument is outside its allowed range (counts, factors, sizes)."""


class ShapeError(CloudUpError):
    """Array shapes are incompatible with the requested operation."""


class ContractError(CloudUpError):
    """An input violates a documented precondition (bad normals, non-simplex
    weights, non-scalar loss, unsupported surface)."""


class DegenerateCloudError(CloudUpError):
    """A point cloud is degenerate for the requested operation, e.g. all
    points coincide so the unit-sphere scale would be zero."""


class ConfigError(CloudUpError):
    """A configuration file or flag set is invalid (unknown key, bad value)."""


class XYZParseError(CloudUpError):
    """A point cloud text file could not be parsed. Carries the 1-based
    line number of the offending line."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")
