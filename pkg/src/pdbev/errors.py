"""Exception hierarchy.

Config and file-format problems are usage errors (CLI exit status 2);
everything raised while computing on well-formed inputs is a domain
error (exit status 1).
"""


class PdbevError(Exception):
    """Base class for all library errors."""


class ConfigError(PdbevError, ValueError):
    """A configuration file is missing a field or violates an invariant.

    ``field`` is a dotted path such as ``cameras[1].R``.
    """

    def __init__(self, field, message, path=None):
        self.field = field
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{field}: {message}")


class TensorFormatError(PdbevError, ValueError):
    """A tensor file is malformed. ``field`` names the offending part."""

    def __init__(self, field, message, path=None):
        self.field = field
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{field}: {message}")


class DomainError(PdbevError, ValueError):
    """Inputs are well-formed but outside an operation's domain."""


class ShapeError(DomainError):
    """Array shapes are inconsistent."""
