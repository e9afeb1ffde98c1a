"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2 (usage),
NumericalError -> 3 (numerical failure).  Verdict failures are not
exceptions; they travel inside reports.
"""


class SliceLabError(Exception):
    """Base class for all package errors."""


class ConfigError(SliceLabError):
    """Bad user input: unknown preset, malformed config, empty sweep."""


class DomainError(SliceLabError):
    """A coordinate or parameter left its admissible range."""


class NonHyperbolicError(SliceLabError):
    """The temporal flux derivative is not strictly positive on the lattice."""


class MeshMismatchError(SliceLabError):
    """Two slice fields live on different meshes or times."""


class NumericalError(SliceLabError):
    """NaN/overflow, root-finding failure, or a violated stability bound."""
