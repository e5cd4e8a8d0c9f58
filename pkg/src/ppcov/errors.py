"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class PpcovError(Exception):
    """Base class for all errors raised by this package."""


class InputDataError(PpcovError):
    """Bad input: unreadable files, malformed records, inconsistent meshes,
    points outside the window, invalid configuration values. CLI exit code 2."""


class NumericalError(PpcovError):
    """Numeric failure: degenerate data, vanishing integrals, bandwidths that
    cannot be selected or are too large for the window. CLI exit code 3."""
