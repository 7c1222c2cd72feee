"""Exception hierarchy shared by the library and the CLI."""


class GsepError(Exception):
    """Base class for all errors raised by gsep."""

    exit_code = 2


class ConfigError(GsepError, ValueError):
    """Invalid or inconsistent run configuration."""

    exit_code = 1


class AudioFormatError(GsepError, ValueError):
    pass


class DegenerateSourceError(GsepError, ValueError):
    pass


class CheckpointError(GsepError):
    pass


class DivergenceError(GsepError, FloatingPointError):
    """Training produced a non-finite loss or gradient."""

    exit_code = 3
