"""Exception hierarchy shared by the demodulation modules and the CLI."""

# Exit codes returned by src.main
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PRECONDITION = 3
EXIT_DEGENERATE = 4
EXIT_IO = 5


class NpsiError(Exception):
    """Base class for every refusal raised by the toolkit."""

    exit_code = EXIT_PRECONDITION


class PreconditionError(NpsiError, ValueError):
    """Inputs violate an operation's precondition (the caller must fix them)."""

    exit_code = EXIT_PRECONDITION


class DegeneracyError(NpsiError):
    """The computation is numerically degenerate for otherwise valid inputs."""

    exit_code = EXIT_DEGENERATE

    def __init__(self, message: str, candidates: list | None = None):
        super().__init__(message)
        # Competing solutions, e.g. two carrier peaks of equal height
        self.candidates = candidates or []


class StackFormatError(NpsiError, OSError):
    """A stack, map or sidecar file could not be read or written."""

    exit_code = EXIT_IO
