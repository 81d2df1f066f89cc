"""Exception types shared across the package."""


class UsageError(ValueError):
    """A caller violated an operation's precondition."""


class DataFormatError(ValueError):
    """An input file could not be parsed.

    ``line`` carries the 1-based offending line number when known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class NumericalFailure(RuntimeError):
    """A linear-algebra step degenerated beyond recovery.

    ``iteration`` and ``stage`` locate the failure inside an iterative fit.
    """

    def __init__(self, message, iteration=None, stage=None):
        self.iteration = iteration
        self.stage = stage
        ctx = ""
        if stage is not None:
            ctx += f" [stage={stage}]"
        if iteration is not None:
            ctx += f" [iteration={iteration}]"
        super().__init__(message + ctx)


class FitFailure(RuntimeError):
    """A damped-cosine fit could not produce a usable mode."""


class ExtractionFailure(RuntimeError):
    """No factor column survived modal extraction."""
