"""Exception types shared across the package.

Each failure mode named by a module contract gets its own class so callers
(and the CLI, which maps them to exit codes) can react specifically instead
of parsing messages.
"""


class FermibornError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(FermibornError, ValueError):
    """A caller violated an operation's precondition (bad shape, index, value)."""


class NumericalConsistencyError(FermibornError, ArithmeticError):
    """An internal numerical identity failed beyond tolerance.

    Raised e.g. when the imaginary residue of a Z-string expectation exceeds
    1e-9, which indicates a sign bug rather than harmless roundoff.
    """


class LocalityLimitError(FermibornError, ValueError):
    """A Z-string is longer than the configured locality cutoff."""


class SamplingFailureError(FermibornError, RuntimeError):
    """Rejection sampling failed to produce enough accepted draws."""


class GenerationFailureError(FermibornError, RuntimeError):
    """A dataset generator's rejection rate exceeded its failure threshold."""


class TrainingAbortError(FermibornError, RuntimeError):
    """Training hit a non-recoverable numerical condition (non-finite gradient).

    Carries the history accumulated before the abort so partial progress is
    not lost.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history


class DegenerateBandwidthError(FermibornError, ValueError):
    """The median heuristic found no pair of distinct rows to measure."""


class DecompositionError(FermibornError, ArithmeticError):
    """An orthogonal-matrix decomposition lost orthogonality beyond tolerance."""


class DatasetFormatError(FermibornError, ValueError):
    """A dataset file is malformed; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
