"""Exception types shared across the package.

Each error carries a short machine-readable ``name`` so the CLI can print
``ERR <name>`` on stderr without depending on class hierarchies.
"""


class AdaptMASError(Exception):
    name = "Error"


class DataError(AdaptMASError):
    """Problem with input data (exit code 3 from the CLI)."""

    name = "DataError"


class NonConvergence(DataError):
    name = "NonConvergence"

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"IPF did not converge after {iterations} sweeps (residual {residual:.3e})")


class EmptyCategory(DataError):
    name = "EmptyCategory"


class NoDonor(DataError):
    name = "NoDonor"


class InvalidPrior(DataError):
    name = "InvalidPrior"


class DimensionMismatch(DataError):
    name = "DimensionMismatch"


class InsufficientHistory(DataError):
    name = "InsufficientHistory"


class OutOfBounds(DataError):
    name = "OutOfBounds"


class CycleDetected(DataError):
    name = "CycleDetected"

    def __init__(self, path):
        self.path = list(path)
        super().__init__("cycle: " + " -> ".join(self.path))


class UnknownVariable(DataError):
    name = "UnknownVariable"


class NumericOverflow(DataError):
    name = "NumericOverflow"


class WindowTooLong(DataError):
    name = "WindowTooLong"


class BlockTooLong(DataError):
    name = "BlockTooLong"


class SeriesTooShort(DataError):
    name = "SeriesTooShort"


class TooManyPoints(DataError):
    name = "TooManyPoints"


class SchemaError(AdaptMASError):
    """Config does not match the schema; ``path`` locates the bad field."""

    name = "SchemaError"

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


# Conditions that are flagged on the result and reported as warnings
# rather than aborting the computation.


class AdaptMASWarning(UserWarning):
    pass


class InconsistentMarginals(AdaptMASWarning):
    pass


class DegenerateSeries(AdaptMASWarning):
    pass


class InsufficientData(AdaptMASWarning):
    pass


class DuplicatePoints(AdaptMASWarning):
    pass


class DegenerateComponent(AdaptMASWarning):
    pass


class BudgetExhausted(AdaptMASWarning):
    pass


class ShortSeries(AdaptMASWarning):
    pass
