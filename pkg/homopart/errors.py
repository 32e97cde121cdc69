"""Exceptions raised by homopart.

Every concrete error is also a ``ValueError`` so callers that only catch the
builtin keep working.
"""


class HomopartError(Exception):
    """Base class of all homopart errors."""


class EmptySubsetError(HomopartError, ValueError):
    def __init__(self, part):
        self.part = part
        super().__init__(f"Subset for part {part} is empty; density is undefined.")


class PartitionError(HomopartError, ValueError):
    pass


class ParameterError(HomopartError, ValueError):
    pass


class InfeasibleParametersError(HomopartError, ValueError):
    pass


class DivisibilityError(HomopartError, ValueError):
    pass


class CoverageError(HomopartError, ValueError):
    """Anchor sampling stopped before the uncovered mass fell under its budget."""

    def __init__(self, uncovered, budget, anchors, target=None):
        self.uncovered = uncovered
        self.budget = budget
        self.anchors = anchors
        self.target = target
        super().__init__(
            f"Anchor cap reached after {anchors} anchors with {uncovered} uncovered "
            f"tuples (budget {budget:.6g}); the instance does not meet the link hypothesis "
            f"at these parameters."
        )


class GenerationError(HomopartError, ValueError):
    def __init__(self, message, statistics=None):
        self.statistics = statistics or {}
        super().__init__(message)


class FormatError(HomopartError, ValueError):
    def __init__(self, path, offset, message):
        self.path = path
        self.offset = offset
        super().__init__(f"{path}: byte offset {offset}: {message}")


class ConfigError(HomopartError, ValueError):
    pass


class VerificationError(HomopartError, AssertionError):
    pass
