"""Exception types raised across the package."""


class PeekSchedError(Exception):
    """Base class for all package errors."""


class NotScheduled(PeekSchedError, LookupError):
    pass


class ScheduleError(PeekSchedError, ValueError):
    """A schedule failed validation; ``violation`` carries the report."""

    def __init__(self, violation):
        super().__init__(str(violation))
        self.violation = violation


class InvalidDeadline(PeekSchedError, ValueError):
    pass


class EmptyConfusion(PeekSchedError, ValueError):
    pass


class DimensionError(PeekSchedError, ValueError):
    pass


class EmptyInput(PeekSchedError, ValueError):
    pass


class MissingPriorHint(PeekSchedError, ValueError):
    pass


class InsufficientCorpus(PeekSchedError, ValueError):
    pass


class EmptyGroup(PeekSchedError, ValueError):
    pass


class DuplicateSneakPeek(PeekSchedError, ValueError):
    pass


class BudgetExceeded(PeekSchedError, RuntimeError):
    def __init__(self, candidates: int, budget: int):
        super().__init__(f"{candidates} candidates exceeds oracle budget of {budget}")
        self.candidates = candidates
        self.budget = budget


class IncompleteTrace(PeekSchedError, ValueError):
    pass


class GenError(PeekSchedError, ValueError):
    pass


class UnknownScenario(PeekSchedError, KeyError):
    pass
