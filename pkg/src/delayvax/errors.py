"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`DelayVaxError`, whose ``code`` is the class name. The CLI prints that
code in its machine-readable failure line.
"""


class DelayVaxError(Exception):
    @property
    def code(self) -> str:
        return type(self).__name__


class InvalidTree(DelayVaxError, ValueError):
    pass


class MultipleRoots(InvalidTree):
    pass


class CycleDetected(InvalidTree):
    pass


class DisconnectedNode(InvalidTree):
    pass


class InvalidNodeId(DelayVaxError, IndexError):
    pass


class GenerationBudgetExceeded(DelayVaxError, RuntimeError):
    pass


class NotInSet(DelayVaxError, ValueError):
    pass


class SourceInPlan(DelayVaxError, ValueError):
    pass


class AlreadySelected(DelayVaxError, ValueError):
    pass


class InconsistentUniverse(DelayVaxError, ValueError):
    pass


class BudgetExceedsCandidates(DelayVaxError, ValueError):
    pass


class SourcesNotConnected(DelayVaxError, ValueError):
    pass


class RootNotSource(DelayVaxError, ValueError):
    pass


class SearchSpaceTooLarge(DelayVaxError, ValueError):
    pass


class ConfigInvalid(DelayVaxError, ValueError):
    pass


class IoFailure(DelayVaxError, OSError):
    pass
