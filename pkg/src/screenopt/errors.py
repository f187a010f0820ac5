"""Exception hierarchy shared by all screenopt modules."""


class ScreenoptError(Exception):
    """Base class for all errors raised by this package."""


class DomainViolationError(ScreenoptError):
    """An input point falls outside the declared agent/product/price domain."""


class NonFiniteResultError(ScreenoptError):
    """A utility or profit evaluator returned NaN or infinity."""


class UnattainableUtilityError(ScreenoptError):
    """Requested utility lies outside the attainable range for (x, y)."""


class MonotonicityViolationError(ScreenoptError):
    """Price inversion detected that utility is not strictly decreasing in price."""


class InstanceSchemaError(ScreenoptError):
    """An instance file or payload violates the documented schema.

    ``key`` names the offending field so batch callers can report it.
    """

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class MenuValidationError(ScreenoptError):
    """A menu violates its structural invariants for the given instance."""


class UnorderedGridError(ScreenoptError):
    """No coordinatewise partial order is derivable on the agent grid."""


class InconsistentPriceError(ScreenoptError):
    """Agents assigned the same product carry materially different prices."""


class AssumptionViolationError(ScreenoptError):
    """The instance fails a model assumption that an operation requires."""


class NonFiniteProfitError(ScreenoptError):
    """The solver encountered a non-finite profit; carries the offending item."""

    def __init__(self, message: str, item=None):
        super().__init__(message)
        self.item = item


class BudgetExceededError(ScreenoptError):
    """Enumeration size would exceed the oracle's hard guard."""
