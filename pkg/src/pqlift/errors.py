"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid sizes, labels, tolerances or parameters."""


class UnsupportedAssumptionError(ValueError):
    """The assumption lacks a feature an operation needs (e.g. an image verifier)."""


class ContractViolation(RuntimeError):
    """A caller-supplied program broke its declared contract (e.g. adaptivity)."""


class NumericalError(RuntimeError):
    """An internal numerical invariant failed (e.g. all outcome probabilities vanish)."""


class RepairFailure(RuntimeError):
    """Repair exhausted its round cap. Carries the partial state."""

    def __init__(self, message, state=None, rounds=0):
        super().__init__(message)
        self.state = state
        self.rounds = rounds
