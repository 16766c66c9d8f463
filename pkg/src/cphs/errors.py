"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated an operation's preconditions."""


class DomainError(ValueError):
    """A numeric argument lies outside the operation's domain."""


class EmptyContextError(ContractError):
    """A context predicate matched no records."""


class ConstructionError(RuntimeError):
    """An object could not be built within its configured budget."""


class TrainingError(RuntimeError):
    """Adversarial training diverged."""

    def __init__(self, message, epoch):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class StageError(RuntimeError):
    """A design-loop stage failed."""

    def __init__(self, stage, iteration, cause):
        super().__init__(f"stage {stage!r} failed at iteration {iteration}: {cause}")
        self.stage = stage
        self.iteration = iteration
        self.cause = cause
