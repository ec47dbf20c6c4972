"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the physical domain of an operation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class IntegrationDiverged(RuntimeError):
    def __init__(self, step, value):
        self.step = step
        self.value = value
        super().__init__(f"integration diverged at step {step} (|x| = {value:.3e} m)")


class InsufficientData(ValueError):
    pass


class FitFailed(RuntimeError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class ScenarioError(RuntimeError):
    """A module error raised while running a scenario, tagged with where it happened."""

    def __init__(self, scenario, where, cause):
        self.scenario = scenario
        self.where = where
        self.cause = cause
        super().__init__(f"{scenario} ({where}): {type(cause).__name__}: {cause}")
