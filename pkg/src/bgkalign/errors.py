"""Exception hierarchy shared by all solver and harness modules."""


class ConfigurationError(ValueError):
    """Invalid grid sizes, parameter ranges, or config file contents (CLI exit 2)."""


class SimulationError(RuntimeError):
    """A run-time check failed during a simulation (CLI exit 1)."""


class StepSizeError(SimulationError):
    """Time step violates the stability bound of a sub-step."""


class TruncationError(SimulationError):
    """The velocity truncation was violated (support breach or boundary mass)."""


class PositivityError(SimulationError):
    """A cell value dropped below the negativity tolerance."""


class BudgetError(SimulationError):
    """The discrete energy budget inequality failed beyond tolerance."""
