"""Exception types shared across the package."""


class TreeBsdeError(Exception):
    """Base class for all package errors."""


class OffGridError(TreeBsdeError):
    """A requested time does not coincide with a grid instant."""


class TreeSizeError(TreeBsdeError):
    """Tree construction would exceed the configured node cap."""


class SchemaError(TreeBsdeError):
    """A serialized tree or a config file violates the expected schema."""


class InvariantViolationError(TreeBsdeError):
    """A structural invariant (probability sums, measurability, ...) fails."""


class NotAMartingaleError(TreeBsdeError):
    """Input process fails the martingale check; carries the worst node defect."""

    def __init__(self, message: str, step: int = -1, node: int = -1, defect: float = 0.0):
        super().__init__(message)
        self.step = step
        self.node = node
        self.defect = defect


class ClassificationError(TreeBsdeError):
    """A process does not belong to the class the caller asserted (e.g. supermartingale)."""


class StepSizeError(TreeBsdeError):
    """The time step violates a solver precondition such as dt * L_y < 1."""


class PicardDivergenceError(TreeBsdeError):
    """A fixed-point iteration failed to converge; carries the iteration trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class GeneratorContractError(TreeBsdeError):
    """A generator violates its declared Lipschitz constants."""


class DepthCapError(TreeBsdeError):
    """A brute-force enumeration was requested beyond its configured depth cap."""


class MeasureChangeError(TreeBsdeError):
    """The Girsanov positivity precondition fails for the supplied integrand."""
