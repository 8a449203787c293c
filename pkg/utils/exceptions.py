"""Error types raised by the unlearning lab core.

Management commands map these onto process exit codes:
ConfigError (and subclasses) and StateError -> 1, NumericDivergenceError -> 3.
"""


class UnlearnLabError(Exception):
    """Base class for every error raised by the lab."""


class ConfigError(UnlearnLabError):
    """Invalid configuration, request or parameter combination."""


class DomainError(ConfigError):
    """Non-finite input, or a sample outside the declared data domain."""


class CertificationError(ConfigError):
    """A precondition of a sensitivity bound does not hold.

    The message always names the violated inequality so that a caller can
    report it verbatim.
    """


class StateError(UnlearnLabError):
    """An operation was called on an object in the wrong state."""


class NumericDivergenceError(UnlearnLabError):
    """An iterate became non-finite or left the divergence limit."""

    def __init__(self, step: int, norm: float, role: str = ""):
        self.step = step
        self.norm = norm
        self.role = role
        where = f" ({role})" if role else ""
        super().__init__(f"numeric divergence at step {step}{where}: ||theta|| = {norm:.6g}")
