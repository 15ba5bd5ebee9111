"""
Exception hierarchy shared by the optimiser, the harness and the CLI.
The CLI maps each class to an exit code (config 2, numerical 3).
"""

from typing import Optional, Sequence


class ALOQError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(ALOQError, ValueError):
    """Invalid run, experiment or environment configuration"""


class DomainError(ALOQError, ValueError):
    """Input outside the unit box, non-finite input, or θ off the task support"""


class NumericalError(ALOQError, RuntimeError):
    """Factorization or sampler failure"""

    def __init__(self, message: str, jitter_ladder: Optional[Sequence[float]] = None,
                 coordinate: Optional[int] = None):
        super().__init__(message)
        self.jitter_ladder = list(jitter_ladder) if jitter_ladder is not None else None
        self.coordinate = coordinate


class SimulatorError(ALOQError, RuntimeError):
    """A task evaluation failed for a specific (π, θ)"""

    def __init__(self, message: str, pi=None, theta=None):
        super().__init__(f"{message} (pi={list(pi) if pi is not None else None}, "
                         f"theta={list(theta) if theta is not None else None})")
        self.pi = pi
        self.theta = theta
