"""
Base interfaces for noise coefficients and initial conditions.
Abstract base classes the solvers program against.
"""
from abc import ABC, abstractmethod
from typing import Optional, Dict, Any

import numpy as np


class NoiseCoefficient(ABC):
    """
    Multiplicative noise coefficient g(t, x, r).

    Implementations must be measurable, bounded by `bound_K` and Lipschitz
    in r with constant `lipschitz_L`. `evaluate` is vectorised: t is a
    scalar, x and r are arrays broadcast against each other.
    """

    name: str = "noise"

    @property
    @abstractmethod
    def bound_K(self) -> float:
        """Uniform bound on |g|."""
        pass

    @property
    @abstractmethod
    def lipschitz_L(self) -> float:
        """Lipschitz constant of g in r."""
        pass

    @abstractmethod
    def evaluate(self, t: float, x, r) -> np.ndarray:
        """g(t, x, r)."""
        pass

    def derivative_in_r(self, t: float, x, r) -> Optional[np.ndarray]:
        """dg/dr(t, x, r), or None when g is not differentiable in closed form."""
        return None

    @property
    def differentiable(self) -> bool:
        return type(self).derivative_in_r is not NoiseCoefficient.derivative_in_r

    def is_active(self, t: float) -> bool:
        """False on time ranges where g vanishes identically."""
        return self.bound_K > 0

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "K": self.bound_K, "L": self.lipschitz_L}


class InitialCondition(ABC):
    """Initial datum u0 evaluated on interior nodes."""

    name: str = "initial"

    @abstractmethod
    def evaluate(self, x) -> np.ndarray:
        pass

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name}
