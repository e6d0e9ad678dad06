"""
Noise-coefficient and initial-condition presets.

Presets carry their bounds K and L analytically so the solvers can use
them for lambda selection and the Malliavin linearisation.
"""
from typing import Dict, Any, List, Type

import numpy as np

from sgbh.core.exceptions import ValidationError, raise_validation_error
from sgbh.services.integrations.base import NoiseCoefficient, InitialCondition


class ZeroNoise(NoiseCoefficient):
    """g = 0."""
    name = "zero"

    @property
    def bound_K(self) -> float:
        return 0.0

    @property
    def lipschitz_L(self) -> float:
        return 0.0

    def evaluate(self, t, x, r):
        return np.zeros(np.broadcast(x, r).shape)

    def derivative_in_r(self, t, x, r):
        return np.zeros(np.broadcast(x, r).shape)


class ConstantNoise(NoiseCoefficient):
    """g = sigma (additive noise)."""
    name = "constant"

    def __init__(self, sigma: float = 0.1):
        self.sigma = float(sigma)

    @property
    def bound_K(self) -> float:
        return abs(self.sigma)

    @property
    def lipschitz_L(self) -> float:
        return 0.0

    def evaluate(self, t, x, r):
        return np.full(np.broadcast(x, r).shape, self.sigma)

    def derivative_in_r(self, t, x, r):
        return np.zeros(np.broadcast(x, r).shape)

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "sigma": self.sigma}


class LipschitzSinNoise(NoiseCoefficient):
    """g = sigma (1 + sin(r)/2) sin(pi x)."""
    name = "lipschitz-sin"

    def __init__(self, sigma: float = 0.1):
        self.sigma = float(sigma)

    @property
    def bound_K(self) -> float:
        # 1 + sin(r)/2 ranges over [1/2, 3/2], |sin(pi x)| <= 1
        return 1.5 * abs(self.sigma)

    @property
    def lipschitz_L(self) -> float:
        return 0.5 * abs(self.sigma)

    def evaluate(self, t, x, r):
        return self.sigma * (1.0 + 0.5 * np.sin(r)) * np.sin(np.pi * np.asarray(x))

    def derivative_in_r(self, t, x, r):
        return self.sigma * 0.5 * np.cos(r) * np.sin(np.pi * np.asarray(x))

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "sigma": self.sigma}


class ShiftedSinNoise(NoiseCoefficient):
    """g = sigma (1 + sin(k pi x)), state independent."""
    name = "shifted-sin"

    def __init__(self, sigma: float = 0.1, k: int = 1):
        self.sigma = float(sigma)
        self.k = int(k)

    @property
    def bound_K(self) -> float:
        return 2.0 * abs(self.sigma)

    @property
    def lipschitz_L(self) -> float:
        return 0.0

    def evaluate(self, t, x, r):
        x, r = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(r, dtype=float))
        return self.sigma * (1.0 + np.sin(self.k * np.pi * x))

    def derivative_in_r(self, t, x, r):
        return np.zeros(np.broadcast(x, r).shape)

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "sigma": self.sigma, "k": self.k}


class ClippedNoise(NoiseCoefficient):
    """g = sigma (1 + clip(r, -1, 1)/2); kinks at r = +-1, no closed-form derivative."""
    name = "clipped"

    def __init__(self, sigma: float = 0.1):
        self.sigma = float(sigma)

    @property
    def bound_K(self) -> float:
        return 1.5 * abs(self.sigma)

    @property
    def lipschitz_L(self) -> float:
        return 0.5 * abs(self.sigma)

    def evaluate(self, t, x, r):
        x, r = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(r, dtype=float))
        return self.sigma * (1.0 + 0.5 * np.clip(r, -1.0, 1.0))

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "sigma": self.sigma}


class SwitchNoise(NoiseCoefficient):
    """g = 0 for t < t_switch, sigma afterwards."""
    name = "switch-at-time"

    def __init__(self, sigma: float = 0.2, t_switch: float = 0.25):
        if sigma == 0:
            raise ValidationError("switch preset needs sigma != 0", field="sigma")
        self.sigma = float(sigma)
        self.t_switch = float(t_switch)

    @property
    def bound_K(self) -> float:
        return abs(self.sigma)

    @property
    def lipschitz_L(self) -> float:
        return 0.0

    def is_active(self, t: float) -> bool:
        return t >= self.t_switch

    def evaluate(self, t, x, r):
        value = self.sigma if self.is_active(t) else 0.0
        return np.full(np.broadcast(x, r).shape, value)

    def derivative_in_r(self, t, x, r):
        return np.zeros(np.broadcast(x, r).shape)

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "sigma": self.sigma, "t_switch": self.t_switch}


class ZeroInitial(InitialCondition):
    """u0 = 0."""
    name = "zero"

    def evaluate(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


class ConstantInitial(InitialCondition):
    """u0 = value at every interior node."""
    name = "constant"

    def __init__(self, value: float = 0.1):
        self.value = float(value)

    def evaluate(self, x):
        return np.full(np.shape(x), self.value)

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "value": self.value}


class SineInitial(InitialCondition):
    """u0 = amplitude * sin(k pi x)."""
    name = "sine"

    def __init__(self, amplitude: float = 1.0, k: int = 1):
        self.amplitude = float(amplitude)
        self.k = int(k)

    def evaluate(self, x):
        return self.amplitude * np.sin(self.k * np.pi * np.asarray(x, dtype=float))

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "amplitude": self.amplitude, "k": self.k}


NOISE_PRESETS: Dict[str, Type[NoiseCoefficient]] = {
    cls.name: cls
    for cls in (ZeroNoise, ConstantNoise, LipschitzSinNoise, ShiftedSinNoise, ClippedNoise, SwitchNoise)
}

INITIAL_PRESETS: Dict[str, Type[InitialCondition]] = {
    cls.name: cls for cls in (ZeroInitial, ConstantInitial, SineInitial)
}


def get_noise_coefficient(name: str, **params) -> NoiseCoefficient:
    """Build a noise coefficient from its preset name."""
    if name not in NOISE_PRESETS:
        raise_validation_error(f"unknown noise preset '{name}'", field="noise.preset")
    try:
        return NOISE_PRESETS[name](**params)
    except TypeError as e:
        raise_validation_error(f"bad parameters for noise preset '{name}': {e}", field="noise")


def get_initial_condition(name: str, **params) -> InitialCondition:
    """Build an initial condition from its preset name."""
    if name not in INITIAL_PRESETS:
        raise_validation_error(f"unknown initial preset '{name}'", field="initial.preset")
    try:
        return INITIAL_PRESETS[name](**params)
    except TypeError as e:
        raise_validation_error(f"bad parameters for initial preset '{name}': {e}", field="initial")


def list_presets() -> List[Dict[str, Any]]:
    """Default-parameter descriptions of every preset."""
    rows = [{"kind": "noise", **cls().describe(), "doc": cls.__doc__} for cls in NOISE_PRESETS.values()]
    rows += [{"kind": "initial", **cls().describe(), "doc": cls.__doc__} for cls in INITIAL_PRESETS.values()]
    return rows
