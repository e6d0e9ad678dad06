"""
Solver configuration and diagnostics schemas.
"""
from typing import Optional, List, Literal
from pydantic import BaseModel, Field

from sgbh.config import settings
from sgbh.schemas.model import TruncationLevel


class KernelConfig(BaseModel):
    """Representation switching for the Dirichlet heat kernel."""
    image_terms: int = Field(default_factory=lambda: settings.KERNEL_IMAGE_TERMS, ge=1)
    crossover: float = Field(default_factory=lambda: settings.KERNEL_CROSSOVER, gt=0)
    spectral_tol: float = Field(default_factory=lambda: settings.KERNEL_SPECTRAL_TOL, gt=0)
    nu_scaled: bool = Field(default_factory=lambda: settings.KERNEL_NU_SCALED)

    class Config:
        frozen = True


class PicardConfig(BaseModel):
    """Fixed-point iteration settings for the truncated mild equation."""
    trunc: TruncationLevel
    lam: Optional[float] = Field(None, gt=0)  # None selects lambda by the contraction bracket
    tol: float = Field(1e-8, gt=0)
    max_iters: int = Field(25, ge=1)

    class Config:
        frozen = True


class GalerkinConfig(BaseModel):
    """Spectral Galerkin settings."""
    n_modes: int = Field(..., ge=1)
    stepping: Literal["exponential", "implicit"] = "exponential"
    cutoff_level: Optional[float] = Field(None, gt=0)  # eta_n cutoff of the drift nonlinearities

    class Config:
        frozen = True


class PicardTrace(BaseModel):
    """Per-sweep residuals of a Picard solve."""
    lam: float
    residuals: List[float] = []
    unweighted: List[float] = []
    iterations: int = 0
    converged: bool = False

    @property
    def ratios(self) -> List[float]:
        r = self.residuals
        return [r[k + 1] / r[k] for k in range(len(r) - 1) if r[k] > 0]


class StoppingRecord(BaseModel):
    """Exit times of the truncated solutions across the level schedule."""
    levels: List[float] = []
    taus: List[float] = []
    achieved_n: float
    capped: bool = False
    blowup: bool = False
    consistency: List[float] = []  # sup |u^n - u^final| on [0, tau^n]
