"""
Space and time grid schemas.
"""
import numpy as np
from pydantic import BaseModel, Field


class SpatialGrid(BaseModel):
    """Interior nodes x_j = j*h, j = 1..m, of the unit interval; boundary values are zero."""
    m: int = Field(..., ge=3)

    class Config:
        frozen = True

    @property
    def h(self) -> float:
        return 1.0 / (self.m + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.m + 1) * self.h

    def coarsen(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(m=(self.m + 1) // factor - 1)


class TimeGrid(BaseModel):
    """Uniform time nodes t_i = i*dt, i = 0..N."""
    N: int = Field(..., ge=1)
    T: float = Field(..., gt=0)

    class Config:
        frozen = True

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.dt
        t[-1] = self.T
        return t

    def coarsen(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(N=self.N // factor, T=self.T)
