"""
Array containers shared by the numerical services.
"""
from typing import Optional, Dict, Any, List

import numpy as np
from pydantic import BaseModel

from sgbh.schemas.grid import SpatialGrid, TimeGrid


class NoiseSheet(BaseModel):
    """
    Discrete Brownian-sheet increments.

    `micro` holds half-cell increments over [q*h/2, (q+1)*h/2], q = 0..2m+1,
    shape (N, 2(m+1)); `increments[i, j]` is the node-centred cell
    [y_j - h/2, y_j + h/2] and equals the sum of its two half cells.
    """
    micro: np.ndarray
    increments: np.ndarray
    tgrid: TimeGrid
    sgrid: SpatialGrid
    seed: Optional[int] = None
    generator: str = "philox-ziggurat"

    class Config:
        arbitrary_types_allowed = True

    @classmethod
    def from_micro(cls, micro: np.ndarray, tgrid: TimeGrid, sgrid: SpatialGrid, **kwargs) -> "NoiseSheet":
        m = sgrid.m
        cells = micro[:, 1:-1].reshape(micro.shape[0], m, 2).sum(axis=2)
        return cls(micro=micro, increments=cells, tgrid=tgrid, sgrid=sgrid, **kwargs)

    @property
    def shape(self) -> tuple:
        return self.increments.shape


class ProjectedWiener(BaseModel):
    """Mode processes W^k(t_i) = sum over cells of sqrt(2) sin(k pi y) dW."""
    paths: np.ndarray  # (N+1, n_modes)
    tgrid: TimeGrid

    class Config:
        arbitrary_types_allowed = True

    @property
    def n_modes(self) -> int:
        return self.paths.shape[1]


class FieldPath(BaseModel):
    """One realization u(t_i, x_j) on the space-time grid."""
    values: np.ndarray  # (N+1, m)
    u0: np.ndarray
    tgrid: TimeGrid
    sgrid: SpatialGrid
    scheme: str
    truncation: Optional[float] = None
    seed: Optional[int] = None
    metadata: Dict[str, Any] = {}

    class Config:
        arbitrary_types_allowed = True

    def at(self, t_index: int) -> np.ndarray:
        return self.values[t_index]


class DerivativeField(BaseModel):
    """D_{r,z}u(t_i, x_j) for one source cell (r_index, z_index)."""
    values: np.ndarray
    r_index: int
    z_index: int
    source_time: float  # midpoint of the source time cell
    tgrid: TimeGrid
    sgrid: SpatialGrid
    method: str = "linearized"
    epsilon: Optional[float] = None

    class Config:
        arbitrary_types_allowed = True


class IntegratedDerivative(BaseModel):
    """v(s, x) = integral over [a, b] of D_{r,z}u(s, x) dz."""
    values: np.ndarray
    r_index: int
    a: float
    b: float
    z_indices: List[int]
    tgrid: TimeGrid
    sgrid: SpatialGrid

    class Config:
        arbitrary_types_allowed = True
