"""
Noise service - discrete Brownian sheet on the space-time grid.

Every time row i draws from its own Philox stream (key = seed, counter
block = i), so a row is reproducible regardless of which rows were drawn
before it. Rows hold half-cell increments; node-centred cell increments
are sums of two half cells, which lets a fine sheet be summed onto a
coarser grid without re-sampling.
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np

from sgbh.core.exceptions import GridMismatchError, ValidationError
from sgbh.schemas.fields import NoiseSheet, ProjectedWiener
from sgbh.schemas.grid import SpatialGrid, TimeGrid

logger = logging.getLogger(__name__)

GENERATOR = "philox-ziggurat"
_HEADER = np.dtype("<i8")
_BODY = np.dtype("<f8")


def _row_stream(seed: int, row: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=row << 128))


def sample_sheet(seed: int, tgrid: TimeGrid, sgrid: SpatialGrid) -> NoiseSheet:
    """Independent Normal(0, dt*h) cell increments, a pure function of (seed, grids)."""
    if seed < 0:
        raise ValidationError("seed must be non-negative", field="seed")
    width = 2 * (sgrid.m + 1)
    scale = np.sqrt(tgrid.dt * sgrid.h / 2.0)
    micro = np.empty((tgrid.N, width))
    for i in range(tgrid.N):
        micro[i] = scale * _row_stream(seed, i).standard_normal(width)
    micro.setflags(write=False)
    sheet = NoiseSheet.from_micro(micro, tgrid, sgrid, seed=seed, generator=GENERATOR)
    sheet.increments.setflags(write=False)
    return sheet


def zero_sheet(tgrid: TimeGrid, sgrid: SpatialGrid) -> NoiseSheet:
    micro = np.zeros((tgrid.N, 2 * (sgrid.m + 1)))
    return NoiseSheet.from_micro(micro, tgrid, sgrid, seed=None, generator="zero")


def walsh_integral(weights: np.ndarray, sheet: NoiseSheet) -> float:
    """sum_{i,j} w[i, j] dW[i, j]."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != sheet.shape:
        raise GridMismatchError("weights", sheet.shape, weights.shape)
    return float(np.sum(weights * sheet.increments))


def sine_basis(n_modes: int, sgrid: SpatialGrid) -> np.ndarray:
    """Phi[k-1, j] = sqrt(2) sin(k pi x_j)."""
    k = np.arange(1, n_modes + 1)[:, None]
    return np.sqrt(2.0) * np.sin(k * np.pi * sgrid.nodes[None, :])


def project_modes(sheet: NoiseSheet, n_modes: int) -> ProjectedWiener:
    """Cumulative mode projections W^k(t_i) of the sheet; W^k(0) = 0."""
    if n_modes < 1 or n_modes > sheet.sgrid.m:
        raise ValidationError(f"n_modes must lie in [1, {sheet.sgrid.m}]", field="n_modes")
    increments = sheet.increments @ sine_basis(n_modes, sheet.sgrid).T
    paths = np.zeros((sheet.tgrid.N + 1, n_modes))
    np.cumsum(increments, axis=0, out=paths[1:])
    return ProjectedWiener(paths=paths, tgrid=sheet.tgrid)


def bump_sheet(sheet: NoiseSheet, r_index: int, z_index: int, epsilon: float) -> NoiseSheet:
    """
    Copy of `sheet` with dW[r, z] shifted by epsilon*dt*h.

    This is a Cameron-Martin shift of constant density epsilon on one cell;
    the two half cells of (r, z) each take half of it. Other cells are
    untouched.
    """
    N, m = sheet.shape
    if not (0 <= r_index < N and 0 <= z_index < m):
        raise ValidationError(f"cell ({r_index}, {z_index}) outside grid {N}x{m}", field="cell")
    shift = epsilon * sheet.tgrid.dt * sheet.sgrid.h
    micro = np.array(sheet.micro)
    micro[r_index, 2 * z_index + 1] += shift / 2.0
    micro[r_index, 2 * z_index + 2] += shift / 2.0
    increments = np.array(sheet.increments)
    increments[r_index, z_index] += shift
    return NoiseSheet(
        micro=micro, increments=increments, tgrid=sheet.tgrid, sgrid=sheet.sgrid,
        seed=sheet.seed, generator=sheet.generator,
    )


def coarsen_sheet(sheet: NoiseSheet, time_factor: int = 2, space_factor: int = 2) -> NoiseSheet:
    """Sum a sheet onto the grid (N / time_factor, (m + 1) / space_factor - 1)."""
    N, m = sheet.shape
    if N % time_factor or (m + 1) % space_factor:
        raise ValidationError(
            f"grid {N}x{m} cannot be coarsened by ({time_factor}, {space_factor})", field="grid"
        )
    tgrid = TimeGrid(N=N // time_factor, T=sheet.tgrid.T)
    sgrid = SpatialGrid(m=(m + 1) // space_factor - 1)
    micro = sheet.micro.reshape(tgrid.N, time_factor, -1).sum(axis=1)
    micro = micro.reshape(tgrid.N, -1, space_factor).sum(axis=2)
    return NoiseSheet.from_micro(micro, tgrid, sgrid, seed=sheet.seed, generator=sheet.generator)


def export_sheet(sheet: NoiseSheet, path: Union[str, Path]) -> Path:
    """Flat binary: int64 header (N, m), then increments row-major as float64."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(np.array(sheet.shape, dtype=_HEADER).tobytes())
        fh.write(np.ascontiguousarray(sheet.increments, dtype=_BODY).tobytes())
    logger.debug(f"Wrote noise sheet {sheet.shape} to {path}")
    return path


def import_sheet(path: Union[str, Path], T: float, seed: int = None) -> NoiseSheet:
    """Read a sheet written by export_sheet; each cell is split evenly over its half cells."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValidationError("file too short for a sheet header", field="path")
    N, m = (int(v) for v in np.frombuffer(raw[:16], dtype=_HEADER))
    body = np.frombuffer(raw[16:], dtype=_BODY)
    if body.size != N * m:
        raise GridMismatchError("sheet body", (N * m,), (body.size,))
    cells = body.reshape(N, m)
    micro = np.zeros((N, 2 * (m + 1)))
    micro[:, 1:-1] = np.repeat(cells / 2.0, 2, axis=1)
    tgrid, sgrid = TimeGrid(N=N, T=T), SpatialGrid(m=m)
    return NoiseSheet(micro=micro, increments=cells.copy(), tgrid=tgrid, sgrid=sgrid,
                      seed=seed, generator="imported")
