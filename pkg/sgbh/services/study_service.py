"""
Study service - Monte Carlo and refinement experiments built on the solvers.
"""
import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from sgbh.config import settings
from sgbh.core.exceptions import ValidationError
from sgbh.schemas.grid import SpatialGrid, TimeGrid
from sgbh.schemas.model import ModelParams
from sgbh.schemas.reports import (
    ComparisonReport,
    DichotomyObservation,
    DichotomyReport,
    OrderReport,
    SweepResult,
)
from sgbh.schemas.solver import GalerkinConfig, PicardConfig
from sgbh.services.analysis_service import kde_density
from sgbh.services.ensemble_service import EnsembleRunner
from sgbh.services.integrations.base import InitialCondition, NoiseCoefficient
from sgbh.services.kernel_service import KernelService
from sgbh.services.noise_service import coarsen_sheet, sample_sheet
from sgbh.services.solver_service import build_solver, solve_path

logger = logging.getLogger(__name__)

EXACT_FLOOR = 1e-14


def exact_picard(config: PicardConfig, tgrid: TimeGrid) -> PicardConfig:
    """Sweep count that reaches the discrete fixed point bitwise."""
    return PicardConfig(trunc=config.trunc, lam=config.lam, tol=1e-15, max_iters=tgrid.N + 2)


class StudyService:
    """Service for ensemble studies on one model and grid."""

    def __init__(
        self,
        params: ModelParams,
        tgrid: TimeGrid,
        sgrid: SpatialGrid,
        noise: NoiseCoefficient,
        scheme: str = "picard",
        picard: Optional[PicardConfig] = None,
        galerkin: Optional[GalerkinConfig] = None,
        runner: Optional[EnsembleRunner] = None,
        kernels: Optional[KernelService] = None,
    ):
        self.params = params
        self.tgrid = tgrid
        self.sgrid = sgrid
        self.noise = noise
        self.scheme = scheme
        self.picard = picard
        self.galerkin = galerkin
        self.runner = runner or EnsembleRunner()
        if scheme != "galerkin" and picard is None:
            raise ValidationError("picard settings required for mild-equation schemes", field="picard")
        self.solver = build_solver(scheme, params, tgrid, sgrid, noise, kernels=kernels)

    def solve(self, u0: np.ndarray, sheet, picard: Optional[PicardConfig] = None):
        return solve_path(self.solver, self.scheme, u0, sheet, picard or self.picard, self.galerkin)

    def comparison_check(
        self,
        u0: np.ndarray,
        v0: np.ndarray,
        seeds: Sequence[int],
        tol: Optional[float] = None,
        middle: Optional[np.ndarray] = None,
    ) -> ComparisonReport:
        """
        Coupled solves from ordered initial data; counts cells where the order breaks by more than tol.

        With `middle` the three-way ordering u <= w <= v is checked.
        """
        u0, v0 = np.asarray(u0, dtype=float), np.asarray(v0, dtype=float)
        ordered = [u0] + ([np.asarray(middle, dtype=float)] if middle is not None else []) + [v0]
        for lower, upper in zip(ordered, ordered[1:]):
            if np.any(lower > upper):
                raise ValidationError("initial data must be ordered pointwise", field="initial")
        slack = settings.COMPARISON_SLACK * (self.sgrid.h ** 2 + np.sqrt(self.tgrid.dt))

        def worker(seed: int):
            sheet = sample_sheet(seed, self.tgrid, self.sgrid)
            paths = [self.solve(ic, sheet).values for ic in ordered]
            scale = max(float(np.max(np.abs(p))) for p in paths)
            cell_tol = tol if tol is not None else slack * scale
            excess = np.concatenate([(lo - hi).ravel() for lo, hi in zip(paths, paths[1:])])
            return int(np.sum(excess > cell_tol)), float(max(excess.max(), 0.0)), cell_tol

        results = self.runner.map(worker, seeds)
        report = ComparisonReport(
            paths=len(results),
            violation_cells=sum(r[0] for _, r in results),
            max_violation=max(r[1] for _, r in results),
            tol=max(r[2] for _, r in results),
            pairs=len(ordered) - 1,
            seeds=[s for s, _ in results],
        )
        if report.violation_cells:
            logger.warning(f"Comparison: {report.violation_cells} cells out of order (max {report.max_violation:.3e})")
        return report

    def sample_point(self, u0: np.ndarray, seeds: Sequence[int], rows: Sequence[int], column: int) -> np.ndarray:
        """u(t_row, x_column) for every seed, shape (len(seeds), len(rows))."""
        picard = exact_picard(self.picard, self.tgrid) if self.scheme != "galerkin" else None

        def worker(seed: int):
            path = self.solve(u0, sample_sheet(seed, self.tgrid, self.sgrid), picard)
            return path.values[list(rows), column]

        return np.array([r for _, r in self.runner.map(worker, seeds)])

    def dichotomy_experiment(
        self, u0: np.ndarray, t_obs: Sequence[float], x_obs: float, seeds: Sequence[int]
    ) -> DichotomyReport:
        """Atom or density of u(t_obs, x_obs) depending on whether the noise has acted before t_obs."""
        t_nodes, x_nodes = self.tgrid.nodes, self.sgrid.nodes
        rows = [int(np.argmin(np.abs(t_nodes - t))) for t in t_obs]
        column = int(np.argmin(np.abs(x_nodes - x_obs)))
        samples = self.sample_point(u0, seeds, rows, column)

        observations = []
        for idx, row in enumerate(rows):
            acted = any(self.noise.is_active(t_nodes[k]) for k in range(row))
            estimate = kde_density(samples[:, idx])
            observations.append(DichotomyObservation(
                t_obs=float(t_nodes[row]), noise_acted=acted, atom_detected=estimate.atom_detected,
                variance=estimate.variance, integral=estimate.integral,
            ))
        after = [o.variance for o in sorted(observations, key=lambda o: o.t_obs) if o.noise_acted]
        report = DichotomyReport(
            t_switch=getattr(self.noise, "t_switch", None), x_obs=float(x_nodes[column]),
            paths=len(seeds), observations=observations,
            variance_nondecreasing=all(b >= a for a, b in zip(after, after[1:])) if after else None,
        )
        if not report.consistent:
            logger.warning("Dichotomy: atom status does not follow the noise schedule")
        return report


def _sweep(steps: List[float], errors: List[float]) -> SweepResult:
    exact = all(e < EXACT_FLOOR for e in errors)
    monotone = all(b < a for a, b in zip(errors, errors[1:]))
    order = None
    if not exact and all(e > 0 for e in errors):
        order = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
    if not monotone and not exact:
        logger.warning(f"Non-monotone error sequence {errors}")
    return SweepResult(steps=steps, errors=errors, order=order, monotone=monotone or exact, exact=exact)


def convergence_study(
    params: ModelParams,
    noise: NoiseCoefficient,
    initial: InitialCondition,
    scheme: str,
    m_finest: int,
    N_finest: int,
    levels: int = 3,
    seed: int = 0,
    picard: Optional[PicardConfig] = None,
    galerkin_modes: Optional[int] = None,
    exact: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
) -> OrderReport:
    """
    Observed spatial and temporal orders under coupled noise.

    Coarse sheets are sums of the finest sheet. Without an `exact`
    solution u(t, x) errors are measured against the finest level.
    Spatial errors are taken at t = T; temporal ones over all shared time
    nodes.
    """
    if levels < 3:
        raise ValidationError("convergence study needs at least 3 levels", field="levels")
    factor = 2 ** (levels - 1)
    if (m_finest + 1) % factor or N_finest % factor:
        raise ValidationError(f"finest grid must be divisible by {factor}", field="grid")
    if (m_finest + 1) // factor - 1 < 3:
        raise ValidationError("coarsest spatial grid needs m >= 3", field="grid")
    T = params.T
    fine_t, fine_s = TimeGrid(N=N_finest, T=T), SpatialGrid(m=m_finest)
    fine_sheet = sample_sheet(seed, fine_t, fine_s)
    kernels = KernelService()

    def run(tgrid: TimeGrid, sgrid: SpatialGrid, sheet) -> np.ndarray:
        solver = build_solver(scheme, params, tgrid, sgrid, noise, kernels=kernels)
        galerkin = GalerkinConfig(n_modes=min(galerkin_modes or sgrid.m, sgrid.m))
        return solve_path(solver, scheme, initial.evaluate(sgrid.nodes), sheet, picard, galerkin).values

    # spatial sweep at the finest time step
    h_steps, h_errors, reference = [], [], None
    for level in range(levels):
        f = 2 ** level
        sgrid = SpatialGrid(m=(m_finest + 1) // f - 1)
        values = run(fine_t, sgrid, coarsen_sheet(fine_sheet, 1, f) if f > 1 else fine_sheet)
        if exact is not None:
            h_steps.append(sgrid.h)
            h_errors.append(float(np.max(np.abs(values[-1] - exact(T, sgrid.nodes)))))
        elif level == 0:
            reference = values[-1]
        else:
            h_steps.append(sgrid.h)
            h_errors.append(float(np.max(np.abs(values[-1] - reference[f - 1::f]))))

    # temporal sweep at the finest mesh
    t_steps, t_errors, reference = [], [], None
    for level in range(levels):
        f = 2 ** level
        tgrid = TimeGrid(N=N_finest // f, T=T)
        values = run(tgrid, fine_s, coarsen_sheet(fine_sheet, f, 1) if f > 1 else fine_sheet)
        if exact is not None:
            t_steps.append(tgrid.dt)
            grid_t = tgrid.nodes[:, None]
            t_errors.append(float(np.max(np.abs(values - exact(grid_t, fine_s.nodes[None, :])))))
        elif level == 0:
            reference = values
        else:
            t_steps.append(tgrid.dt)
            t_errors.append(float(np.max(np.abs(values - reference[::f]))))

    report = OrderReport(
        reference="exact" if exact is not None else "finest",
        spatial=_sweep(h_steps[::-1], h_errors[::-1]),
        temporal=_sweep(t_steps[::-1], t_errors[::-1]),
        meta={"m_finest": m_finest, "N_finest": N_finest, "levels": levels, "seed": seed},
    )
    logger.info(f"Convergence ({scheme}): spatial order {report.spatial.order}, temporal order {report.temporal.order}")
    return report
