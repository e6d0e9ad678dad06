"""
Solver service - pathwise solutions of the stochastic Burgers-Huxley equation.

MildSolver iterates the discrete mild equation (kernel quadrature in time
and space, left-endpoint nonlinearities and noise coefficient, truncation
applied per time slice). GalerkinSolver steps sine-mode coefficients with
an exact or implicit linear part. Both consume the same NoiseSheet.
"""
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

from sgbh.config import settings
from sgbh.core.exceptions import (
    ConvergenceError,
    GridMismatchError,
    NonFiniteError,
    ValidationError,
    ensure_finite,
    raise_grid_mismatch,
)
from sgbh.schemas.fields import FieldPath, NoiseSheet
from sgbh.schemas.grid import SpatialGrid, TimeGrid
from sgbh.schemas.model import ModelParams, TruncationLevel
from sgbh.schemas.solver import (
    GalerkinConfig,
    KernelConfig,
    PicardConfig,
    PicardTrace,
    StoppingRecord,
)
from sgbh.services.integrations.base import NoiseCoefficient
from sgbh.services.kernel_service import KernelService, KernelTable
from sgbh.services.model_service import (
    advection_nonlinearity,
    lp_norm,
    reaction_expanded,
    reaction_nonlinearity,
    truncate_field,
    truncated_nonlinearities,
)
from sgbh.services.noise_service import sine_basis

logger = logging.getLogger(__name__)


def check_sheet(sheet: NoiseSheet, tgrid: TimeGrid, sgrid: SpatialGrid) -> None:
    expected = (tgrid.N, sgrid.m)
    if sheet.shape != expected or sheet.tgrid != tgrid:
        raise_grid_mismatch("noise sheet", expected, sheet.shape)


def check_initial(u0: np.ndarray, sgrid: SpatialGrid) -> np.ndarray:
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (sgrid.m,):
        raise_grid_mismatch("initial condition", (sgrid.m,), u0.shape)
    ensure_finite(u0[None, :], "initial condition")
    return u0


def contraction_bracket(lam: float, delta: int, p: float, theta: float) -> float:
    """Sum of the Gamma-function terms bounding the contraction factor at weight lam."""
    a, b = delta / (2.0 * p), delta / p
    return (
        gamma_fn(1.0 - a) / lam ** (1.0 - a)
        + 1.0 / lam
        + gamma_fn(1.0 - b) / lam ** (1.0 - b)
        + gamma_fn(0.5 - b) / lam ** (0.5 - b)
        + gamma_fn(0.5 - theta) / lam ** (0.5 - theta)
    )


def lipschitz_estimate(params: ModelParams, trunc: TruncationLevel, noise: NoiseCoefficient) -> float:
    """Drift plus noise Lipschitz constant on the amplitude-n ball."""
    n, d, g = trunc.n, params.delta, params.gamma
    reaction = (1.0 + g) * (d + 1) * n ** d + g + (2 * d + 1) * n ** (2 * d)
    advection = (d + 1) * n ** d
    return params.beta * reaction + params.alpha / (d + 1) * advection + noise.lipschitz_L


class MildSolver:
    """Picard iteration for the truncated discrete mild equation."""

    def __init__(
        self,
        params: ModelParams,
        tgrid: TimeGrid,
        sgrid: SpatialGrid,
        noise: NoiseCoefficient,
        table: Optional[KernelTable] = None,
        kernel_config: Optional[KernelConfig] = None,
    ):
        if abs(tgrid.T - params.T) > 1e-12 * params.T:
            raise ValidationError(f"time grid horizon {tgrid.T} differs from T={params.T}", field="T")
        self.params = params
        self.tgrid = tgrid
        self.sgrid = sgrid
        self.noise = noise
        if table is not None and not table.matches(tgrid, sgrid):
            raise GridMismatchError("kernel table", (tgrid.N, sgrid.m), (table.tgrid.N, table.sgrid.m))
        self.table = table or KernelTable(params.nu, tgrid, sgrid, kernel_config)

    # -- building blocks -------------------------------------------------

    def noise_forcing(self, values: np.ndarray, sheet: NoiseSheet,
                      noise: Optional[NoiseCoefficient] = None) -> np.ndarray:
        """g(s_k, y, values_k) dW_k for k = 0..N-1."""
        noise = noise or self.noise
        x, t = self.sgrid.nodes, self.tgrid.nodes
        out = np.zeros((self.tgrid.N, self.sgrid.m))
        for k in range(self.tgrid.N):
            if noise.is_active(t[k]):
                out[k] = noise.evaluate(t[k], x, values[k]) * sheet.increments[k]
        return out

    def drift(self, values: np.ndarray) -> np.ndarray:
        """beta * (reaction term) + alpha/(delta+1) * (advection term), nonlinearities at `values`."""
        prm = self.params
        out = np.zeros_like(values)
        if prm.beta:
            out += prm.beta * self.table.heat_convolve(reaction_expanded(values, prm.gamma, prm.delta))
        if prm.alpha:
            out += prm.alpha / (prm.delta + 1) * self.table.advect_convolve(
                advection_nonlinearity(values, prm.delta)
            )
        return out

    def _map(self, values: np.ndarray, smooth: np.ndarray, sheet: NoiseSheet, trunc: TruncationLevel) -> np.ndarray:
        v = truncate_field(values, trunc, self.sgrid.h)
        return smooth + self.drift(v) + self.table.noise_convolve(self.noise_forcing(v, sheet))

    def apply_A(self, u: FieldPath, sheet: NoiseSheet, trunc: TruncationLevel) -> FieldPath:
        """One application of the mild map to a whole space-time field."""
        check_sheet(sheet, self.tgrid, self.sgrid)
        if u.values.shape != (self.tgrid.N + 1, self.sgrid.m):
            raise GridMismatchError("field", (self.tgrid.N + 1, self.sgrid.m), u.values.shape)
        ensure_finite(u.values, "apply_A input")
        u0 = check_initial(u.u0, self.sgrid)
        values = self._map(u.values, self.table.smooth_initial(u0), sheet, trunc)
        return FieldPath(values=values, u0=u0, tgrid=self.tgrid, sgrid=self.sgrid,
                         scheme="mild-map", truncation=trunc.n, seed=sheet.seed)

    # -- lambda ---------------------------------------------------------

    def choose_lambda(self, trunc: TruncationLevel) -> float:
        """Smallest weight whose estimated contraction factor reaches CONTRACTION_TARGET, capped at LAMBDA_MAX_T / T."""
        theta = settings.HOLDER_EXPONENT
        if not 0.0 < theta < 0.5:
            raise ValidationError("Holder exponent must lie in (0, 1/2)", field="HOLDER_EXPONENT")
        trunc.check_exponent(self.params.delta)
        C = lipschitz_estimate(self.params, trunc, self.noise)
        lam_cap = settings.LAMBDA_MAX_T / self.tgrid.T
        if C == 0.0:
            return 1.0 / self.tgrid.T

        def excess(lam):
            return C * contraction_bracket(lam, self.params.delta, trunc.p, theta) - settings.CONTRACTION_TARGET

        if excess(lam_cap) > 0:
            logger.info(f"Contraction bracket still {excess(lam_cap) + settings.CONTRACTION_TARGET:.3g} at cap; lambda={lam_cap:.4g}")
            return lam_cap
        lam_lo = 1e-12 * lam_cap
        return float(brentq(excess, lam_lo, lam_cap, xtol=1e-12 * lam_cap))

    # -- iteration ------------------------------------------------------

    def weighted_norm(self, values: np.ndarray, lam: float, p: float) -> float:
        weights = np.exp(-lam * self.tgrid.nodes)
        return float((self.tgrid.dt * np.sum(weights * lp_norm(values, self.sgrid.h, p) ** p)) ** (1.0 / p))

    def iterate(
        self,
        step: Callable[[np.ndarray], np.ndarray],
        start: np.ndarray,
        lam: float,
        p: float,
        tol: float,
        max_iters: int,
        where: str = "picard",
    ) -> Tuple[np.ndarray, PicardTrace]:
        """Fixed-point sweeps until weighted and unweighted residuals are below tol*(1 + norm)."""
        trace = PicardTrace(lam=lam)
        current = start
        for k in range(1, max_iters + 1):
            new = step(current)
            ensure_finite(new, where)
            diff = new - current
            res_w = self.weighted_norm(diff, lam, p)
            res_u = self.weighted_norm(diff, 0.0, p)
            trace.residuals.append(res_w)
            trace.unweighted.append(res_u)
            trace.iterations = k
            current = new
            if res_w <= tol * (1.0 + self.weighted_norm(new, lam, p)) and \
                    res_u <= tol * (1.0 + self.weighted_norm(new, 0.0, p)):
                trace.converged = True
                break
        if not trace.converged:
            logger.warning(f"{where}: no convergence after {max_iters} sweeps")
            raise ConvergenceError(trace.iterations, trace.residuals)
        logger.debug(f"{where}: converged in {trace.iterations} sweeps (lambda={lam:.4g})")
        return current, trace

    def picard_solve(self, u0: np.ndarray, sheet: NoiseSheet, config: PicardConfig) -> Tuple[FieldPath, PicardTrace]:
        """Fixed point of the truncated mild map, started from the kernel-smoothed initial datum."""
        check_sheet(sheet, self.tgrid, self.sgrid)
        u0 = check_initial(u0, self.sgrid)
        trunc = config.trunc.check_exponent(self.params.delta)
        lam = config.lam if config.lam is not None else self.choose_lambda(trunc)
        smooth = self.table.smooth_initial(u0)
        values, trace = self.iterate(
            lambda v: self._map(v, smooth, sheet, trunc),
            smooth, lam, trunc.p, config.tol, config.max_iters,
        )
        path = FieldPath(
            values=values, u0=u0, tgrid=self.tgrid, sgrid=self.sgrid, scheme="picard",
            truncation=trunc.n, seed=sheet.seed,
            metadata={"lambda": lam, "iterations": trace.iterations, "tol": config.tol,
                      "residual": trace.residuals[-1]},
        )
        return path, trace

    def global_solve(
        self,
        u0: np.ndarray,
        sheet: NoiseSheet,
        config: PicardConfig,
        n_schedule: Sequence[float],
    ) -> Tuple[FieldPath, StoppingRecord]:
        """
        Solve at increasing truncation levels until one is never reached.

        A single lambda (chosen at the top level) is used across the
        schedule, so levels that never truncate produce identical iterates.
        """
        levels = [float(n) for n in n_schedule]
        if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValidationError("n_schedule must be non-empty and strictly increasing", field="n_schedule")
        p = config.trunc.p
        lam = config.lam
        if lam is None:
            lam = self.choose_lambda(TruncationLevel(n=levels[-1], p=p))

        record = StoppingRecord(achieved_n=levels[0])
        paths, tau_rows = [], []
        for n in levels:
            level_config = PicardConfig(trunc=TruncationLevel(n=n, p=p), lam=lam,
                                        tol=config.tol, max_iters=config.max_iters)
            try:
                path, _ = self.picard_solve(u0, sheet, level_config)
            except (NonFiniteError, ConvergenceError) as e:
                logger.warning(f"Level n={n} failed ({e.message}); returning capped result")
                record.blowup = True
                break
            norms = lp_norm(path.values, self.sgrid.h, p)
            hits = np.nonzero(norms >= n)[0]
            row = int(hits[0]) if hits.size else self.tgrid.N
            paths.append(path)
            tau_rows.append(row)
            record.levels.append(n)
            record.taus.append(float(self.tgrid.nodes[row]))
            record.achieved_n = n
            if not hits.size:
                break

        if not paths:
            record.achieved_n = 0.0
            record.capped = True
            return self._unresolved_path(u0, sheet, lam, levels[0]), record

        final = paths[-1]
        record.capped = record.blowup or tau_rows[-1] < self.tgrid.N
        record.consistency = [
            float(np.max(np.abs(pth.values[: row + 1] - final.values[: row + 1])))
            for pth, row in zip(paths, tau_rows)
        ]
        if record.capped:
            logger.warning(f"Truncation schedule exhausted at n={record.achieved_n}; tau={record.taus[-1]:.4g}")
        final.metadata.update({"lambda": lam, "levels": record.levels, "capped": record.capped})
        final.scheme = "picard-global"
        return final, record

    def _unresolved_path(self, u0: np.ndarray, sheet: NoiseSheet, lam: float, n: float) -> FieldPath:
        """Path known only at t = 0; later rows are NaN."""
        values = np.full((self.tgrid.N + 1, self.sgrid.m), np.nan)
        values[0] = u0
        logger.warning(f"First level n={n} failed; no row past t=0 is resolved")
        return FieldPath(values=values, u0=u0, tgrid=self.tgrid, sgrid=self.sgrid, scheme="picard-global",
                         truncation=n, seed=sheet.seed,
                         metadata={"lambda": lam, "levels": [], "capped": True, "resolved_rows": 1})

    # -- decomposition u = v + phi --------------------------------------

    def stochastic_convolution(
        self,
        sheet: NoiseSheet,
        base: FieldPath,
        noise: Optional[NoiseCoefficient] = None,
        trunc: Optional[TruncationLevel] = None,
    ) -> FieldPath:
        """phi(t_i) = sum_{k<i} sum_y G(t_i - s_k - dt/2, x, y) g(s_k, y, u(s_k, y)) dW[k, y]."""
        check_sheet(sheet, self.tgrid, self.sgrid)
        if base.values.shape != (self.tgrid.N + 1, self.sgrid.m):
            raise GridMismatchError("base path", (self.tgrid.N + 1, self.sgrid.m), base.values.shape)
        values = base.values if trunc is None else truncate_field(base.values, trunc, self.sgrid.h)
        phi = self.table.noise_convolve(self.noise_forcing(values, sheet, noise))
        return FieldPath(values=phi, u0=np.zeros(self.sgrid.m), tgrid=self.tgrid, sgrid=self.sgrid,
                         scheme="stochastic-convolution", seed=sheet.seed)

    def transformed_solve(
        self, u0: np.ndarray, phi: FieldPath, config: PicardConfig
    ) -> Tuple[FieldPath, PicardTrace]:
        """Deterministic equation for v = u - phi with nonlinearities at pi_n(v + phi)."""
        u0 = check_initial(u0, self.sgrid)
        if phi.values.shape != (self.tgrid.N + 1, self.sgrid.m):
            raise GridMismatchError("phi", (self.tgrid.N + 1, self.sgrid.m), phi.values.shape)
        ensure_finite(phi.values, "phi")
        trunc = config.trunc.check_exponent(self.params.delta)
        lam = config.lam if config.lam is not None else self.choose_lambda(trunc)
        smooth = self.table.smooth_initial(u0)

        def step(v):
            return smooth + self.drift(truncate_field(v + phi.values, trunc, self.sgrid.h))

        values, trace = self.iterate(step, smooth, lam, trunc.p, config.tol, config.max_iters, "transformed")
        path = FieldPath(values=values, u0=u0, tgrid=self.tgrid, sgrid=self.sgrid, scheme="transformed",
                         truncation=trunc.n, seed=phi.seed,
                         metadata={"lambda": lam, "iterations": trace.iterations})
        return path, trace

    # -- linear equations along a frozen path ---------------------------

    def linear_solve(
        self,
        source: np.ndarray,
        heat_coeff: np.ndarray,
        adv_coeff: np.ndarray,
        noise_coeff: np.ndarray,
        sheet: NoiseSheet,
        p: float = 2.0,
        tol: float = 1e-13,
        max_iters: Optional[int] = None,
    ) -> Tuple[np.ndarray, PicardTrace]:
        """
        Solve D = source + H[heat_coeff D] + A[adv_coeff D] + N[noise_coeff D dW].

        The map is strictly lower triangular in time, so N + 1 sweeps reach
        the discrete solution exactly.
        """
        check_sheet(sheet, self.tgrid, self.sgrid)
        N = self.tgrid.N
        dW = sheet.increments

        def step(D):
            out = source.copy()
            if np.any(heat_coeff):
                out += self.table.heat_convolve(heat_coeff * D)
            if np.any(adv_coeff):
                out += self.table.advect_convolve(adv_coeff * D)
            if np.any(noise_coeff):
                out += self.table.noise_convolve(noise_coeff[:N] * D[:N] * dW)
            return out

        return self.iterate(step, source, 1.0 / self.tgrid.T, p, tol, max_iters or N + 2, "linear")


class GalerkinSolver:
    """Semi-implicit spectral Galerkin scheme in the Dirichlet sine basis."""

    def __init__(self, params: ModelParams, tgrid: TimeGrid, sgrid: SpatialGrid, noise: NoiseCoefficient):
        self.params = params
        self.tgrid = tgrid
        self.sgrid = sgrid
        self.noise = noise

    def galerkin_solve(self, u0: np.ndarray, sheet: NoiseSheet, config: GalerkinConfig) -> FieldPath:
        check_sheet(sheet, self.tgrid, self.sgrid)
        u0 = check_initial(u0, self.sgrid)
        K, m = config.n_modes, self.sgrid.m
        if K > m:
            raise ValidationError(f"n_modes={K} exceeds m={m}", field="n_modes")
        prm, h, dt = self.params, self.sgrid.h, self.tgrid.dt
        x, t = self.sgrid.nodes, self.tgrid.nodes
        k = np.arange(1, K + 1)
        phi = sine_basis(K, self.sgrid)
        dphi = np.sqrt(2.0) * (k[:, None] * np.pi) * np.cos(k[:, None] * np.pi * x[None, :])
        rates = prm.nu * (k * np.pi) ** 2 * dt
        exponential = config.stepping == "exponential"
        factor = np.exp(-rates) if exponential else 1.0 / (1.0 + rates)

        values = np.empty((self.tgrid.N + 1, m))
        values[0] = u0
        a = h * (phi @ u0)
        u = a @ phi
        for i in range(self.tgrid.N):
            if config.cutoff_level is not None:
                p_u, c_u = truncated_nonlinearities(u, config.cutoff_level, prm.gamma, prm.delta)
            else:
                p_u = advection_nonlinearity(u, prm.delta)
                c_u = reaction_nonlinearity(u, prm.gamma, prm.delta)
            drift = h * (prm.beta * (phi @ c_u) + prm.alpha / (prm.delta + 1) * (dphi @ p_u))
            kick = a + dt * drift
            if self.noise.is_active(t[i]):
                kick = kick + phi @ (self.noise.evaluate(t[i], x, u) * sheet.increments[i])
            a = factor * kick
            u = a @ phi
            if not np.all(np.isfinite(u)):
                raise NonFiniteError("galerkin solution", i + 1)
            values[i + 1] = u
        return FieldPath(values=values, u0=u0, tgrid=self.tgrid, sgrid=self.sgrid, scheme="galerkin",
                         truncation=config.cutoff_level, seed=sheet.seed,
                         metadata={"n_modes": K, "stepping": config.stepping})


SCHEMES = ("picard", "galerkin", "transformed")


def build_solver(scheme: str, params: ModelParams, tgrid: TimeGrid, sgrid: SpatialGrid,
                 noise: NoiseCoefficient, kernel_config: Optional[KernelConfig] = None,
                 kernels: Optional[KernelService] = None):
    """Solver instance for a scheme name; the mild-equation schemes share one kernel table."""
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown scheme '{scheme}'", field="scheme")
    if scheme == "galerkin":
        return GalerkinSolver(params, tgrid, sgrid, noise)
    table = (kernels or KernelService()).table(params, tgrid, sgrid, kernel_config)
    return MildSolver(params, tgrid, sgrid, noise, table=table)


def solve_path(
    solver,
    scheme: str,
    u0: np.ndarray,
    sheet: NoiseSheet,
    picard: Optional[PicardConfig] = None,
    galerkin: Optional[GalerkinConfig] = None,
) -> FieldPath:
    """One path by the named scheme; 'transformed' rebuilds u as v + phi and records the split error."""
    if scheme == "galerkin":
        return solver.galerkin_solve(u0, sheet, galerkin or GalerkinConfig(n_modes=solver.sgrid.m))
    if picard is None:
        raise ValidationError("picard settings required for mild-equation schemes", field="picard")
    path, _ = solver.picard_solve(u0, sheet, picard)
    if scheme == "picard":
        return path
    phi = solver.stochastic_convolution(sheet, path, trunc=picard.trunc)
    v, _ = solver.transformed_solve(u0, phi, picard)
    values = v.values + phi.values
    split_error = float(np.max(np.abs(values - path.values)))
    return FieldPath(values=values, u0=v.u0, tgrid=solver.tgrid, sgrid=solver.sgrid, scheme="transformed",
                     truncation=picard.trunc.n, seed=sheet.seed,
                     metadata={**path.metadata, "split_error": split_error})
