"""
Malliavin service - first-variation derivative D_{r,z}u along a frozen path.

The derivative equation is the exact linearisation of the discrete mild
map: the perturbation enters through the stochastic-convolution cell
(r, z), whose kernel is evaluated at the midpoint of the source time cell.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from sgbh.config import settings
from sgbh.core.exceptions import LocalizationError, ValidationError
from sgbh.schemas.fields import DerivativeField, FieldPath, IntegratedDerivative, NoiseSheet
from sgbh.schemas.model import TruncationLevel
from sgbh.schemas.reports import PositivityStats
from sgbh.schemas.solver import PicardConfig
from sgbh.services.kernel_service import green_eval
from sgbh.services.model_service import advection_derivative, lp_norm, reaction_derivative
from sgbh.services.noise_service import bump_sheet
from sgbh.services.solver_service import MildSolver

logger = logging.getLogger(__name__)


class MalliavinService:
    """Service for derivative solves on a shared solver and frozen base path."""

    def __init__(self, solver: MildSolver):
        self.solver = solver

    @property
    def tgrid(self):
        return self.solver.tgrid

    @property
    def sgrid(self):
        return self.solver.sgrid

    def _check_source(self, r_index: int, z_index: Optional[int] = None) -> None:
        if not 0 <= r_index < self.tgrid.N:
            raise ValidationError(f"r_index must lie in [0, {self.tgrid.N - 1}]", field="r_index")
        if z_index is not None and not 0 <= z_index < self.sgrid.m:
            raise ValidationError(f"z_index must lie in [0, {self.sgrid.m - 1}]", field="z_index")

    def localize(self, base: FieldPath, trunc: TruncationLevel) -> np.ndarray:
        """Base values, provided the path stays strictly inside the truncation ball."""
        norms = lp_norm(base.values, self.sgrid.h, trunc.p)
        hits = np.nonzero(norms >= trunc.n)[0]
        if hits.size:
            raise LocalizationError(trunc.n, float(norms[hits[0]]), int(hits[0]))
        return base.values

    def noise_derivative(self, u: np.ndarray) -> Tuple[np.ndarray, str]:
        """M(s_k, y) = dg/dr along the path; central differences when no closed form exists."""
        noise = self.solver.noise
        x, t = self.sgrid.nodes, self.tgrid.nodes
        out = np.zeros_like(u)
        method = "closed-form" if noise.differentiable else "finite-difference"
        for k in range(self.tgrid.N):
            if not noise.is_active(t[k]):
                continue
            if noise.differentiable:
                out[k] = noise.derivative_in_r(t[k], x, u[k])
            else:
                step = settings.FD_RELATIVE_STEP * (1.0 + np.abs(u[k]))
                out[k] = (noise.evaluate(t[k], x, u[k] + step) - noise.evaluate(t[k], x, u[k] - step)) / (2.0 * step)
        return out, method

    def _coefficients(self, u: np.ndarray):
        prm = self.solver.params
        heat = prm.beta * reaction_derivative(u, prm.gamma, prm.delta)
        adv = prm.alpha / (prm.delta + 1) * advection_derivative(u, prm.delta)
        noise, method = self.noise_derivative(u)
        return heat, adv, noise, method

    def _source(self, u: np.ndarray, r_index: int, z_indices) -> np.ndarray:
        """Initial layer sum_z G((i - r - 1/2) dt, x, z) g(s_r, z, u(s_r, z)) for i > r."""
        z = np.atleast_1d(z_indices)
        t_r = self.tgrid.nodes[r_index]
        noise = self.solver.noise
        out = np.zeros((self.tgrid.N + 1, self.sgrid.m))
        if not noise.is_active(t_r):
            return out
        g = noise.evaluate(t_r, self.sgrid.nodes[z], u[r_index, z])
        lags = self.solver.table.mid[: self.tgrid.N - r_index]
        out[r_index + 1:] = lags[:, :, z] @ g
        return out

    def derivative_solve(
        self, base: FieldPath, sheet: NoiseSheet, trunc: TruncationLevel, r_index: int, z_index: int
    ) -> DerivativeField:
        """Linearised mild equation with source at cell (r_index, z_index)."""
        self._check_source(r_index, z_index)
        u = self.localize(base, trunc)
        heat, adv, noise, method = self._coefficients(u)
        source = self._source(u, r_index, z_index)
        values, trace = self.solver.linear_solve(source, heat, adv, noise, sheet, p=trunc.p)
        # rows up to r are untouched by the source; keep them exactly zero
        values[: r_index + 1] = 0.0
        logger.debug(f"Derivative at source ({r_index}, {z_index}) solved in {trace.iterations} sweeps")
        return DerivativeField(
            values=values, r_index=r_index, z_index=z_index,
            source_time=float(self.tgrid.nodes[r_index] + 0.5 * self.tgrid.dt),
            tgrid=self.tgrid, sgrid=self.sgrid, method=f"linearized/{method}",
        )

    def additive_closed_form(self, r_index: int, z_index: int) -> DerivativeField:
        """D_{r,z}u = g(s_r, z) G(t - s_r - dt/2, x, z) when the equation is linear and g ignores u."""
        self._check_source(r_index, z_index)
        prm, noise = self.solver.params, self.solver.noise
        if prm.alpha != 0 or prm.beta != 0 or noise.lipschitz_L != 0:
            raise ValidationError("closed form needs alpha = beta = 0 and state-independent noise",
                                  field="noise.preset")
        x, dt = self.sgrid.nodes, self.tgrid.dt
        t_r, z = self.tgrid.nodes[r_index], x[z_index]
        values = np.zeros((self.tgrid.N + 1, self.sgrid.m))
        if noise.is_active(t_r):
            g = float(noise.evaluate(t_r, z, 0.0))
            lags = (np.arange(r_index + 1, self.tgrid.N + 1) - r_index - 0.5) * dt
            values[r_index + 1:] = g * green_eval(lags[:, None], x[None, :], z, prm.nu, self.solver.table.config)
        return DerivativeField(
            values=values, r_index=r_index, z_index=z_index,
            source_time=float(t_r + 0.5 * dt), tgrid=self.tgrid, sgrid=self.sgrid, method="closed-form",
        )

    def fd_oracle(
        self,
        u0: np.ndarray,
        sheet: NoiseSheet,
        trunc: TruncationLevel,
        r_index: int,
        z_index: int,
        epsilon: float,
        central: bool = False,
        lam: Optional[float] = None,
    ) -> DerivativeField:
        """(u_eps - u) / (eps dt h) from re-solving on a bumped sheet; central uses u_{-eps}."""
        self._check_source(r_index, z_index)
        if epsilon == 0:
            raise ValidationError("epsilon must be non-zero", field="epsilon")
        N = self.tgrid.N
        # N + 1 sweeps reach the discrete fixed point bitwise
        config = PicardConfig(trunc=trunc, lam=lam, tol=1e-15, max_iters=N + 2)
        scale = epsilon * self.tgrid.dt * self.sgrid.h
        plus, _ = self.solver.picard_solve(u0, bump_sheet(sheet, r_index, z_index, epsilon), config)
        if central:
            minus, _ = self.solver.picard_solve(u0, bump_sheet(sheet, r_index, z_index, -epsilon), config)
            values = (plus.values - minus.values) / (2.0 * scale)
        else:
            base, _ = self.solver.picard_solve(u0, sheet, config)
            values = (plus.values - base.values) / scale
        return DerivativeField(
            values=values, r_index=r_index, z_index=z_index,
            source_time=float(self.tgrid.nodes[r_index] + 0.5 * self.tgrid.dt),
            tgrid=self.tgrid, sgrid=self.sgrid,
            method="fd-central" if central else "fd-forward", epsilon=epsilon,
        )

    def integrated_derivative(
        self, base: FieldPath, sheet: NoiseSheet, trunc: TruncationLevel, r_index: int, a: float, b: float
    ) -> IntegratedDerivative:
        """v = h * sum_z D_{r,z}u over the cells inside [a, b], from one linear solve."""
        self._check_source(r_index)
        if not 0.0 < a < b < 1.0:
            raise ValidationError(f"interval [{a}, {b}] must lie strictly inside (0, 1)", field="interval")
        x, h = self.sgrid.nodes, self.sgrid.h
        eps = 1e-12 * h
        z = np.nonzero((x - h / 2 >= a - eps) & (x + h / 2 <= b + eps))[0]
        if z.size == 0:
            raise ValidationError(f"no spatial cell fits inside [{a}, {b}]", field="interval")
        u = self.localize(base, trunc)
        heat, adv, noise, _ = self._coefficients(u)
        source = h * self._source(u, r_index, z)
        values, _ = self.solver.linear_solve(source, heat, adv, noise, sheet, p=trunc.p)
        values[: r_index + 1] = 0.0
        return IntegratedDerivative(values=values, r_index=r_index, a=a, b=b, z_indices=z.tolist(),
                                    tgrid=self.tgrid, sgrid=self.sgrid)


def positivity_fraction(
    v: IntegratedDerivative, s_range: Tuple[float, float], threshold: float = 0.0
) -> PositivityStats:
    """Share of grid values with s in (s_lo, s_hi] where v exceeds threshold."""
    if threshold < 0:
        raise ValidationError("threshold must be non-negative", field="threshold")
    lo, hi = s_range
    t = v.tgrid.nodes
    rows = (t > lo) & (t <= hi)
    block = v.values[rows]
    if block.size == 0:
        return PositivityStats(fraction=0.0, count=0)
    count = int(np.sum(block > threshold))
    return PositivityStats(
        fraction=count / block.size, count=count,
        minimum=float(block.min()), median=float(np.median(block)),
    )


def observed_orders(epsilons: Sequence[float], errors: Sequence[float]) -> List[float]:
    """log(e_k / e_{k+1}) / log(eps_k / eps_{k+1}) for consecutive bump sizes."""
    if len(epsilons) != len(errors):
        raise ValidationError("epsilons and errors differ in length", field="epsilons")
    orders = []
    for (e1, r1), (e2, r2) in zip(zip(epsilons, errors), zip(epsilons[1:], errors[1:])):
        if r1 <= 0 or r2 <= 0 or e1 == e2:
            raise ValidationError("orders need positive errors at distinct epsilons", field="epsilons")
        orders.append(float(np.log(r1 / r2) / np.log(abs(e1) / abs(e2))))
    return orders
