"""
Analysis service - energy functionals, norms and density estimates.

All functions here are pure reductions over path data.
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import gaussian_kde

from sgbh.config import settings
from sgbh.core.exceptions import GridMismatchError, InsufficientSamplesError, ValidationError
from sgbh.schemas.fields import FieldPath
from sgbh.schemas.model import ModelParams
from sgbh.schemas.reports import DensityEstimate, EnergyReport
from sgbh.services.integrations.base import NoiseCoefficient

logger = logging.getLogger(__name__)

KDE_GRID_POINTS = 2048
KDE_GRID_MARGIN = 8.0  # bandwidths beyond the sample range
BANDWIDTH_STABILITY_TOL = 0.2


def energy_constants(p: float, delta: int, alpha: float, beta: float, gamma: float, nu: float) -> Tuple[float, float, float]:
    """K1, K2, K3 of the pathwise L^p energy estimate."""
    if p < 2 * delta + 1:
        raise ValidationError(f"p={p} must be >= 2*delta+1={2 * delta + 1}", field="p")
    if beta <= 0:
        raise ValidationError("energy constants need beta > 0", field="beta")
    d, q = delta, p + 2 * delta
    adv = 2 ** d * (p - 1) ** 2 * alpha ** 2 / nu

    brace = adv / 4 + 2 ** (2 * d) * beta * (1 + gamma) ** 2 + 2 ** d * beta * (1 + gamma) \
        + 2 ** (2 * d - 1) * beta * (2 * d + 1)
    K1 = (2 * d / q) * (8 * p / q) ** (p / (2 * d)) * brace ** (q / (2 * d))

    K2 = 2 ** d * beta * (1 + gamma) / p * ((p - 1) / p) ** (p - 1) \
        + adv / p * (2 * (p - 2) / p) ** (2 / (p - 2))

    K3 = (
        (4 * (q - 1) / (beta * q)) ** (q - 1) * (2 ** (2 * d - 1) * beta * (2 * d + 1)) ** q
        + 2 * (4 * (q - 2) / (beta * q)) ** ((q - 2) / 2) * (adv / 2) ** (q / 2)
    ) / q
    return float(K1), float(K2), float(K3)


def _power_norm(values: np.ndarray, h: float, q: float) -> np.ndarray:
    """h * sum |values|^q per row."""
    return h * np.sum(np.abs(values) ** q, axis=-1)


def energy_inequality_check(v: FieldPath, phi: FieldPath, params: ModelParams, p: float) -> EnergyReport:
    """Both sides of the energy estimate for v = u - phi along one path."""
    if v.values.shape != phi.values.shape:
        raise GridMismatchError("phi", v.values.shape, phi.values.shape)
    K1, K2, K3 = energy_constants(p, params.delta, params.alpha, params.beta, params.gamma, params.nu)
    h, dt, T = v.sgrid.h, v.tgrid.dt, v.tgrid.T
    d = params.delta
    V = v.values

    norm_p = _power_norm(V, h, p)
    grad = np.gradient(V, h, axis=1)
    # |v| directly for the weight |v|^{(p-2)/2}
    dissipation = h * np.sum(np.abs(V) ** (p - 2) * grad ** 2, axis=1)
    rate = (
        params.nu * p * (p - 1) / 2 * dissipation
        + params.beta * p * params.gamma * norm_p
        + params.beta * p / 8 * _power_norm(V, h, p + 2 * d)
    )
    accumulated = np.concatenate([[0.0], dt * np.cumsum(rate[:-1])])
    lhs = norm_p + accumulated

    rhs = (
        float(_power_norm(v.u0, h, p))
        + p * K1 * T
        + p * K2 * T * float(np.max(_power_norm(phi.values, h, p * (d + 1))))
        + p * K3 * T * float(np.max(_power_norm(phi.values, h, p + 2 * d)))
    )
    margin = rhs - lhs
    if margin.min() <= 0:
        logger.warning(f"Energy margin {margin.min():.3e} at t={v.tgrid.nodes[int(np.argmin(margin))]:.4g}")
    return EnergyReport(
        p=p, K1=K1, K2=K2, K3=K3, times=v.tgrid.nodes.tolist(),
        lhs=lhs.tolist(), rhs=rhs, margin=margin.tolist(),
    )


def silverman_bandwidth(samples: np.ndarray) -> float:
    return 1.06 * float(np.std(samples, ddof=1)) * len(samples) ** (-0.2)


def _kde_on(samples: np.ndarray, bandwidth: float, grid: np.ndarray) -> np.ndarray:
    factor = bandwidth / float(np.std(samples, ddof=1))
    return gaussian_kde(samples, bw_method=factor)(grid)


def _default_grid(x: np.ndarray, bw: float) -> np.ndarray:
    return np.linspace(x.min() - KDE_GRID_MARGIN * bw, x.max() + KDE_GRID_MARGIN * bw, KDE_GRID_POINTS)


def bandwidth_stability(
    samples: Sequence[float],
    bandwidth: Optional[float] = None,
    grid: Optional[np.ndarray] = None,
    tol: float = BANDWIDTH_STABILITY_TOL,
) -> dict:
    """Sup change of the KDE under bandwidth halving, relative to its peak; stable below tol."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < settings.KDE_MIN_SAMPLES:
        raise InsufficientSamplesError(settings.KDE_MIN_SAMPLES, x.size)
    if tol <= 0:
        raise ValidationError("tol must be positive", field="tol")
    bw = bandwidth or silverman_bandwidth(x)
    if grid is None:
        grid = _default_grid(x, bw)
    density = _kde_on(x, bw, grid)
    halved = _kde_on(x, bw / 2.0, grid)
    sensitivity = float(np.max(np.abs(density - halved)) / np.max(density))
    return {"sensitivity": sensitivity, "stable": sensitivity < tol, "bandwidth": bw}


def kde_density(
    samples: Sequence[float],
    bandwidth: Optional[float] = None,
    grid: Optional[np.ndarray] = None,
    require_density: bool = False,
) -> DensityEstimate:
    """
    Gaussian KDE of one-point samples, or an atom flag when they do not spread.

    The evaluation grid defaults to 2048 points covering the sample range
    plus eight bandwidths on each side. `bandwidth_sensitivity` is the sup
    change of the estimate under bandwidth halving, relative to its peak.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < settings.KDE_MIN_SAMPLES:
        raise InsufficientSamplesError(settings.KDE_MIN_SAMPLES, x.size)
    mean = float(np.mean(x))
    variance = float(np.var(x, ddof=1))
    if variance < settings.ATOM_VARIANCE_FLOOR * (1.0 + mean ** 2):
        if require_density:
            raise ValidationError("samples form a point mass; no density to estimate", field="samples")
        return DensityEstimate(n_samples=x.size, mean=mean, variance=variance, atom_detected=True)

    bw = bandwidth or silverman_bandwidth(x)
    if grid is None:
        grid = _default_grid(x, bw)
    density = _kde_on(x, bw, grid)
    stability = bandwidth_stability(x, bw, grid)
    return DensityEstimate(
        n_samples=x.size, mean=mean, variance=variance, atom_detected=False, bandwidth=bw,
        grid=grid.tolist(), density=density.tolist(),
        integral=float(trapezoid(density, grid)),
        bandwidth_sensitivity=stability["sensitivity"],
    )


def fractional_seminorm(f: np.ndarray, eps: float, p: float, h: Optional[float] = None) -> float:
    """h^2 sum_{j != k} |f_j - f_k|^p / |x_j - x_k|^{2 + eps} on x_j = j h."""
    if p <= 1.0 + eps:
        raise ValidationError(f"p={p} must exceed 1+eps={1.0 + eps}", field="p")
    f = np.asarray(f, dtype=float)
    h = h or 1.0 / (f.size + 1)
    x = np.arange(1, f.size + 1) * h
    dist = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dist, 1.0)
    terms = np.abs(f[:, None] - f[None, :]) ** p / dist ** (2.0 + eps)
    np.fill_diagonal(terms, 0.0)
    return float(h * h * terms.sum())


def embedding_constant(eps: float, p: float) -> float:
    """C = 8 * 4^{1/p} (2 + eps) / eps, so |f(x) - f(y)| <= C seminorm^{1/p} on [0, 1]."""
    if eps <= 0:
        raise ValidationError("eps must be positive", field="eps")
    return 8.0 * 4.0 ** (1.0 / p) * (2.0 + eps) / eps


def sup_norm_bound(f: np.ndarray, eps: float, p: float, h: Optional[float] = None) -> dict:
    """
    Sup norm of a Dirichlet slice against |f(0)| + C seminorm^{1/p}.

    `ratio` is sup / seminorm^{1/p}, the constant actually needed on this slice.
    """
    f = np.asarray(f, dtype=float)
    sup = float(np.max(np.abs(f))) if f.size else 0.0
    semi = fractional_seminorm(f, eps, p, h)
    scale = semi ** (1.0 / p)
    f0 = 0.0  # Dirichlet boundary value
    bound = abs(f0) + embedding_constant(eps, p) * scale
    return {"sup": sup, "seminorm": semi, "bound": bound, "holds": sup <= bound,
            "ratio": sup / scale if scale > 0 else None}


def poincare_ratio(path: FieldPath) -> dict:
    """Per-time ||d_x v||^2 / ||v||^2 with zero boundary values, and the discrete floor it must respect."""
    h = path.sgrid.h
    padded = np.pad(path.values, ((0, 0), (1, 1)))
    grad_sq = h * np.sum((np.diff(padded, axis=1) / h) ** 2, axis=1)
    mass = h * np.sum(path.values ** 2, axis=1)
    ratios = np.where(mass > 0, grad_sq / np.where(mass > 0, mass, 1.0), np.nan)
    floor = (2.0 / h * np.sin(np.pi * h / 2.0)) ** 2
    finite = ratios[np.isfinite(ratios)]
    return {
        "ratios": ratios.tolist(),
        "floor": float(floor),
        "holds": bool(np.all(finite >= floor * (1.0 - 1e-12))),
    }


def nondegeneracy_check(noise: NoiseCoefficient, u0: np.ndarray, nodes: np.ndarray, t: float = 0.0) -> dict:
    """Whether g(t, y, u0(y)) is non-zero at some interior node."""
    values = np.asarray(noise.evaluate(t, nodes, u0), dtype=float)
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    return {"t": t, "nondegenerate": peak > 0.0, "max_abs": peak}
