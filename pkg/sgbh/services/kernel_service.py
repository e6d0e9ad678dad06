"""
Kernel service - Dirichlet heat kernel on [0, 1].

Two equivalent representations: the method-of-images sum (fast for short
lags) and the sine series (fast for long lags). `green_eval`/`green_dy`
dispatch on the lag; `KernelTable` holds the matrices used by the mild
scheme and `KernelService` builds each table once per model and grid;
`measure_kernel_bounds` reports empirical constants of the
Gaussian-type kernel estimates.
"""
import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from sgbh.core.exceptions import ValidationError
from sgbh.schemas.grid import SpatialGrid, TimeGrid
from sgbh.schemas.model import ModelParams
from sgbh.schemas.reports import BoundEntry, KernelBoundReport
from sgbh.schemas.solver import KernelConfig
from sgbh.config import settings

logger = logging.getLogger(__name__)


def _check_lag(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValidationError("kernel lag must be positive", field="tau")
    return tau


def _sinpi(a):
    """sin(pi a), exactly zero at integer a."""
    r = np.remainder(a, 2.0)
    return np.where(r % 1.0 == 0.0, 0.0, np.sin(np.pi * r))


def effective_nu(nu: float, config: Optional[KernelConfig] = None) -> float:
    config = config or KernelConfig()
    return nu if config.nu_scaled else 1.0


def spectral_modes(lag: float, tol: float, power: int = 0) -> int:
    """Modes needed so the first omitted term k^power e^{-k^2 pi^2 lag} is below tol."""
    decades = math.log(1.0 / tol)
    k = math.sqrt(decades / (math.pi ** 2 * lag))
    if power:
        k = math.sqrt((decades + power * math.log(max(k, 2.0))) / (math.pi ** 2 * lag))
    return int(math.ceil(k)) + 2


def _image_terms(tau, x, y, nu, M):
    tau = _check_lag(tau)
    s = nu * tau
    shape = np.broadcast(s, x, y).shape
    s_, x_, y_ = (np.broadcast_to(np.asarray(a, dtype=float), shape)[..., None] for a in (s, x, y))
    n = np.arange(-M, M + 1, dtype=float)
    d1 = y_ - x_ - 2.0 * n
    d2 = y_ + x_ - 2.0 * n
    e1 = np.exp(-d1 ** 2 / (4.0 * s_))
    e2 = np.exp(-d2 ** 2 / (4.0 * s_))
    return s_, d1, d2, e1, e2


def green_image(tau, x, y, nu: float = 1.0, M: int = 20):
    """Method-of-images sum with 2M+1 terms, diffusivity folded into the lag."""
    s_, _, _, e1, e2 = _image_terms(tau, x, y, nu, M)
    return np.sum(e1 - e2, axis=-1) / np.sqrt(4.0 * np.pi * s_[..., 0])


def green_spectral(tau, x, y, nu: float = 1.0, Kmax: int = 400):
    """Sine series sum_k 2 e^{-nu k^2 pi^2 tau} sin(k pi x) sin(k pi y)."""
    tau = _check_lag(tau)
    k = np.arange(1, Kmax + 1, dtype=float)
    t_, x_, y_ = (np.asarray(a, dtype=float)[..., None] for a in (tau, x, y))
    decay = np.exp(-nu * (k * np.pi) ** 2 * t_)
    return np.sum(2.0 * decay * _sinpi(k * x_) * _sinpi(k * y_), axis=-1)


def green_dy_image(tau, x, y, nu: float = 1.0, M: int = 20):
    s_, d1, d2, e1, e2 = _image_terms(tau, x, y, nu, M)
    terms = (-d1 * e1 + d2 * e2) / (2.0 * s_)
    return np.sum(terms, axis=-1) / np.sqrt(4.0 * np.pi * s_[..., 0])


def green_dy_spectral(tau, x, y, nu: float = 1.0, Kmax: int = 400):
    tau = _check_lag(tau)
    k = np.arange(1, Kmax + 1, dtype=float)
    t_, x_, y_ = (np.asarray(a, dtype=float)[..., None] for a in (tau, x, y))
    decay = np.exp(-nu * (k * np.pi) ** 2 * t_)
    return np.sum(2.0 * decay * _sinpi(k * x_) * k * np.pi * np.cos(k * np.pi * y_), axis=-1)


def green_dt_spectral(tau, x, y, nu: float = 1.0, Kmax: int = 400):
    """Time derivative of the nu-scaled kernel."""
    tau = _check_lag(tau)
    k = np.arange(1, Kmax + 1, dtype=float)
    t_, x_, y_ = (np.asarray(a, dtype=float)[..., None] for a in (tau, x, y))
    lam = nu * (k * np.pi) ** 2
    return np.sum(-2.0 * lam * np.exp(-lam * t_) * _sinpi(k * x_) * _sinpi(k * y_), axis=-1)


def green_dydt_spectral(tau, x, y, nu: float = 1.0, Kmax: int = 400):
    tau = _check_lag(tau)
    k = np.arange(1, Kmax + 1, dtype=float)
    t_, x_, y_ = (np.asarray(a, dtype=float)[..., None] for a in (tau, x, y))
    lam = nu * (k * np.pi) ** 2
    return np.sum(
        -2.0 * lam * np.exp(-lam * t_) * _sinpi(k * x_) * k * np.pi * np.cos(k * np.pi * y_), axis=-1
    )


def _dispatch(tau, x, y, nu, config, image_fn, spectral_fn):
    config = config or KernelConfig()
    nu_eff = effective_nu(nu, config)
    tau = _check_lag(tau)
    shape = np.broadcast(tau, x, y).shape
    t, xx, yy = (np.broadcast_to(np.asarray(a, dtype=float), shape).ravel() for a in (tau, x, y))
    short = nu_eff * t < config.crossover
    out = np.empty(t.shape)
    if short.any():
        out[short] = image_fn(t[short], xx[short], yy[short], nu_eff, config.image_terms)
    if (~short).any():
        kmax = spectral_modes(config.crossover, config.spectral_tol, power=1)
        out[~short] = spectral_fn(t[~short], xx[~short], yy[~short], nu_eff, kmax)
    return out.reshape(shape)


def green_eval(tau, x, y, nu: float = 1.0, config: Optional[KernelConfig] = None):
    """Image sum below the crossover lag, sine series above it."""
    return _dispatch(tau, x, y, nu, config, green_image, green_spectral)


def green_dy(tau, x, y, nu: float = 1.0, config: Optional[KernelConfig] = None):
    """dG/dy with the same representation switch as green_eval."""
    return _dispatch(tau, x, y, nu, config, green_dy_image, green_dy_spectral)


class KernelTable:
    """
    Kernel matrices at the lags the discrete mild equation uses.

    For lag index l = 1..N the cell [s_k, s_{k+1}] seen from t_{k+l} is
    represented by its midpoint lag (l - 1/2) dt. Drift convolutions use
    product-integration weights that integrate the (t-s)^{-1/2} envelope
    exactly over each cell; the stochastic convolution uses the midpoint
    kernel directly against the cell increments.
    """

    def __init__(self, nu: float, tgrid: TimeGrid, sgrid: SpatialGrid, config: Optional[KernelConfig] = None):
        self.nu = nu
        self.tgrid = tgrid
        self.sgrid = sgrid
        self.config = config or KernelConfig()
        N, dt = tgrid.N, tgrid.dt
        x = sgrid.nodes
        X, Y = np.meshgrid(x, x, indexing="ij")

        self.mid_lags = (np.arange(1, N + 1) - 0.5) * dt
        self.mid = np.empty((N, sgrid.m, sgrid.m))
        self.dmid = np.empty((N, sgrid.m, sgrid.m))
        self.initial = np.empty((N, sgrid.m, sgrid.m))
        t_nodes = tgrid.nodes
        for l in range(N):
            self.mid[l] = green_eval(self.mid_lags[l], X, Y, nu, self.config)
            self.dmid[l] = green_dy(self.mid_lags[l], X, Y, nu, self.config)
            self.initial[l] = green_eval(t_nodes[l + 1], X, Y, nu, self.config)

        l = np.arange(1, N + 1)
        envelope = 2.0 * (np.sqrt(l * dt) - np.sqrt((l - 1) * dt))
        self.weights = envelope * np.sqrt(self.mid_lags)
        logger.debug(f"Built kernel table N={N} m={sgrid.m} nu={nu}")

    @property
    def image_terms(self) -> int:
        return self.config.image_terms

    @property
    def spectral_terms(self) -> int:
        return spectral_modes(self.config.crossover, self.config.spectral_tol, power=1)

    @property
    def crossover(self) -> float:
        return self.config.crossover / effective_nu(self.nu, self.config)

    def matches(self, tgrid: TimeGrid, sgrid: SpatialGrid) -> bool:
        return self.tgrid == tgrid and self.sgrid == sgrid

    def smooth_initial(self, u0: np.ndarray) -> np.ndarray:
        """G(t_i, x; u0) on the grid, row 0 being u0 itself."""
        out = np.empty((self.tgrid.N + 1, self.sgrid.m))
        out[0] = u0
        out[1:] = self.sgrid.h * (self.initial @ u0)
        return out

    def _volterra(self, F: np.ndarray, mats: np.ndarray, scale: np.ndarray) -> np.ndarray:
        N = self.tgrid.N
        out = np.zeros((N + 1, self.sgrid.m))
        for lag in range(1, N + 1):
            out[lag:] += scale[lag - 1] * (F[: N + 1 - lag] @ mats[lag - 1].T)
        return out

    def heat_convolve(self, F: np.ndarray) -> np.ndarray:
        """sum_{k<i} int_cell int G(t_i - s, x, y) F(s_k, y) dy ds."""
        return self._volterra(F, self.mid, self.sgrid.h * self.weights)

    def advect_convolve(self, F: np.ndarray) -> np.ndarray:
        """Same quadrature with dG/dy in place of G."""
        return self._volterra(F, self.dmid, self.sgrid.h * self.weights)

    def noise_convolve(self, F: np.ndarray) -> np.ndarray:
        """sum_{k<i} sum_y G(t_i - s_k - dt/2, x, y) F[k, y]; F already carries the cell increments."""
        padded = np.zeros((self.tgrid.N + 1, self.sgrid.m))
        padded[: F.shape[0]] = F
        return self._volterra(padded, self.mid, np.ones(self.tgrid.N))

    def check_invariants(self) -> dict:
        """Symmetry, positivity, sub-Markov mass and vanishing at x = 0, 1 of every stored lag."""
        tables = np.concatenate([self.mid, self.initial])
        scale = np.maximum(np.abs(tables).max(axis=(1, 2), keepdims=True), 1e-300)
        lags = np.concatenate([self.mid_lags, self.tgrid.nodes[1:]])
        ends = np.array([0.0, 1.0])
        edge = green_eval(lags[:, None, None], ends[None, :, None], self.sgrid.nodes[None, None, :],
                          self.nu, self.config)
        return {
            "symmetry": float(np.max(np.abs(tables - tables.transpose(0, 2, 1)) / scale)),
            "min_value": float(tables.min()),
            "max_mass": float((self.sgrid.h * tables.sum(axis=2)).max()),
            "boundary": float(np.max(np.abs(edge) / scale)),
        }

    def to_csv(self, path) -> None:
        """Dump (lag, x, y, G, dG/dy) rows at the midpoint lags."""
        x = self.sgrid.nodes
        X, Y = np.meshgrid(x, x, indexing="ij")
        rows = []
        for l, lag in enumerate(self.mid_lags):
            rows.append(np.column_stack([
                np.full(X.size, lag), X.ravel(), Y.ravel(), self.mid[l].ravel(), self.dmid[l].ravel()
            ]))
        np.savetxt(path, np.vstack(rows), delimiter=",", header="lag,x,y,G,dG_dy", comments="", fmt="%.17g")


class KernelService:
    """Service for Dirichlet heat-kernel tables and their bound diagnostics."""

    def __init__(self):
        self._tables: Dict[Tuple, KernelTable] = {}

    def table(self, params: ModelParams, tgrid: TimeGrid, sgrid: SpatialGrid,
              config: Optional[KernelConfig] = None) -> KernelTable:
        """Kernel table for a model and grid pair; depends on nu only and is built once per key."""
        config = config or KernelConfig()
        key = (params.nu, tgrid.N, tgrid.T, sgrid.m, config.model_dump_json())
        if key not in self._tables:
            self._tables[key] = KernelTable(params.nu, tgrid, sgrid, config)
        return self._tables[key]

    def measure_bounds(self, params: ModelParams, config: Optional[KernelConfig] = None, **options) -> KernelBoundReport:
        return measure_kernel_bounds(params, config, **options)

    def __len__(self) -> int:
        return len(self._tables)


def _log_abs(a):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(a))


def measure_kernel_bounds(
    params: ModelParams,
    config: Optional[KernelConfig] = None,
    taus: Optional[Sequence[float]] = None,
    points: int = 17,
    theta: Optional[float] = None,
    ell: Optional[float] = None,
    p: float = 3.0,
) -> KernelBoundReport:
    """
    Smallest constants K making each Gaussian-type kernel estimate hold on
    the sample grid. Diagnostic only: nothing in the solvers reads it.
    """
    config = config or KernelConfig()
    nu = effective_nu(params.nu, config)
    theta = settings.HOLDER_EXPONENT if theta is None else theta
    ell = 8.0 * nu if ell is None else ell
    if taus is None:
        taus = np.geomspace(1e-4, params.T, 12)
    taus = np.asarray(taus, dtype=float)
    nodes = np.linspace(0.0, 1.0, points)
    kmax = spectral_modes(float(taus.min()) * nu, config.spectral_tol, power=3)

    T_, X_, Y_ = np.meshgrid(taus, nodes, nodes, indexing="ij")
    d2 = (X_ - Y_) ** 2
    G = green_eval(T_, X_, Y_, params.nu, config)
    Gy = green_dy(T_, X_, Y_, params.nu, config)
    Gt = green_dt_spectral(T_, X_, Y_, nu, kmax)
    Gyt = green_dydt_spectral(T_, X_, Y_, nu, kmax)

    def sup(log_values) -> float:
        return float(np.exp(np.max(log_values)))

    entries = [
        BoundEntry(name="kernel", ell=ell, constant=sup(_log_abs(G) + 0.5 * np.log(T_) + d2 / (ell * T_))),
        BoundEntry(name="kernel_dy", ell=ell, constant=sup(_log_abs(Gy) + np.log(T_) + d2 / (ell * T_))),
        BoundEntry(name="kernel_dt", ell=ell, constant=sup(_log_abs(Gt) + 1.5 * np.log(T_) + d2 / (ell * T_))),
        BoundEntry(name="kernel_dydt", ell=ell, constant=sup(_log_abs(Gyt) + 2.0 * np.log(T_) + d2 / (ell * T_))),
    ]

    # Holder-type estimates over triples (x, y, z) with x != y
    zs = nodes[::2]
    T3, X3, Y3, Z3 = np.meshgrid(taus, nodes, nodes, zs, indexing="ij")
    off = X3 != Y3
    T3, X3, Y3, Z3 = T3[off], X3[off], Y3[off], Z3[off]
    dxy = np.abs(X3 - Y3)
    diff_g = green_eval(T3, X3, Z3, params.nu, config) - green_eval(T3, Y3, Z3, params.nu, config)
    env5 = np.maximum(-(X3 - Z3) ** 2 / (ell * T3), -(Y3 - Z3) ** 2 / (ell * T3))
    a5 = _log_abs(diff_g) - theta * np.log(dxy) + (0.5 * theta + 0.5) * np.log(T3) - env5
    diff_gz = green_dy(T3, X3, Z3, params.nu, config) - green_dy(T3, Y3, Z3, params.nu, config)
    env6 = np.maximum(-dxy ** 2 / (ell * T3), -(X3 - Z3) ** 2 / (ell * T3))
    a6 = _log_abs(diff_gz) - theta * np.log(dxy) + (1.0 + 0.5 * theta) * np.log(T3) - env6
    entries.append(BoundEntry(name="kernel_holder", ell=ell, constant=sup(a5)))
    entries.append(BoundEntry(name="kernel_dy_holder", ell=ell, constant=sup(a6)))

    # L^p norm of the Gaussian envelope against (t - s)^{1/(2p)}
    fine = np.linspace(-1.0, 1.0, 4001)
    env_norms = np.array([
        (trapezoid(np.exp(-p * fine ** 2 / (ell * t)), fine)) ** (1.0 / p) for t in taus
    ])
    entries.append(BoundEntry(name="envelope_lp", ell=ell, constant=float(np.max(env_norms / taus ** (1.0 / (2.0 * p))))))

    for entry in entries:
        entry.exponent_ok = bool(np.isfinite(entry.constant))
    logger.info("Kernel bounds: " + ", ".join(f"{e.name}={e.constant:.3g}" for e in entries))
    return KernelBoundReport(nu=params.nu, samples=int(T_.size), theta=theta, entries=entries)
