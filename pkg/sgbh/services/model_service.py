"""
Model service - polynomial nonlinearities and truncation operators.

All functions are pure and accept numpy arrays elementwise.
"""
from typing import Tuple

import numpy as np

from sgbh.schemas.model import TruncationLevel

RETRACTION_ULP_STEPS = 64


def _ipow(u, k: int):
    """u**k by repeated multiplication (exact for the integer degrees used here)."""
    u = np.asarray(u, dtype=float)
    out = np.ones_like(u)
    for _ in range(k):
        out = out * u
    return out


def advection_nonlinearity(u, delta: int):
    """p(u) = u^(delta+1)."""
    return _ipow(u, delta + 1)


def reaction_nonlinearity(u, gamma: float, delta: int):
    """c(u) = u (1 - u^delta)(u^delta - gamma)."""
    u = np.asarray(u, dtype=float)
    ud = _ipow(u, delta)
    return u * (1.0 - ud) * (ud - gamma)


def reaction_expanded(u, gamma: float, delta: int):
    """(1+gamma) u^(delta+1) - gamma u - u^(2 delta + 1)."""
    u = np.asarray(u, dtype=float)
    return (1.0 + gamma) * _ipow(u, delta + 1) - gamma * u - _ipow(u, 2 * delta + 1)


def advection_derivative(u, delta: int):
    """p'(u) = (delta+1) u^delta."""
    return (delta + 1) * _ipow(u, delta)


def reaction_derivative(u, gamma: float, delta: int):
    """c'(u) = (1+gamma)(delta+1) u^delta - gamma - (2 delta + 1) u^(2 delta)."""
    ud = _ipow(u, delta)
    return (1.0 + gamma) * (delta + 1) * ud - gamma - (2 * delta + 1) * ud * ud


def lp_norm(y, h: float, p: float, axis: int = -1):
    """Rectangle-rule L^p norm (h * sum |y|^p)^(1/p) on the interior nodes."""
    return (h * np.sum(np.abs(y) ** p, axis=axis)) ** (1.0 / p)


def phi_n(r, trunc: TruncationLevel):
    """1 on [0, n^p] (closed), n r^(-1/p) beyond."""
    r = np.asarray(r, dtype=float)
    n, p = trunc.n, trunc.p
    with np.errstate(divide="ignore"):
        scaled = n * np.where(r > 0, r, 1.0) ** (-1.0 / p)
    return np.where(r <= n ** p, 1.0, scaled)


def truncate_field(y, trunc: TruncationLevel, h: float):
    """
    Radial retraction onto the L^p ball of radius n.

    Works on a single slice (m,) or row-wise on a stack (N+1, m).
    """
    y = np.asarray(y, dtype=float)
    norm = lp_norm(y, h, trunc.p)
    inside = norm <= trunc.n
    scale = np.where(inside, 1.0, trunc.n / np.where(norm > 0, norm, 1.0))
    if y.ndim > 1:
        scale = scale[..., None]
    out = y * scale
    # step the scale down by ulps until the recomputed norm is inside the ball
    for _ in range(RETRACTION_ULP_STEPS):
        over = lp_norm(out, h, trunc.p) > trunc.n
        if not np.any(over):
            break
        if y.ndim > 1:
            over = over[..., None]
        scale = np.where(over, np.nextafter(scale, 0.0), scale)
        out = y * scale
    return out


def eta_n(x, n: float):
    """Continuous cutoff: 1 on [0, n], n + 1 - x on (n, n+1], 0 beyond."""
    x = np.asarray(x, dtype=float)
    return np.clip(n + 1.0 - x, 0.0, 1.0)


def truncated_nonlinearities(u, n: float, gamma: float, delta: int) -> Tuple[np.ndarray, np.ndarray]:
    """(p_n(u), c_n(u)) = eta_n(|u|) * (p(u), c(u))."""
    cut = eta_n(np.abs(u), n)
    return cut * advection_nonlinearity(u, delta), cut * reaction_nonlinearity(u, gamma, delta)
