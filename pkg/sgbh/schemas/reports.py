"""
Report schemas emitted as JSON by the analysis services.
"""
from typing import Optional, List, Dict
from pydantic import BaseModel


class BoundEntry(BaseModel):
    """Empirical constant for one kernel estimate."""
    name: str
    constant: float
    ell: Optional[float] = None
    exponent_ok: bool = True


class KernelBoundReport(BaseModel):
    """Measured constants of the heat-kernel estimates (diagnostic only)."""
    nu: float
    samples: int
    theta: float
    entries: List[BoundEntry] = []

    def constant(self, name: str) -> float:
        return next(e.constant for e in self.entries if e.name == name)


class EnergyReport(BaseModel):
    """Both sides of the pathwise energy inequality."""
    p: float
    K1: float
    K2: float
    K3: float
    times: List[float]
    lhs: List[float]
    rhs: float
    margin: List[float]

    @property
    def min_margin(self) -> float:
        return min(self.margin)


class ComparisonReport(BaseModel):
    """Violations of the ordering u <= v under shared noise."""
    paths: int
    violation_cells: int
    max_violation: float
    tol: float
    pairs: int = 1
    seeds: List[int] = []


class DensityEstimate(BaseModel):
    """Gaussian KDE of u(t, x) across an ensemble."""
    n_samples: int
    mean: float
    variance: float
    atom_detected: bool
    bandwidth: float = 0.0
    grid: List[float] = []
    density: List[float] = []
    integral: Optional[float] = None
    bandwidth_sensitivity: Optional[float] = None


class PositivityStats(BaseModel):
    """Share of grid points where the integrated derivative is positive."""
    fraction: float
    count: int
    minimum: Optional[float] = None
    median: Optional[float] = None


class DichotomyObservation(BaseModel):
    t_obs: float
    noise_acted: bool
    atom_detected: bool
    variance: float
    integral: Optional[float] = None


class DichotomyReport(BaseModel):
    """Atom/density status of u(t_obs, x_obs) around the noise switch time."""
    t_switch: Optional[float]
    x_obs: float
    paths: int
    observations: List[DichotomyObservation] = []
    variance_nondecreasing: Optional[bool] = None

    @property
    def consistent(self) -> bool:
        return all(o.atom_detected != o.noise_acted for o in self.observations)


class SweepResult(BaseModel):
    """Errors of one refinement sweep against its reference."""
    steps: List[float]
    errors: List[float]
    order: Optional[float] = None
    monotone: bool = True
    exact: bool = False


class OrderReport(BaseModel):
    """Observed spatial and temporal orders."""
    reference: str
    spatial: SweepResult
    temporal: SweepResult
    meta: Dict[str, float] = {}
