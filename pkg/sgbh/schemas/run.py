"""
Run configuration and manifest schemas.
"""
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from sgbh.schemas.model import ModelParams

EXPERIMENTS = ("solve", "compare", "energy", "malliavin", "density", "dichotomy", "convergence")


class PresetSpec(BaseModel):
    """A named preset plus its keyword parameters."""
    preset: str = "zero"
    params: Dict[str, float] = {}

    class Config:
        extra = "forbid"


class GridSection(BaseModel):
    m: int = Field(31, ge=3)
    N: int = Field(40, ge=1)

    class Config:
        extra = "forbid"


class SchemeSection(BaseModel):
    name: Literal["picard", "galerkin", "transformed"] = "picard"

    class Config:
        extra = "forbid"


class PicardSection(BaseModel):
    """Mild-equation settings; p defaults to 2*delta + 1."""
    lambda_mode: Literal["auto", "fixed"] = "auto"
    lam: Optional[float] = Field(None, gt=0)
    tol: float = Field(1e-8, gt=0)
    max_iters: int = Field(25, ge=1)
    n: float = Field(5.0, gt=0)
    p: Optional[float] = Field(None, ge=2)
    n_schedule: List[float] = []

    class Config:
        extra = "forbid"


class GalerkinSection(BaseModel):
    n_modes: Optional[int] = Field(None, ge=1)  # defaults to m
    stepping: Literal["exponential", "implicit"] = "exponential"
    cutoff_level: Optional[float] = Field(None, gt=0)

    class Config:
        extra = "forbid"


class ExperimentSection(BaseModel):
    """Experiment kind and its parameters; unused fields are ignored by other kinds."""
    kind: Literal["solve", "compare", "energy", "malliavin", "density", "dichotomy", "convergence"] = "solve"
    # compare
    upper: Optional[PresetSpec] = None
    middle: Optional[PresetSpec] = None
    tol: Optional[float] = Field(None, ge=0)
    # energy
    energy_p: Optional[float] = Field(None, ge=2)
    # malliavin
    r_index: int = Field(0, ge=0)
    z_index: Optional[int] = Field(None, ge=0)  # defaults to the middle node
    epsilons: List[float] = [0.4, 0.2, 0.1]
    fd_tol: float = Field(0.05, gt=0)
    interval: Optional[List[float]] = None
    positivity_min: float = Field(0.99, ge=0, le=1)
    # density / dichotomy
    t_obs: List[float] = []
    x_obs: float = Field(0.5, gt=0, lt=1)
    # convergence
    levels: int = Field(3, ge=3)
    exact: Optional[Literal["heat"]] = None
    min_order: Optional[float] = None

    class Config:
        extra = "forbid"


class SeedSection(BaseModel):
    base: int = Field(0, ge=0)
    count: int = Field(1, ge=1)

    class Config:
        extra = "forbid"


class OutputSection(BaseModel):
    directory: str = "runs"
    formats: List[Literal["csv", "binary"]] = ["csv"]

    class Config:
        extra = "forbid"


class RunConfig(BaseModel):
    """One experiment, fully specified; `model_dump()` is the manifest echo."""
    model: ModelParams = ModelParams()
    noise: PresetSpec = PresetSpec()
    initial: PresetSpec = PresetSpec()
    grid: GridSection = GridSection()
    scheme: SchemeSection = SchemeSection()
    picard: PicardSection = PicardSection()
    galerkin: GalerkinSection = GalerkinSection()
    experiment: ExperimentSection = ExperimentSection()
    seeds: SeedSection = SeedSection()
    output: OutputSection = OutputSection()

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "model": {"nu": 1.0, "alpha": 0.0, "beta": 0.0, "T": 0.5},
                "initial": {"preset": "sine", "params": {"amplitude": 1.0}},
                "grid": {"m": 31, "N": 40},
                "experiment": {"kind": "solve"},
            }
        }


class RunManifest(BaseModel):
    """What ran, with which settings, and how it ended."""
    config: Dict[str, Any]
    config_hash: str = ""
    version: str
    experiment: str
    status: Literal["pass", "fail", "invalid", "blowup"]
    exit_code: int
    message: Optional[str] = None
    lambda_chosen: Optional[float] = None
    wall_time: float = 0.0
    summary: Dict[str, Any] = {}
    checks: Dict[str, bool] = {}
    artifacts: Dict[str, str] = {}
    created_at: datetime = Field(default_factory=datetime.utcnow)


class ExperimentOutcome(BaseModel):
    """Handler result before it is folded into the manifest."""
    summary: Dict[str, Any] = {}
    checks: Dict[str, bool] = {}
    artifacts: Dict[str, str] = {}
    lambda_chosen: Optional[float] = None
    blowup: bool = False
