"""
Model parameter schemas.
"""
from pydantic import BaseModel, Field

from sgbh.core.exceptions import ValidationError


class ModelParams(BaseModel):
    """Coefficients of the stochastic generalized Burgers-Huxley equation."""
    nu: float = Field(1.0, gt=0)
    alpha: float = Field(0.5, ge=0)  # zero allowed for the heat/reaction reduction runs
    beta: float = Field(0.5, ge=0)
    gamma: float = Field(0.5, gt=0, lt=1)
    delta: int = Field(1, ge=1)
    T: float = Field(0.5, gt=0)

    class Config:
        frozen = True
        json_schema_extra = {
            "example": {"nu": 1.0, "alpha": 0.5, "beta": 0.5, "gamma": 0.5, "delta": 1, "T": 0.5}
        }

    @property
    def min_exponent(self) -> int:
        """Smallest admissible L^p exponent, 2*delta + 1."""
        return 2 * self.delta + 1


class TruncationLevel(BaseModel):
    """Radius n and exponent p of the L^p ball retraction."""
    n: float = Field(..., gt=0)
    p: float = Field(..., ge=2)

    class Config:
        frozen = True

    def check_exponent(self, delta: int) -> "TruncationLevel":
        if self.p < 2 * delta + 1:
            raise ValidationError(f"p={self.p} must be >= 2*delta+1={2 * delta + 1}", field="p")
        return self

    @classmethod
    def default(cls, params: ModelParams, n: float) -> "TruncationLevel":
        return cls(n=n, p=params.min_exponent)
