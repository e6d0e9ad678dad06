"""
Run catalogue model - one row per `run` invocation.
"""
from datetime import datetime
from typing import Any, Dict, Optional

from sqlalchemy import JSON
from sqlmodel import Field, SQLModel


class RunRecord(SQLModel, table=True):
    """Outcome of one experiment run, pointing at its manifest on disk."""
    __tablename__ = "run_record"

    id: Optional[int] = Field(default=None, primary_key=True)
    experiment: str = Field(index=True)  # solve, compare, energy, malliavin, density, dichotomy, convergence
    config_hash: str = Field(index=True)  # sha256 of the resolved config echo
    status: str = Field(default="pass")  # pass, fail, invalid, blowup
    exit_code: int = 0
    lambda_chosen: Optional[float] = None
    wall_time: float = 0.0
    manifest_path: Optional[str] = None
    checks: Dict[str, Any] = Field(default={}, sa_type=JSON)

    # Timestamps
    created_at: datetime = Field(default_factory=datetime.utcnow, index=True)


# Status constants for consistency
class RunStatus:
    PASS = "pass"
    FAIL = "fail"
    INVALID = "invalid"
    BLOWUP = "blowup"

    BY_EXIT_CODE = {0: PASS, 1: FAIL, 2: INVALID, 3: BLOWUP}
