"""
Run catalogue repository.
"""
from typing import List, Optional

from sqlmodel import Session, select

from sgbh.models.run import RunRecord
from sgbh.repositories.base import BaseRepository
from sgbh.schemas.run import RunManifest


class RunRepository(BaseRepository[RunRecord]):
    """Repository for RunRecord operations."""

    def __init__(self, session: Session):
        super().__init__(RunRecord, session)

    def record_manifest(self, manifest: RunManifest, manifest_path: Optional[str] = None) -> RunRecord:
        """Create a catalogue row from a finished run's manifest."""
        return self.create({
            "experiment": manifest.experiment,
            "config_hash": manifest.config_hash,
            "status": manifest.status,
            "exit_code": manifest.exit_code,
            "lambda_chosen": manifest.lambda_chosen,
            "wall_time": manifest.wall_time,
            "manifest_path": manifest_path,
            "checks": manifest.checks,
            "created_at": manifest.created_at,
        })

    def list_by_experiment(self, experiment: str, limit: int = 20) -> List[RunRecord]:
        return self.list(filters={"experiment": experiment}, limit=limit)

    def latest_for_hash(self, config_hash: str) -> Optional[RunRecord]:
        """Most recent run of an identical config."""
        query = select(RunRecord).where(
            RunRecord.config_hash == config_hash
        ).order_by(RunRecord.created_at.desc(), RunRecord.id.desc()).limit(1)
        return self.session.exec(query).first()
