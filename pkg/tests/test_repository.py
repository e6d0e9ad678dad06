from datetime import datetime, timedelta

import pytest
from sqlmodel import Session

from sgbh.database import get_session
from sgbh.models.run import RunRecord, RunStatus
from sgbh.repositories.run_repo import RunRepository
from sgbh.schemas.run import RunManifest


def manifest(experiment="solve", status="pass", exit_code=0, config_hash="abc", minutes=0):
    return RunManifest(
        config={}, config_hash=config_hash, version="1.0.0", experiment=experiment, status=status,
        exit_code=exit_code, lambda_chosen=2.0, wall_time=0.5, checks={"energy": True},
        created_at=datetime(2026, 1, 1) + timedelta(minutes=minutes),
    )


@pytest.fixture
def repo(engine):
    with Session(engine, expire_on_commit=False) as session:
        yield RunRepository(session)


def test_record_manifest(repo):
    row = repo.record_manifest(manifest(), "/tmp/manifest.json")
    assert row.id is not None
    loaded = repo.get(row.id)
    assert loaded.experiment == "solve"
    assert loaded.checks == {"energy": True}
    assert loaded.manifest_path == "/tmp/manifest.json"


def test_listing_and_counting(repo):
    for i, kind in enumerate(["solve", "energy", "solve"]):
        repo.record_manifest(manifest(experiment=kind, minutes=i))
    assert repo.count() == 3
    assert repo.count({"experiment": "solve"}) == 2
    rows = repo.list_by_experiment("solve")
    assert [r.created_at.minute for r in rows] == [2, 0]
    assert len(repo.list(limit=1)) == 1
    assert repo.get_by_field("experiment", "energy").experiment == "energy"


def test_latest_for_hash(repo):
    repo.record_manifest(manifest(config_hash="h1", minutes=0))
    newest = repo.record_manifest(manifest(config_hash="h1", status="fail", exit_code=1, minutes=5))
    repo.record_manifest(manifest(config_hash="h2", minutes=9))
    assert repo.latest_for_hash("h1").id == newest.id
    assert repo.latest_for_hash("missing") is None


def test_delete(repo):
    row = repo.record_manifest(manifest())
    assert repo.delete(row.id)
    assert not repo.delete(row.id)
    assert repo.count() == 0


def test_status_by_exit_code():
    assert [RunStatus.BY_EXIT_CODE[c] for c in range(4)] == ["pass", "fail", "invalid", "blowup"]


def test_get_session_creates_tables(tmp_path):
    from sgbh.database import make_engine

    bind = make_engine(f"sqlite:///{tmp_path / 'fresh.db'}")
    with get_session(bind) as session:
        assert RunRepository(session).count() == 0
        assert session.get(RunRecord, 1) is None


def test_reset_db_drops_rows(engine):
    from sgbh.database import reset_db

    with Session(engine) as session:
        RunRepository(session).record_manifest(manifest(), None)
    reset_db(engine)
    with Session(engine) as session:
        assert RunRepository(session).count() == 0
