import numpy as np
import pytest

from sgbh.config import settings
from sgbh.database import init_db, make_engine
from sgbh.schemas.grid import SpatialGrid, TimeGrid
from sgbh.schemas.model import ModelParams, TruncationLevel
from sgbh.services.ensemble_service import EnsembleRunner
from sgbh.services.noise_service import sample_sheet


@pytest.fixture(autouse=True)
def no_run_catalogue(monkeypatch):
    """Runs never touch the default catalogue file during tests."""
    monkeypatch.setattr(settings, "RECORD_RUNS", False)


@pytest.fixture
def params():
    return ModelParams(nu=1.0, alpha=0.5, beta=0.5, gamma=0.5, delta=1, T=0.5)


@pytest.fixture
def heat_params():
    return ModelParams(nu=1.0, alpha=0.0, beta=0.0, gamma=0.5, delta=1, T=0.5)


@pytest.fixture
def tgrid():
    return TimeGrid(N=20, T=0.5)


@pytest.fixture
def sgrid():
    return SpatialGrid(m=15)


@pytest.fixture
def sheet(tgrid, sgrid):
    return sample_sheet(7, tgrid, sgrid)


@pytest.fixture
def trunc():
    return TruncationLevel(n=5.0, p=3.0)


@pytest.fixture
def sine_u0(sgrid):
    return 0.5 * np.sin(np.pi * sgrid.nodes)


@pytest.fixture
def runner():
    return EnsembleRunner(max_workers=2)


@pytest.fixture
def engine(tmp_path):
    engine = make_engine(f"sqlite:///{tmp_path / 'runs.db'}")
    init_db(engine)
    return engine


@pytest.fixture
def write_config(tmp_path):
    """Write a TOML run config whose output goes to tmp_path/<name>."""
    def _write(body: str, name: str = "out") -> str:
        out = tmp_path / name
        path = tmp_path / f"{name}.toml"
        path.write_text(body + f'\n[output]\ndirectory = "{out.as_posix()}"\nformats = ["csv", "binary"]\n')
        return str(path)
    return _write
