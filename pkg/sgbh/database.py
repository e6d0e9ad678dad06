from contextlib import contextmanager
from typing import Iterator, Optional

from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from .config import settings


def make_engine(url: str) -> Engine:
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, echo=False, connect_args=connect_args)


# Create Engine (sqlite creates the file on first connect)
engine = make_engine(settings.DATABASE_URL)


def init_db(bind: Optional[Engine] = None) -> None:
    # registers the table on SQLModel.metadata
    from .models.run import RunRecord  # noqa: F401

    SQLModel.metadata.create_all(bind or engine)


def reset_db(bind: Optional[Engine] = None) -> None:
    """Drop and recreate the run catalogue (WARNING: deletes all rows)."""
    bind = bind or engine
    SQLModel.metadata.drop_all(bind)
    init_db(bind)


@contextmanager
def get_session(bind: Optional[Engine] = None) -> Iterator[Session]:
    bind = bind or engine
    init_db(bind)
    with Session(bind, expire_on_commit=False) as session:
        yield session
