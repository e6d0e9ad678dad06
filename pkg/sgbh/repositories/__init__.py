# Repositories package - database operations
from sgbh.repositories.base import BaseRepository
from sgbh.repositories.run_repo import RunRepository
