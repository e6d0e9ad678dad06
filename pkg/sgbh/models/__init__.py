# Models package - run catalogue tables
from sgbh.models.run import RunRecord, RunStatus
