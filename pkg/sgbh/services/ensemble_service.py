"""
Ensemble service - runs per-seed workers in a thread pool.

Workers must be pure functions of their seed; shared inputs (kernel
tables, parameters) are read-only. Results come back sorted by seed.
"""
import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

from sgbh.config import settings
from sgbh.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

T = TypeVar("T")


def seed_range(base_seed: int, count: int) -> List[int]:
    if count < 1:
        raise ValidationError("seed count must be >= 1", field="seeds.count")
    return list(range(base_seed, base_seed + count))


class EnsembleRunner:
    """Service for mapping a seeded worker over many seeds."""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers if max_workers is not None else settings.MAX_WORKERS

    async def map_async(self, worker: Callable[[int], T], seeds: Sequence[int]) -> List[Tuple[int, T]]:
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            futures = [loop.run_in_executor(pool, worker, seed) for seed in seeds]
            results = await asyncio.gather(*futures)
        return sorted(zip(seeds, results), key=lambda item: item[0])

    def map(self, worker: Callable[[int], T], seeds: Sequence[int]) -> List[Tuple[int, T]]:
        """Run `worker(seed)` for every seed; returns (seed, result) pairs in seed order."""
        seeds = list(seeds)
        if len(set(seeds)) != len(seeds):
            raise ValidationError("seeds must be distinct", field="seeds")
        logger.info(f"Running ensemble of {len(seeds)} paths (max_workers={self.max_workers})")
        return asyncio.run(self.map_async(worker, seeds))


ensemble_runner = EnsembleRunner()
