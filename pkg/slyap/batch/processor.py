"""Bounded-concurrency evaluation of independent analysis jobs."""

from __future__ import annotations

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

logger = logging.getLogger(__name__)


@dataclass
class _BatchJob:
    index: int
    item: Any
    status: str = "queued"   # queued | processing | done | skipped | error
    error: BaseException | None = None
    result: Any = None


class BatchProcessor:
    """Evaluates a list of independent work items with bounded concurrency.

    Results come back in input order, so the outcome never depends on the
    schedule. An item failing with one of the *tolerated* exception types
    yields ``None``; any other failure is re-raised once every job has
    finished (the lowest failing index wins).
    """

    def __init__(
        self,
        max_workers: int = 1,
        tolerated: tuple[type[BaseException], ...] = (ArithmeticError,),
    ) -> None:
        self._jobs: list[_BatchJob] = []
        self._max_workers = max(1, int(max_workers))
        self._tolerated = tolerated

    # ------------------------------------------------------------------ #
    #  Public API                                                          #
    # ------------------------------------------------------------------ #

    def map(self, fn: Callable[[Any], Any], items: Sequence[Any]) -> list[Any]:
        """Apply *fn* to every item and return the results in order."""
        self._jobs = [_BatchJob(index=i, item=item) for i, item in enumerate(items)]
        if not self._jobs:
            return []
        if self._max_workers == 1:
            for job in self._jobs:
                self._process_job(fn, job)
        else:
            loop = asyncio.new_event_loop()
            try:
                loop.run_until_complete(self._process_all(fn))
            finally:
                loop.close()
        for job in self._jobs:
            if job.status == "error":
                raise job.error
        return [job.result for job in self._jobs]

    def get_status(self) -> dict:
        """Return overall and per-job progress."""
        total = len(self._jobs)
        counts = {s: sum(1 for j in self._jobs if j.status == s) for s in ("done", "skipped", "error", "processing")}
        finished = counts["done"] + counts["skipped"] + counts["error"]
        return {
            "total": total,
            "done": counts["done"],
            "skipped": counts["skipped"],
            "error": counts["error"],
            "in_progress": counts["processing"],
            "queued": total - finished - counts["processing"],
            "percent": int(finished / total * 100) if total else 0,
            "errors": {j.index: str(j.error) for j in self._jobs if j.error is not None},
        }

    # ------------------------------------------------------------------ #
    #  Internal                                                            #
    # ------------------------------------------------------------------ #

    async def _process_all(self, fn: Callable[[Any], Any]) -> None:
        semaphore = asyncio.Semaphore(self._max_workers)
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self._max_workers) as executor:

            async def _run(job: _BatchJob) -> None:
                async with semaphore:
                    await loop.run_in_executor(executor, self._process_job, fn, job)

            await asyncio.gather(*[_run(job) for job in self._jobs])

    def _process_job(self, fn: Callable[[Any], Any], job: _BatchJob) -> None:
        job.status = "processing"
        try:
            job.result = fn(job.item)
            job.status = "done"
        except self._tolerated as exc:
            logger.warning("Batch job %d skipped: %s", job.index, exc)
            job.status = "skipped"
            job.error = exc
            job.result = None
        except Exception as exc:
            logger.error("Batch job %d failed: %s", job.index, exc)
            job.status = "error"
            job.error = exc
            job.result = None
