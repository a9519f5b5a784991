import logging
import os
from threading import Thread
from typing import Callable, Generic, Optional, TypeVar

from .masking import derive_seed

logger = logging.getLogger()

T = TypeVar("T")

# task(index, seed) -> result
Task = Callable[[int, int], T]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("ATTRIB_WORKERS", "1")))
    except ValueError:
        logger.warning(f"ignoring ATTRIB_WORKERS={os.environ.get('ATTRIB_WORKERS')!r}")
        return 1


class Swarm(Generic[T]):
    """Runs one task per index over a pool of threads.

    Worker w owns a contiguous block of indices; results land in their index
    slot, and task i always gets seed `base_seed ^ i`, so the output does not
    depend on how many workers ran it.
    """

    count: int
    base_seed: int
    workers: int
    threads: list[Thread]
    results: list[Optional[T]]
    errors: list[Optional[BaseException]]

    def __init__(
        self,
        task: Task[T],
        count: int,
        base_seed: int = 0,
        workers: Optional[int] = None,
        name: str = "swarm",
    ) -> None:
        self.task = task
        self.count = count
        self.base_seed = base_seed
        self.workers = max(1, min(workers or default_workers(), max(count, 1)))
        self.name = name
        self.threads = []
        self.results = [None] * count
        self.errors = [None] * self.workers

    def blocks(self) -> list[range]:
        size, extra = divmod(self.count, self.workers)
        out = []
        start = 0
        for w in range(self.workers):
            stop = start + size + (1 if w < extra else 0)
            out.append(range(start, stop))
            start = stop
        return out

    def _work(self, w: int, block: range) -> None:
        try:
            for i in block:
                self.results[i] = self.task(i, derive_seed(self.base_seed, i))
        except BaseException as e:  # re-raised by main()
            self.errors[w] = e

    def main(self) -> list[T]:
        logger.debug(f"{self.name}: {self.count} tasks on {self.workers} worker(s)")

        # create all the threads
        for w, block in enumerate(self.blocks()):
            self.threads.append(Thread(target=self._work, args=(w, block), daemon=True))

        # start all the threads
        for t in self.threads:
            t.start()

        # wait for all workers to finish
        for t in self.threads:
            t.join()

        for e in self.errors:
            if e is not None:
                raise e
        return [r for r in self.results]  # type: ignore[misc]
