"""
.. module:: pool
   :platform: Unix, Windows
   :synopsis: worker pool for independent linear solves

The iteration, the error sampler and the Steklov-Poincaré assembly all issue
batches of independent solves against shared, immutable factors. They go
through a :class:`WorkerPool`, which hands out a thread executor (or runs the
batch inline when the pool has no workers) and keeps usage stats for the run
record.
"""

import datetime
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .exception import InvalidWorkerCount
from .log import get_logger

logger = get_logger(__name__)


class WorkerPool:
    """
    Thread pool for batches of independent solves.

    :param name: pool name used in log messages and the run record.
    :param max_workers: number of worker threads. ``0`` runs every batch inline
                        in the calling thread.
    :param lazy: by default the executor is created on the first request.
                 ``lazy=False`` creates it right away.

    .. note::
        LAPACK routines called through scipy release the GIL, so banded solves
        of different right-hand sides overlap in threads.

    >>> with WorkerPool("solves", max_workers=4) as pool:
    ...     squares = pool.map(lambda x: x * x, range(4))
    >>> squares
    [0, 1, 4, 9]
    """

    def __init__(self, name="solves", max_workers=0, lazy=True):
        if max_workers is None or max_workers < 0:
            raise InvalidWorkerCount(name)

        self.name = name
        self.max_workers = int(max_workers)
        self.__executor = None
        self.__lock = threading.Lock()
        self.stats = self._get_default_stats()

        if self.max_workers == 0:
            logger.debug("%s: batches run inline.", self.name)
        elif not lazy:
            self.__create_executor()

    def get(self):
        """
        Return a context manager yielding ``(executor, stats)``.

        ``executor`` is ``None`` for an inline pool.

        >>> pool = WorkerPool("solves", max_workers=2)
        >>> with pool.get() as (executor, stats):
        ...     future = executor.submit(sum, [1, 2])
        >>> future.result()
        3
        """
        return self.__class__.Executor(self)

    def map(self, func, items):
        """Apply ``func`` to every item and return the results in input order."""
        items = list(items)
        with self.get() as (executor, _):
            if executor is None or len(items) <= 1:
                return [func(item) for item in items]
            return list(executor.map(func, items))

    def solve_many(self, factor, rhs):
        """
        Solve ``factor`` against the columns of ``rhs``.

        Columns are split into one chunk per worker; an inline pool solves the
        whole block at once.

        :param factor: object with a ``solve`` method accepting 2D blocks.
        :param rhs: array of shape ``(n, m)``.
        :return: array of shape ``(n, m)``.
        """
        rhs = np.asarray(rhs, dtype=float)
        if rhs.ndim == 1 or self.max_workers == 0 or rhs.shape[1] < 2:
            return factor.solve(rhs)
        chunks = np.array_split(np.arange(rhs.shape[1]), min(self.max_workers, rhs.shape[1]))
        parts = self.map(lambda cols: factor.solve(rhs[:, cols]), chunks)
        return np.hstack(parts)

    def is_inline(self):
        """Return True if batches run in the calling thread."""
        return self.max_workers == 0

    def destroy(self):
        """Shut the executor down. The pool can still be used afterwards and
        recreates its executor on demand."""
        with self.__lock:
            if self.__executor is not None:
                self.__executor.shutdown(wait=True)
                self.__executor = None
                logger.debug("%s: executor shut down after %d batches.", self.name, self.stats['count'])

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.destroy()

    def _get_default_stats(self):
        return {
            'count': 0,
            'created_at': datetime.datetime.now(),
            'last_used': None,
        }

    def _acquire(self):
        with self.__lock:
            if self.max_workers and self.__executor is None:
                self.__create_executor()
            self.stats['count'] += 1
            return self.__executor, dict(self.stats)

    def _release(self):
        with self.__lock:
            self.stats['last_used'] = datetime.datetime.now()

    def __create_executor(self):
        self.__executor = ThreadPoolExecutor(max_workers=self.max_workers,
                                             thread_name_prefix=self.name)
        logger.info("%s: %d worker threads started.", self.name, self.max_workers)

    class Executor:
        """
        Context manager for **WorkerPool**
        """

        def __init__(self, pool):
            self.__pool = pool
            self.executor, self.stats = None, None

        def __enter__(self):
            self.executor, self.stats = self.__pool._acquire()
            return self.executor, self.stats

        def __exit__(self, exc_type, exc_val, exc_tb):
            self.__pool._release()


def resolve(pool):
    """Return ``pool`` or an inline pool when ``pool`` is None."""
    return pool if pool is not None else WorkerPool("inline", max_workers=0)
