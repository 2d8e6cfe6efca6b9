# spde/engine.py
"""
Deterministic parallel Monte Carlo.

Paths are cut into fixed chunks of consecutive indices; the chunking never
depends on the worker count, chunk results come back in chunk order
(ordered imap), and sums are combined by a pairwise tree over chunk index.
Together these make every reduction bit-identical for 1 or 64 workers.
"""

import logging
import operator
from dataclasses import dataclass
from functools import partial
from multiprocessing import Pool
from typing import Callable, Iterable, Iterator, Optional, TypeVar

import numpy as np

from spde.config import ExperimentConfig
from spde.errors import ValidationError
from spde.kernels import HomogeneousField, InitialData, KernelSpec, homogeneous_solution
from spde.noise import HurstParam, SpaceTimeGrid, sample_noise_slab
from spde.solver import SigmaAffine, march

logger = logging.getLogger(__name__)

CHUNK_SIZE = 8
T = TypeVar("T")


@dataclass
class ExperimentContext:
    config: ExperimentConfig
    grid: SpaceTimeGrid
    kernel: KernelSpec
    hurst: HurstParam
    init: InitialData
    sigma: SigmaAffine
    homogeneous: HomogeneousField


_contexts: dict[tuple[str, int], ExperimentContext] = {}


def experiment_context(config: ExperimentConfig, refine: int = 0) -> ExperimentContext:
    """Build (once per process) everything a path worker shares read-only."""
    key = (config.config_hash(), refine)
    if key not in _contexts:
        grid = config.build_grid(refine)
        kernel = config.build_kernel()
        init = config.build_init(grid)
        _contexts.clear()
        _contexts[key] = ExperimentContext(
            config=config, grid=grid, kernel=kernel, hurst=config.hurst(), init=init,
            sigma=config.build_sigma(),
            homogeneous=homogeneous_solution(kernel, init, grid))
    return _contexts[key]


def simulate_path(ctx: ExperimentContext, path: int, source: str = "solution") -> np.ndarray:
    """One Monte Carlo sample of the observed field.

    "solution" is u on all nt+1 rows (the last Picard iterate when the scheme
    is picard); "noise_trace" is the spatial fBm trace x -> Σ_j ΔX(n, j) of
    every noise row, with no PDE involved.
    """
    slab = sample_noise_slab(ctx.grid, ctx.hurst, ctx.config.run.seed, path)
    if source == "noise_trace":
        return np.cumsum(slab.increments, axis=1)
    w = ctx.homogeneous.w
    if ctx.config.solver.scheme == "picard":
        current = w
        for _ in range(ctx.config.solver.n_iters):
            current, _ = march(ctx.kernel, ctx.grid, w, slab, ctx.sigma, driver=current)
        return current
    u, _ = march(ctx.kernel, ctx.grid, w, slab, ctx.sigma)
    return u


def path_chunks(M: int, chunk_size: int = CHUNK_SIZE) -> list[range]:
    if M < 1:
        raise ValidationError(f"path count must be positive, got {M}", field="paths")
    return [range(start, min(start + chunk_size, M)) for start in range(0, M, chunk_size)]


def _chunk_results(fn: Callable[[object, range], T], payload, M: int,
                   workers: Optional[int], chunk_size: int) -> Iterator[T]:
    """Yield fn(payload, chunk) for every chunk of path indices, in chunk order."""
    chunks = path_chunks(M, chunk_size)
    task = partial(fn, payload)
    workers = max(1, min(workers or 1, len(chunks)))
    logger.info("[engine] %d paths in %d chunks on %d worker(s)", M, len(chunks), workers)
    done = 0
    try:
        if workers == 1:
            for chunk in chunks:
                yield task(chunk)
                done += len(chunk)
        else:
            with Pool(processes=workers) as pool:
                for chunk, result in zip(chunks, pool.imap(task, chunks)):
                    yield result
                    done += len(chunk)
    except Exception as exc:
        logger.error("[engine] worker failed after %d of %d paths: %s", done, M, exc)
        exc.completed_paths = done
        raise


def run_chunks(fn: Callable[[object, range], T], payload, M: int,
               workers: Optional[int] = 1, chunk_size: int = CHUNK_SIZE) -> list[T]:
    return list(_chunk_results(fn, payload, M, workers, chunk_size))


class TreeAccumulator:
    """Streaming pairwise reduction.

    Partial sums sit on a stack tagged with their level and two entries of
    equal level merge as soon as they meet, like carries in a binary counter.
    The association order depends only on how many items arrive.
    """

    def __init__(self, combine: Callable[[T, T], T] = operator.add):
        self.combine = combine
        self._stack: list[tuple[int, T]] = []

    def push(self, item: T) -> None:
        level, value = 0, item
        while self._stack and self._stack[-1][0] == level:
            _, left = self._stack.pop()
            value = self.combine(left, value)
            level += 1
        self._stack.append((level, value))

    def result(self) -> T:
        if not self._stack:
            raise ValueError("nothing to reduce")
        _, value = self._stack[-1]
        for _, left in reversed(self._stack[:-1]):
            value = self.combine(left, value)
        return value


def tree_reduce(items: Iterable[T], combine: Callable[[T, T], T] = operator.add) -> T:
    acc = TreeAccumulator(combine)
    for item in items:
        acc.push(item)
    return acc.result()


def add_tuples(left: tuple, right: tuple) -> tuple:
    return tuple(a + b for a, b in zip(left, right))


def reduce_chunks(fn: Callable[[object, range], T], payload, M: int,
                  workers: Optional[int] = 1, combine: Callable[[T, T], T] = operator.add,
                  chunk_size: int = CHUNK_SIZE) -> T:
    """Fold chunk results into a tree reduction as they arrive."""
    return tree_reduce(_chunk_results(fn, payload, M, workers, chunk_size), combine)
