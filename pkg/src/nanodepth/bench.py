"""Host throughput benchmark for forward passes."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .arch.graph import NetworkGraph, forward


@dataclass(frozen=True)
class BenchReport:
    images_per_second: float
    wall_time: float
    image_shape: tuple[int, int, int]
    batch: int
    warmup: int
    iterations: int
    repeats: int
    threads: str

    def as_text(self) -> str:
        c, h, w = self.image_shape
        return (f"images_per_second={self.images_per_second:.3f}\n"
                f"wall_time={self.wall_time:.3f}\n"
                f"image_shape={c}x{h}x{w}\nbatch={self.batch}\nwarmup={self.warmup}\n"
                f"iterations={self.iterations}\nrepeats={self.repeats}\nthreads={self.threads}\n")


def _threads() -> str:
    try:
        from threadpoolctl import threadpool_info
        info = threadpool_info()
        return ",".join(f"{i['internal_api']}:{i['num_threads']}" for i in info) or "unknown"
    except Exception:  # threadpoolctl is optional
        return "unknown"


def bench(graph: NetworkGraph, weights, iterations: int = 10, warmup: int = 2, batch: int = 1,
          repeats: int = 3, seed: int = 0) -> BenchReport:
    """Time ``repeats`` runs of ``iterations`` forward passes each.

    Reports the median run's throughput; ``wall_time`` covers all measured
    runs (warmup excluded), so ``wall_time >= iterations * batch / images_per_second``.
    """
    if iterations < 10:
        raise ValueError("iterations must be >= 10")
    x = np.random.default_rng(seed).random((batch,) + graph.input_shape).astype(np.float32)
    for _ in range(warmup):
        forward(graph, weights, x)
    runs = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(iterations):
            forward(graph, weights, x)
        runs.append(time.perf_counter() - t0)
    ips = statistics.median(iterations * batch / t for t in runs)
    return BenchReport(ips, sum(runs), graph.input_shape, batch, warmup, iterations, repeats,
                       _threads())
