"""Throughput measurement of the fixed-point pipeline per kernel backend."""
from __future__ import annotations

import time
from dataclasses import dataclass

from ._backend import BACKENDS, HAVE_NUMBA
from .params import RetinaParams
from .pipeline import Retina
from .stimulus import ChirpSpec, make_chirp


@dataclass(frozen=True)
class BenchResult:
    backend: str
    width: int
    height: int
    frames: int
    seconds: float

    @property
    def fps(self) -> float:
        return self.frames / self.seconds

    def line(self) -> str:
        return (f"backend={self.backend} size={self.width}x{self.height} "
                f"frames={self.frames} seconds={self.seconds:.3f} fps={self.fps:.1f}")


def measure(size: int, frames: int = 200, backend: str = "numba", warmup: int = 5,
            params: RetinaParams | None = None) -> BenchResult:
    """Frames per second of :meth:`Retina.step` on a chirp of ``size`` x ``size``.

    ``warmup`` frames run first so compilation and cache loading are excluded.
    """
    params = (params or RetinaParams()).replace(width=size, height=size)
    spec = ChirpSpec()
    stream = make_chirp(spec, (size, size), params.fps)
    n = min(frames, stream.n_frames - warmup)
    retina = Retina(params, backend=backend)
    for i in range(warmup):
        retina.step(stream.frame(i))
    retina.reset()
    start = time.perf_counter()
    for i in range(n):
        retina.step(stream.frame(i))
    return BenchResult(backend, size, size, n, time.perf_counter() - start)


def available_backends() -> tuple[str, ...]:
    return BACKENDS if HAVE_NUMBA else ("numpy",)


def compare_backends(sizes=(128, 512), frames: int = 200, backends=None) -> list[BenchResult]:
    return [measure(size, frames, b) for size in sizes for b in (backends or available_backends())]
