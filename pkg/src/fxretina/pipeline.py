"""Frame-by-frame retina: OPL, bipolar gain control, ON and OFF ganglion channels."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bipolar import BipolarState
from .errors import GeometryMismatchError
from .fixedpoint import quantize_array, to_real
from .ganglion import OFF, ON, GanglionState, SpikeTrain
from .opl import OplState
from .params import RetinaParams
from .stimulus import FrameStream

STAGES = ("C", "S", "I_OPL", "V_Bip", "I_Gang_ON", "I_Gang_OFF", "V_m_ON", "V_m_OFF")
# stages compared between runs; membrane traces are reset-driven and not scored
SCORED_STAGES = STAGES[:6]


@dataclass
class RunResult:
    """Everything a run records, in real units, with the same layout for every engine."""

    mode: str
    params: RetinaParams
    n_frames: int
    probe: tuple[int, int]                       # (x, y)
    traces: dict[str, np.ndarray]                # stage -> (n_frames,) at the probe
    snapshots: dict[int, dict[str, np.ndarray]]  # frame -> stage -> full frame
    spikes: SpikeTrain
    saturations: dict[str, int] = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def fps_achieved(self) -> float:
        return self.n_frames / self.elapsed if self.elapsed > 0 else float("inf")


def default_probe(params: RetinaParams) -> tuple[int, int]:
    return (params.width // 2, params.height // 2)


def _check_stream(stream: FrameStream, params: RetinaParams):
    if stream.n_frames == 0:
        raise ValueError("input stream has no frames")
    if stream.geometry != (params.width, params.height):
        raise GeometryMismatchError(
            f"stream is {stream.width}x{stream.height}, parameters expect "
            f"{params.width}x{params.height}")


class Retina:
    """Streaming retina in fixed point (default) or real arithmetic.

    ``step`` consumes one luminance frame and returns every stage tap plus
    the frame's spikes.  Fixed-point taps are raw int64 mantissas in
    ``params.fmt``; :meth:`run` converts recordings to real units.
    """

    def __init__(self, params: RetinaParams, fixed: bool = True, backend: str | None = None,
                 strict_kernels: bool = True):
        self.params = params
        self.fmt = params.fmt if fixed else None
        shape = params.shape
        fmt = self.fmt
        self.opl = OplState(params.opl, shape, params.dt, params.pixels_per_degree, fmt,
                            backend, strict_kernels)
        self.bipolar = BipolarState(params.bipolar, shape, params.fps, params.pixels_per_degree,
                                    fmt, backend, strict_kernels)
        self.on = GanglionState(params.ganglion.with_polarity(ON), shape, params.fps, fmt, backend)
        self.off = GanglionState(params.ganglion.with_polarity(OFF), shape, params.fps, fmt, backend)
        self.input_saturations = 0

    @property
    def mode(self) -> str:
        return "fixed" if self.fmt is not None else "float"

    def reset(self) -> None:
        for stage in (self.opl, self.bipolar, self.on, self.off):
            stage.reset()
        self.input_saturations = 0

    def saturations(self) -> dict[str, int]:
        return {
            "input": self.input_saturations,
            "opl": self.opl.saturations,
            "bipolar": self.bipolar.saturations,
            "ganglion_on": self.on.saturations,
            "ganglion_off": self.off.saturations,
        }

    def step(self, luminance: np.ndarray) -> tuple[dict[str, np.ndarray], SpikeTrain]:
        taps, (sp_on, sp_off) = self._step(luminance)
        return taps, SpikeTrain.merge_frame(sp_on, sp_off, self.params.width)

    def _step(self, luminance):
        if self.fmt is not None:
            frame, n = quantize_array(luminance, self.fmt)
            self.input_saturations += n
        else:
            frame = np.asarray(luminance, dtype=np.float64)
        o = self.opl.step(frame)
        v_bip = self.bipolar.step(o.current)
        i_on = self.on.current(v_bip)
        i_off = self.off.current(v_bip)
        vm_on, sp_on = self.on.fire(i_on)
        vm_off, sp_off = self.off.fire(i_off)
        taps = {"C": o.center, "S": o.surround, "I_OPL": o.current, "V_Bip": v_bip,
                "I_Gang_ON": i_on, "I_Gang_OFF": i_off, "V_m_ON": vm_on, "V_m_OFF": vm_off}
        return taps, (sp_on, sp_off)

    def real(self, values: np.ndarray) -> np.ndarray:
        return values.astype(np.float64) if self.fmt is None else to_real(values, self.fmt)

    def run(self, stream: FrameStream, probe: tuple[int, int] | None = None,
            snapshot_frames=(), record_spikes: bool = True) -> RunResult:
        params = self.params
        _check_stream(stream, params)
        x, y = probe if probe is not None else default_probe(params)
        if not (0 <= x < params.width and 0 <= y < params.height):
            raise ValueError(f"probe ({x}, {y}) outside the frame")
        wanted = {int(f) for f in snapshot_frames}
        if any(not 0 <= f < stream.n_frames for f in wanted):
            raise ValueError("snapshot frame index outside the stream")
        n = stream.n_frames
        dtype = np.int64 if self.fmt is not None else np.float64
        traces = {s: np.zeros(n, dtype=dtype) for s in STAGES}
        snapshots: dict[int, dict[str, np.ndarray]] = {}
        spikes = []
        start = time.perf_counter()
        for i in range(n):
            taps, pair = self._step(stream.frame(i))
            for s in STAGES:
                traces[s][i] = taps[s][y, x]
            if i in wanted:
                snapshots[i] = {s: self.real(taps[s]) for s in STAGES}
            if record_spikes:
                spikes.extend(sp for sp in pair if len(sp))
        elapsed = time.perf_counter() - start
        return RunResult(
            mode=self.mode,
            params=params,
            n_frames=n,
            probe=(x, y),
            traces={s: self.real(v) for s, v in traces.items()},
            snapshots=snapshots,
            spikes=SpikeTrain.concat(spikes),
            saturations=self.saturations(),
            elapsed=elapsed,
        )


def run_fixed(stream: FrameStream, params: RetinaParams, **kwargs) -> RunResult:
    backend = kwargs.pop("backend", None)
    strict = kwargs.pop("strict_kernels", True)
    return Retina(params, fixed=True, backend=backend, strict_kernels=strict).run(stream, **kwargs)
