"""Ganglion layer: transient filtering, rectifying nonlinearity and LIF spiking."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple

import numpy as np

from .fixedpoint import FixedPointFormat, quantize, reciprocal_table
from .kernels import get_kernels
from .temporal import HighPassBank, _check_shape

ON, OFF = 1, -1
POLARITY_NAMES = {ON: "ON", OFF: "OFF"}


@dataclass(frozen=True)
class GanglionParams:
    tau_g: float = 0.02        # s, ganglion high-pass time constant
    w_g: float = 0.7           # ganglion high-pass weight
    xi: int = ON               # polarity
    lambda_g: float = 5.0      # slope of the linear branch
    i0_g: float = 0.008        # current at the branch point
    v0_g: float = 0.0          # branch point
    g_leak: float = 0.1
    tau_step: float = 1.0      # membrane integration step, in frames
    refr: int = 2              # refractory frames after a spike
    v_threshold: float = 1.0

    def __post_init__(self):
        if self.xi not in (ON, OFF):
            raise ValueError(f"xi must be +1 or -1, got {self.xi}")
        if self.tau_g <= 0 or not 0.0 <= self.w_g <= 1.0:
            raise ValueError("tau_g must be positive and w_g in [0, 1]")
        if self.i0_g <= 0 or self.lambda_g < 0 or self.g_leak < 0:
            raise ValueError("need i0_g > 0, lambda_g >= 0, g_leak >= 0")
        if self.refr < 0 or int(self.refr) != self.refr:
            raise ValueError("refr must be a non-negative integer")
        if self.v_threshold <= 0 or self.tau_step <= 0:
            raise ValueError("v_threshold and tau_step must be positive")

    def with_polarity(self, xi: int) -> "GanglionParams":
        return replace(self, xi=xi)


def static_nonlinearity(v, params: GanglionParams):
    """Rectifying transfer ``N(v)``: linear above ``v0_g``, hyperbolic below.

    Uses the real-valued branch boundary ``v < v0_g``.  Always positive
    when ``i0_g > 0``.
    """
    v = np.asarray(v, dtype=np.float64)
    d = params.lambda_g * (v - params.v0_g)
    lin = params.i0_g + d
    with np.errstate(divide="ignore", invalid="ignore"):
        sat = params.i0_g / (1.0 - d / params.i0_g)
    out = np.where(v < params.v0_g, sat, lin)
    return out if out.ndim else float(out)


def _nonlinearity_branch_on_sign(x: np.ndarray, params: GanglionParams) -> np.ndarray:
    # Datapath rule: linear branch only for strictly positive input.
    d = params.lambda_g * (x - params.v0_g)
    with np.errstate(divide="ignore", invalid="ignore"):
        sat = params.i0_g * params.i0_g / (params.i0_g - d)
    return np.where(x > 0, params.i0_g + d, sat)


class SpikeEvent(NamedTuple):
    frame: int
    x: int
    y: int
    polarity: int

    @property
    def polarity_name(self) -> str:
        return POLARITY_NAMES[self.polarity]


class SpikeTrain:
    """Columnar store of spike events kept in canonical order.

    Canonical order is by frame, then row (``y``), then column (``x``),
    then ON before OFF.
    """

    def __init__(self, frame=(), x=(), y=(), polarity=(), presorted: bool = False):
        self.frame = np.asarray(frame, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.int64)
        self.y = np.asarray(y, dtype=np.int64)
        self.polarity = np.asarray(polarity, dtype=np.int8)
        if not (self.frame.shape == self.x.shape == self.y.shape == self.polarity.shape):
            raise ValueError("spike columns must have equal length")
        if len(self.frame) and not presorted:
            order = np.lexsort((-self.polarity, self.x, self.y, self.frame))
            for name in ("frame", "x", "y", "polarity"):
                setattr(self, name, getattr(self, name)[order])

    @classmethod
    def from_mask(cls, mask: np.ndarray, frame_index: int, polarity: int) -> "SpikeTrain":
        ys, xs = np.nonzero(mask)
        n = len(xs)
        return cls(np.full(n, frame_index), xs, ys, np.full(n, polarity), presorted=True)

    @classmethod
    def merge_frame(cls, on: "SpikeTrain", off: "SpikeTrain", width: int) -> "SpikeTrain":
        """Interleave one frame's ON and OFF events into canonical order."""
        if not len(off):
            return on
        if not len(on):
            return off
        cols = [np.concatenate([getattr(on, c), getattr(off, c)])
                for c in ("frame", "x", "y", "polarity")]
        key = (cols[2] * width + cols[1]) * 2 + (cols[3] == OFF)
        order = np.argsort(key, kind="stable")
        return cls(*(c[order] for c in cols), presorted=True)

    @classmethod
    def concat(cls, trains) -> "SpikeTrain":
        trains = list(trains)
        if not trains:
            return cls()
        return cls(*(np.concatenate([getattr(t, c) for t in trains])
                     for c in ("frame", "x", "y", "polarity")))

    def select(self, polarity: int | None = None, x: int | None = None,
               y: int | None = None) -> "SpikeTrain":
        keep = np.ones(len(self), dtype=bool)
        if polarity is not None:
            keep &= self.polarity == polarity
        if x is not None:
            keep &= self.x == x
        if y is not None:
            keep &= self.y == y
        return SpikeTrain(self.frame[keep], self.x[keep], self.y[keep], self.polarity[keep])

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[SpikeEvent]:
        for f, x, y, p in zip(self.frame.tolist(), self.x.tolist(), self.y.tolist(),
                              self.polarity.tolist()):
            yield SpikeEvent(f, x, y, p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return all(np.array_equal(getattr(self, c), getattr(other, c))
                   for c in ("frame", "x", "y", "polarity"))

    def __repr__(self) -> str:
        return f"SpikeTrain({len(self)} events)"


class GanglionState:
    """Per-pixel high-pass, membrane potential and refractory counter for one polarity."""

    def __init__(self, params: GanglionParams, shape: tuple[int, int], fps: float,
                 fmt: FixedPointFormat | None = None, backend: str | None = None):
        self.params = params
        self.shape = tuple(shape)
        self.fmt = fmt
        self.hp_g = HighPassBank(params.w_g, params.tau_g, 1.0 / fps, shape, fmt, backend)
        dtype = np.float64 if fmt is None else np.int64
        self.v_m = np.zeros(self.shape, dtype=dtype)
        self.refractory = np.zeros(self.shape, dtype=np.int64)
        self.frame_index = 0
        self.saturations = 0
        if fmt is not None:
            q = lambda v: quantize(v, fmt).raw  # noqa: E731
            self.i0, self.lam, self.v0 = q(params.i0_g), q(params.lambda_g), q(params.v0_g)
            self.g_leak, self.tau = q(params.g_leak), q(params.tau_step)
            self.v_th = q(params.v_threshold)
            self._recip = reciprocal_table()
            self._k = get_kernels(backend)

    def reset(self) -> None:
        self.hp_g.reset()
        self.v_m[...] = 0
        self.refractory[...] = 0
        self.frame_index = 0
        self.saturations = 0

    def current(self, v_bip: np.ndarray) -> np.ndarray:
        p, fmt = self.params, self.fmt
        if fmt is None:
            v_bip = np.asarray(v_bip, dtype=np.float64)
            _check_shape(v_bip, self.shape)
            return _nonlinearity_branch_on_sign(self.hp_g.step(p.xi * v_bip), p)
        v_bip = np.asarray(v_bip, dtype=np.int64)
        _check_shape(v_bip, self.shape)
        driven = v_bip if p.xi == ON else -v_bip
        if p.xi == OFF:
            over = driven > fmt.max_raw
            if over.any():
                self.saturations += int(np.count_nonzero(over))
                driven = np.minimum(driven, fmt.max_raw)
        before = self.hp_g.saturations
        x = self.hp_g.step(driven)
        self.saturations += self.hp_g.saturations - before
        i_gang, n = self._k.nonlinearity_fixed(x, self.i0, self.lam, self.v0, self._recip,
                                               fmt.frac_bits, fmt.min_raw, fmt.max_raw)
        self.saturations += n
        return i_gang

    def fire(self, i_gang: np.ndarray) -> tuple[np.ndarray, SpikeTrain]:
        p, fmt = self.params, self.fmt
        if fmt is None:
            i_gang = np.asarray(i_gang, dtype=np.float64)
            _check_shape(i_gang, self.shape)
            v = self.v_m + (i_gang - p.g_leak * self.v_m) * p.tau_step
            rt = self.refractory - 1
            v[rt >= 1] = 0.0
            spikes = v > p.v_threshold
            v[spikes] = 0.0
            self.refractory = np.where(spikes, p.refr + 1, np.maximum(rt, 0))
            self.v_m = v
        else:
            i_gang = np.asarray(i_gang, dtype=np.int64)
            _check_shape(i_gang, self.shape)
            spikes, n = self._k.lif_fixed(i_gang, self.v_m, self.refractory, self.g_leak,
                                          self.tau, self.v_th, int(p.refr),
                                          fmt.frac_bits, fmt.min_raw, fmt.max_raw)
            self.saturations += n
        events = SpikeTrain.from_mask(spikes, self.frame_index, p.xi)
        self.frame_index += 1
        return self.v_m.copy(), events


def ganglion_current_step(state: GanglionState, v_bip: np.ndarray) -> np.ndarray:
    """I_Gang for one frame of V_Bip, with polarity applied ahead of the high-pass."""
    return state.current(v_bip)


def lif_step(state: GanglionState, i_gang: np.ndarray) -> tuple[np.ndarray, SpikeTrain]:
    """Integrate one frame of current; returns V_m and the frame's spike events."""
    return state.fire(i_gang)
