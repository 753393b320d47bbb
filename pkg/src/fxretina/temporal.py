"""First-order recursive temporal filters, one state sample per pixel.

A bank runs either in real arithmetic (``fmt=None``, float64 frames) or in
fixed point (int64 mantissa frames in ``fmt``).  Fixed-point banks quantize
the time constant first and then the derived coefficients, as a hardware
design storing both constants would.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import GeometryMismatchError
from .fixedpoint import FixedPointFormat, quantize, quantize_real
from .kernels import get_kernels


def _check_shape(frame: np.ndarray, shape: tuple[int, ...]) -> None:
    if frame.shape != shape:
        raise GeometryMismatchError(f"frame shape {frame.shape} does not match state {shape}")


def pole(tau: float, dt: float) -> float:
    """Exact pole mapping ``exp(-dt/tau)``; a zero time constant is a pass-through."""
    return math.exp(-dt / tau) if tau > 0 else 0.0


class LowPassBank:
    """``y[n] = b*x[n] + a*y[n-1]`` with ``a = exp(-dt/tau)``, ``b = 1 - a``."""

    def __init__(self, tau: float, dt: float, shape: tuple[int, ...],
                 fmt: FixedPointFormat | None = None, backend: str | None = None):
        if tau <= 0 or dt <= 0:
            raise ValueError(f"tau and dt must be positive (tau={tau}, dt={dt})")
        self.tau = float(tau)
        self.dt = float(dt)
        self.shape = tuple(shape)
        self.fmt = fmt
        self.saturations = 0
        if fmt is None:
            self.tau_effective = self.tau
            self.a = pole(self.tau, self.dt)
            self.b = 1.0 - self.a
            self._dtype = np.float64
        else:
            self.tau_effective = quantize_real(self.tau, fmt)
            self.a = quantize(pole(self.tau_effective, self.dt), fmt).raw
            self.b = fmt.scale - self.a
            self._dtype = np.int64
            self._k = get_kernels(backend)
        self.state = np.zeros(self.shape, dtype=self._dtype)

    @property
    def coeff_a(self) -> float:
        return self.a if self.fmt is None else math.ldexp(self.a, -self.fmt.frac_bits)

    @property
    def coeff_b(self) -> float:
        return self.b if self.fmt is None else math.ldexp(self.b, -self.fmt.frac_bits)

    def reset(self, value=0) -> None:
        self.state = np.full(self.shape, value, dtype=self._dtype)
        self.saturations = 0

    def step(self, frame: np.ndarray) -> np.ndarray:
        frame = np.asarray(frame, dtype=self._dtype)
        _check_shape(frame, self.shape)
        if self.fmt is None:
            y = self.b * frame + self.a * self.state
            self.state = y
            return y.copy()
        fmt = self.fmt
        y, n = self._k.lowpass_fixed(frame, self.state, self.a, self.b,
                                     fmt.frac_bits, fmt.min_raw, fmt.max_raw)
        self.saturations += n
        return y


class HighPassBank:
    """Partial high-pass ``y = x - w * lowpass_tau(x)``; ``w = 1`` is fully transient."""

    def __init__(self, w: float, tau: float, dt: float, shape: tuple[int, ...],
                 fmt: FixedPointFormat | None = None, backend: str | None = None):
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"high-pass weight must lie in [0, 1], got {w}")
        self.inner = LowPassBank(tau, dt, shape, fmt, backend)
        self.fmt = fmt
        self.shape = self.inner.shape
        self.w_requested = float(w)
        self.w = float(w) if fmt is None else quantize(w, fmt).raw
        self.saturations = 0
        if fmt is not None:
            self._k = get_kernels(backend)

    @property
    def weight(self) -> float:
        return self.w if self.fmt is None else math.ldexp(self.w, -self.fmt.frac_bits)

    def reset(self, value=0) -> None:
        self.inner.reset(value)
        self.saturations = 0

    def step(self, frame: np.ndarray) -> np.ndarray:
        if self.fmt is None:
            frame = np.asarray(frame, dtype=np.float64)
            return frame - self.w * self.inner.step(frame)
        frame = np.asarray(frame, dtype=np.int64)
        _check_shape(frame, self.shape)
        inner, fmt = self.inner, self.fmt
        y, n = self._k.highpass_fixed(frame, inner.state, inner.a, inner.b, self.w,
                                      fmt.frac_bits, fmt.min_raw, fmt.max_raw)
        self.saturations += n
        return y


def lowpass_step(bank: LowPassBank, frame: np.ndarray) -> np.ndarray:
    return bank.step(frame)


def highpass_step(bank: HighPassBank, frame: np.ndarray) -> np.ndarray:
    return bank.step(frame)
