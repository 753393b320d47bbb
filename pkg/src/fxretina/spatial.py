"""Gaussian kernels and the streaming (line-buffer) 2-D convolution."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fixedpoint import FixedPointFormat, quantize_array
from .kernels import get_kernels

KERNEL_SIZES = (3, 5)


class DegenerateKernelError(ValueError):
    """All kernel weights truncate to zero in the requested format."""


@dataclass(frozen=True)
class Kernel:
    """Square correlation kernel.

    ``weights`` are the real, unit-sum coefficients; ``raw`` holds their
    floor-quantized mantissas when the kernel was built for a fixed-point
    format, else ``None``.
    """

    weights: np.ndarray
    fmt: FixedPointFormat | None = None
    raw: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] not in KERNEL_SIZES:
            raise ValueError(f"kernel must be 3x3 or 5x5, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.raw is not None:
            r = np.asarray(self.raw, dtype=np.int64)
            r.setflags(write=False)
            object.__setattr__(self, "raw", r)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def quantized_weights(self) -> np.ndarray:
        if self.raw is None:
            return self.weights
        return np.ldexp(self.raw.astype(np.float64), -self.fmt.frac_bits)

    @classmethod
    def delta(cls, size: int = 3, fmt: FixedPointFormat | None = None) -> "Kernel":
        w = np.zeros((size, size))
        w[size // 2, size // 2] = 1.0
        return cls.from_weights(w, fmt)

    @classmethod
    def from_weights(cls, weights, fmt: FixedPointFormat | None = None) -> "Kernel":
        weights = np.asarray(weights, dtype=np.float64)
        if fmt is None:
            return cls(weights)
        raw, _ = quantize_array(weights, fmt)
        return cls(weights, fmt, raw)


def gaussian_kernel(sigma_deg: float, pixels_per_degree: float, size: int,
                    fmt: FixedPointFormat | None = None, strict: bool = True) -> Kernel:
    """Unit-sum sampled Gaussian, normalised before quantization.

    ``sigma_deg == 0`` is accepted as the delta-kernel limit (coarse formats
    can truncate a small sigma to zero).  With ``strict`` a fixed-point kernel
    whose weights all truncate to zero raises :class:`DegenerateKernelError`.
    """
    if size not in KERNEL_SIZES:
        raise ValueError(f"kernel size must be 3 or 5, got {size}")
    if sigma_deg < 0 or pixels_per_degree <= 0:
        raise ValueError("sigma_deg must be >= 0 and pixels_per_degree > 0")
    sigma_px = sigma_deg * pixels_per_degree
    if sigma_px == 0:
        return Kernel.delta(size, fmt)
    c = (size - 1) / 2
    idx = np.arange(size) - c
    d2 = idx[:, None] ** 2 + idx[None, :] ** 2
    w = np.exp(-d2 / (2.0 * sigma_px ** 2))
    w /= w.sum()
    kernel = Kernel.from_weights(w, fmt)
    if strict and kernel.raw is not None and not kernel.raw.any():
        raise DegenerateKernelError(
            f"sigma={sigma_px:.3g}px {size}x{size} kernel underflows "
            f"{fmt.frac_bits} fractional bits"
        )
    return kernel


def conv2d_stream(frame: np.ndarray, kernel: Kernel, fmt: FixedPointFormat | None = None,
                  backend: str | None = None) -> tuple[np.ndarray, int]:
    """Zero-padded same-size correlation through the line-buffer engine.

    Reference arithmetic (``fmt is None``) takes float frames and the real
    weights.  Fixed-point arithmetic takes raw int64 frames, accumulates the
    full-precision products, then floors back to ``frac_bits`` and saturates
    once per output sample.  Returns the output and its clamp count.
    """
    frame = np.asarray(frame)
    if frame.ndim != 2 or min(frame.shape) < kernel.size:
        raise ValueError(f"frame {frame.shape} smaller than {kernel.size}x{kernel.size} kernel")
    kern = get_kernels(backend)
    if fmt is None:
        return kern.conv_stream(frame.astype(np.float64, copy=False), kernel.weights), 0
    if kernel.raw is None or kernel.fmt != fmt:
        kernel = Kernel.from_weights(kernel.weights, fmt)
    acc = kern.conv_stream(frame.astype(np.int64, copy=False), kernel.raw) >> fmt.frac_bits
    n_sat = int(np.count_nonzero((acc < fmt.min_raw) | (acc > fmt.max_raw)))
    if n_sat:
        acc = np.clip(acc, fmt.min_raw, fmt.max_raw)
    return acc, n_sat


def conv2d_direct(frame: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Direct zero-padded correlation summing taps in row-major kernel order."""
    frame = np.asarray(frame)
    weights = np.asarray(weights, dtype=frame.dtype)
    k = weights.shape[0]
    half = k // 2
    h, w = frame.shape
    padded = np.zeros((h + 2 * half, w + 2 * half), dtype=frame.dtype)
    padded[half:half + h, half:half + w] = frame
    acc = np.zeros_like(frame)
    for i in range(k):
        for j in range(k):
            acc += weights[i, j] * padded[i:i + h, j:j + w]
    return acc


class LineBuffer:
    """Sample-at-a-time model of the register-bank convolution engine.

    ``size - 1`` row memories of ``width`` samples feed a ``size x size``
    window of registers.  Samples are pushed in raster order; once the
    window is primed each clock yields the output for the pixel ``half``
    rows and ``half`` columns behind the input.  The zero padding to the
    right of each row is clocked in automatically; :meth:`flush` clocks the
    padding rows below the frame.
    """

    def __init__(self, width: int, height: int, weights: np.ndarray):
        self.weights = np.asarray(weights)
        self.k = self.weights.shape[0]
        self.half = self.k // 2
        self.width = width
        self.height = height
        self._zero = self.weights.dtype.type(0)
        self.lines = np.zeros((self.k - 1, width), dtype=self.weights.dtype)
        self.window = np.zeros((self.k, self.k), dtype=self.weights.dtype)
        self.row = 0
        self.col = 0

    def _clock(self, new) -> tuple[int, int, object] | None:
        k, r, c = self.k, self.row, self.col
        if c == 0:
            self.window[:] = self._zero
        column = np.full(k, self._zero, dtype=self.window.dtype)
        if c < self.width:
            for i in range(k - 1):
                src = r - (k - 1) + i
                if src >= 0:
                    column[i] = self.lines[src % (k - 1), c]
            column[k - 1] = new
            self.lines[r % (k - 1), c] = new
        self.window[:, :-1] = self.window[:, 1:]
        self.window[:, -1] = column
        out = None
        ro, co = r - self.half, c - self.half
        if ro >= 0 and co >= 0:
            acc = self._zero
            for i in range(k):
                for j in range(k):
                    acc += self.weights[i, j] * self.window[i, j]
            out = (ro, co, acc)
        self.col += 1
        if self.col == self.width + self.half:
            self.col = 0
            self.row += 1
        return out

    def push(self, sample) -> list[tuple[int, int, object]]:
        """Clock one input sample; returns the ``(row, col, value)`` outputs it completes."""
        if self.row >= self.height:
            raise RuntimeError("frame already complete; call flush()")
        outs = [self._clock(sample)]
        if self.col == self.width:
            while self.col != 0:
                outs.append(self._clock(self._zero))
        return [o for o in outs if o is not None]

    def flush(self) -> list[tuple[int, int, object]]:
        outs = []
        while self.row < self.height + self.half:
            outs.append(self._clock(self._zero))
        return [o for o in outs if o is not None]

    def run(self, frame: np.ndarray) -> np.ndarray:
        out = np.zeros((self.height, self.width), dtype=self.weights.dtype)
        for sample in np.asarray(frame, dtype=self.weights.dtype).ravel():
            for r, c, v in self.push(sample):
                out[r, c] = v
        for r, c, v in self.flush():
            out[r, c] = v
        return out
