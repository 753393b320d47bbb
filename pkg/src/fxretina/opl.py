"""Outer plexiform layer: centre path, surround path and their weighted difference."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixedpoint import FixedPointFormat, quantize, quantize_real
from .kernels import get_kernels
from .spatial import Kernel, conv2d_stream, gaussian_kernel
from .temporal import HighPassBank, LowPassBank, _check_shape


@dataclass(frozen=True)
class OplParams:
    sigma_c: float = 0.05      # deg, centre Gaussian (3x3)
    tau_c: float = 0.01        # s, centre low-pass
    tau_u: float = 0.01        # s, inner low-pass of the centre high-pass
    w_c: float = 1.0           # centre high-pass weight; 1 = phasic
    sigma_s: float = 0.15      # deg, surround Gaussian (5x5)
    tau_s: float = 0.01        # s, surround low-pass
    lambda_opl: float = 1.0
    omega_opl: float = 0.5

    def __post_init__(self):
        for name in ("sigma_c", "tau_c", "tau_u", "sigma_s", "tau_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("w_c", "omega_opl"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class OplOutput:
    center: np.ndarray
    surround: np.ndarray
    current: np.ndarray


class OplState:
    """Per-pixel state of the OPL for one stream geometry.

    With ``fmt=None`` frames are float64 luminance; otherwise raw int64
    mantissas in ``fmt``.  ``strict_kernels=False`` tolerates kernels that
    truncate to all zeros at coarse formats (used by the bit-width sweep).
    """

    def __init__(self, params: OplParams, shape: tuple[int, int], dt: float,
                 pixels_per_degree: float = 20.0, fmt: FixedPointFormat | None = None,
                 backend: str | None = None, strict_kernels: bool = True):
        self.params = params
        self.shape = tuple(shape)
        self.fmt = fmt
        self.backend = backend
        sig = (lambda s: s) if fmt is None else (lambda s: quantize_real(s, fmt))
        self.kernel_c: Kernel = gaussian_kernel(sig(params.sigma_c), pixels_per_degree, 3,
                                                fmt, strict_kernels)
        self.kernel_s: Kernel = gaussian_kernel(sig(params.sigma_s), pixels_per_degree, 5,
                                                fmt, strict_kernels)
        self.lp_c = LowPassBank(params.tau_c, dt, shape, fmt, backend)
        self.hp_u = HighPassBank(params.w_c, params.tau_u, dt, shape, fmt, backend)
        self.lp_s = LowPassBank(params.tau_s, dt, shape, fmt, backend)
        if fmt is None:
            self.lam, self.omega = params.lambda_opl, params.omega_opl
        else:
            self.lam = quantize(params.lambda_opl, fmt).raw
            self.omega = quantize(params.omega_opl, fmt).raw
            self._k = get_kernels(backend)
        self.saturations = 0

    def reset(self) -> None:
        for bank in (self.lp_c, self.hp_u, self.lp_s):
            bank.reset()
        self.saturations = 0

    def _conv(self, frame, kernel):
        out, n = conv2d_stream(frame, kernel, self.fmt, self.backend)
        self.saturations += n
        return out

    def step(self, frame: np.ndarray) -> OplOutput:
        frame = np.asarray(frame)
        _check_shape(frame, self.shape)
        banks = (self.lp_c, self.hp_u, self.lp_s)
        before = sum(b.saturations for b in banks)
        center = self.hp_u.step(self.lp_c.step(self._conv(frame, self.kernel_c)))
        surround = self.lp_s.step(self._conv(center, self.kernel_s))
        if self.fmt is None:
            current = self.lam * (center - self.omega * surround)
        else:
            fmt = self.fmt
            current, n = self._k.opl_combine_fixed(center, surround, self.lam, self.omega,
                                                   fmt.frac_bits, fmt.min_raw, fmt.max_raw)
            self.saturations += n
        self.saturations += sum(b.saturations for b in banks) - before
        return OplOutput(center, surround, current)


def opl_step(state: OplState, frame: np.ndarray) -> OplOutput:
    """Advance the OPL by one frame; returns the C, S and I_OPL taps."""
    return state.step(frame)
