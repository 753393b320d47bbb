"""Bipolar contrast gain control.

The membrane equation ``dV/dt = I - g_A V`` is advanced with its exact
one-step solution for a frozen conductance::

    g_A  = g0 + E_A[n-1]
    E_inf = inputamp * I_OPL / g_A
    V[n] = (V[n-1] - E_inf) * exp(-dt g_A) + E_inf

The shunting feedback ``E_A`` is a spatially blurred low-pass of
``lambda_A * V[n-1]**2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixedpoint import FixedPointFormat, exp_neg_table, quantize, quantize_real, reciprocal_table
from .kernels import get_kernels
from .spatial import conv2d_stream, gaussian_kernel
from .temporal import LowPassBank, _check_shape


@dataclass(frozen=True)
class BipolarParams:
    sigma_a: float = 0.05      # deg, feedback Gaussian (5x5)
    tau_a: float = 0.005       # s
    g0_a: float = 50.0         # 1/s
    lambda_a: float = 0.0
    inputamp: float = 250.0
    dt: float | None = None    # s; None means 1/fps

    def __post_init__(self):
        if self.sigma_a <= 0 or self.tau_a <= 0:
            raise ValueError("sigma_a and tau_a must be positive")
        if self.g0_a <= 0:
            raise ValueError("g0_a must be positive")
        if self.lambda_a < 0:
            raise ValueError("lambda_a must be non-negative")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")

    def step_seconds(self, fps: float) -> float:
        return self.dt if self.dt is not None else 1.0 / fps


class BipolarState:
    def __init__(self, params: BipolarParams, shape: tuple[int, int], fps: float,
                 pixels_per_degree: float = 20.0, fmt: FixedPointFormat | None = None,
                 backend: str | None = None, strict_kernels: bool = True):
        self.params = params
        self.shape = tuple(shape)
        self.fmt = fmt
        self.backend = backend
        frame_dt = 1.0 / fps
        step = params.step_seconds(fps)
        sigma = params.sigma_a if fmt is None else quantize_real(params.sigma_a, fmt)
        self.kernel_a = gaussian_kernel(sigma, pixels_per_degree, 5, fmt, strict_kernels)
        self.lp_a = LowPassBank(params.tau_a, frame_dt, shape, fmt, backend)
        dtype = np.float64 if fmt is None else np.int64
        self.prev_v = np.zeros(self.shape, dtype=dtype)
        self.prev_ea = np.zeros(self.shape, dtype=dtype)
        self.saturations = 0
        if fmt is None:
            self.g0, self.lam, self.dt, self.inputamp = (
                params.g0_a, params.lambda_a, step, params.inputamp)
        else:
            q = lambda v: quantize(v, fmt).raw  # noqa: E731
            self.g0, self.lam, self.dt, self.inputamp = (
                q(params.g0_a), q(params.lambda_a), q(step), q(params.inputamp))
            self._exp = exp_neg_table(fmt.frac_bits)
            self._recip = reciprocal_table()
            self._k = get_kernels(backend)

    def reset(self) -> None:
        # rebind rather than zero in place: the last step returned prev_v itself
        self.prev_v = np.zeros_like(self.prev_v)
        self.prev_ea = np.zeros_like(self.prev_ea)
        self.lp_a.reset()
        self.saturations = 0

    def _feedback(self, prev_v: np.ndarray) -> np.ndarray:
        fmt = self.fmt
        if fmt is None:
            drive = self.lam * prev_v * prev_v
        else:
            drive, n = self._k.square_gain_fixed(prev_v, self.lam, fmt.frac_bits,
                                                 fmt.min_raw, fmt.max_raw)
            self.saturations += n
        before = self.lp_a.saturations
        smoothed = self.lp_a.step(drive)
        out, n = conv2d_stream(smoothed, self.kernel_a, fmt, self.backend)
        self.saturations += n + self.lp_a.saturations - before
        return out

    def step(self, i_opl: np.ndarray) -> np.ndarray:
        fmt = self.fmt
        if fmt is None:
            i_opl = np.asarray(i_opl, dtype=np.float64)
            _check_shape(i_opl, self.shape)
            g = self.g0 + self.prev_ea
            att = np.exp(-self.dt * g)
            e_inf = self.inputamp * i_opl / g
            v = (self.prev_v - e_inf) * att + e_inf
        else:
            i_opl = np.asarray(i_opl, dtype=np.int64)
            _check_shape(i_opl, self.shape)
            v, n = self._k.bipolar_fixed(i_opl, self.prev_v, self.prev_ea, self.g0, self.dt,
                                         self.inputamp, self._exp, self._recip,
                                         fmt.frac_bits, fmt.min_raw, fmt.max_raw)
            self.saturations += n
        if self.lam == 0 and not self.prev_ea.any():
            # zero feedback gain keeps E_A at exactly zero; skip the dead branch
            ea = self.prev_ea
        else:
            ea = self._feedback(self.prev_v)
        self.prev_v = np.ascontiguousarray(v)
        self.prev_ea = np.ascontiguousarray(ea)
        return v


def bipolar_step(state: BipolarState, i_opl: np.ndarray) -> np.ndarray:
    """Advance the bipolar layer by one frame and return V_Bip."""
    return state.step(i_opl)
