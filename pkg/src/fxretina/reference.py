"""Double-precision reference model, evaluated a block of frames at a time.

The linear stages are whole-block operations: spatial correlation over
every frame of the block at once and first-order recursions along the time
axis with carried filter state.  The bipolar feedback loop and the spiking
stage are inherently frame-recursive and run frame by frame, vectorised
over pixels.  Exponentials and divisions are exact.
"""
from __future__ import annotations

import time

import numpy as np
from scipy import ndimage, signal

from .ganglion import OFF, ON, SpikeTrain, _nonlinearity_branch_on_sign
from .params import RetinaParams
from .pipeline import STAGES, RunResult, _check_stream, default_probe
from .spatial import gaussian_kernel
from .stimulus import FrameStream
from .temporal import pole

DEFAULT_BLOCK = 64


def _correlate(block: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return ndimage.correlate(block, weights[None, :, :], mode="constant", cval=0.0)


class _Recursion:
    """``y[n] = b x[n] + a y[n-1]`` along axis 0 with state carried between blocks."""

    def __init__(self, tau: float, dt: float, shape):
        self.a = pole(tau, dt)
        self.b = 1.0 - self.a
        self.y = np.zeros((1, *shape))

    def __call__(self, block: np.ndarray) -> np.ndarray:
        out, _ = signal.lfilter([self.b], [1.0, -self.a], block, axis=0, zi=self.a * self.y)
        self.y = out[-1:]
        return out


class ReferenceRetina:
    def __init__(self, params: RetinaParams):
        self.params = params
        o, b, g = params.opl, params.bipolar, params.ganglion
        ppd, shape, dt = params.pixels_per_degree, params.shape, params.dt
        self.w_c = gaussian_kernel(o.sigma_c, ppd, 3).weights
        self.w_s = gaussian_kernel(o.sigma_s, ppd, 5).weights
        self.w_a = gaussian_kernel(b.sigma_a, ppd, 5).weights
        self.lp_c = _Recursion(o.tau_c, dt, shape)
        self.lp_u = _Recursion(o.tau_u, dt, shape)
        self.lp_s = _Recursion(o.tau_s, dt, shape)
        self.lp_g = {ON: _Recursion(g.tau_g, dt, shape), OFF: _Recursion(g.tau_g, dt, shape)}
        self.step = b.step_seconds(params.fps)
        self.v = np.zeros(shape)
        self.ea = np.zeros(shape)
        self.ea_lp = np.zeros(shape)
        self.a_fb = pole(b.tau_a, dt)
        self.v_m = {ON: np.zeros(shape), OFF: np.zeros(shape)}
        self.rt = {ON: np.zeros(shape, dtype=np.int64), OFF: np.zeros(shape, dtype=np.int64)}
        self.frame_index = 0

    def _bipolar(self, i_opl: np.ndarray) -> np.ndarray:
        b = self.params.bipolar
        out = np.empty_like(i_opl)
        for n in range(i_opl.shape[0]):
            g = b.g0_a + self.ea
            e_inf = b.inputamp * i_opl[n] / g
            v = (self.v - e_inf) * np.exp(-self.step * g) + e_inf
            if b.lambda_a != 0 or self.ea.any():
                self.ea_lp = (1.0 - self.a_fb) * (b.lambda_a * self.v * self.v) + self.a_fb * self.ea_lp
                self.ea = _correlate(self.ea_lp[None], self.w_a)[0]
            self.v = v
            out[n] = v
        return out

    def _spikes(self, current: np.ndarray, xi: int):
        g = self.params.ganglion
        v_m, rt = self.v_m[xi], self.rt[xi]
        vm_out = np.empty_like(current)
        masks = np.zeros(current.shape, dtype=bool)
        for n in range(current.shape[0]):
            v = v_m + (current[n] - g.g_leak * v_m) * g.tau_step
            rt = rt - 1
            v[rt >= 1] = 0.0
            spk = v > g.v_threshold
            v[spk] = 0.0
            rt = np.where(spk, g.refr + 1, np.maximum(rt, 0))
            v_m = v
            vm_out[n] = v
            masks[n] = spk
        self.v_m[xi], self.rt[xi] = v_m, rt
        return vm_out, masks

    def process(self, block: np.ndarray) -> dict[str, np.ndarray]:
        """Advance by a ``(n, height, width)`` luminance block; returns every stage."""
        o, g = self.params.opl, self.params.ganglion
        lp_c = self.lp_c(_correlate(block, self.w_c))
        center = lp_c - o.w_c * self.lp_u(lp_c)
        surround = self.lp_s(_correlate(center, self.w_s))
        i_opl = o.lambda_opl * (center - o.omega_opl * surround)
        v_bip = self._bipolar(i_opl)
        out = {"C": center, "S": surround, "I_OPL": i_opl, "V_Bip": v_bip}
        for xi, tag in ((ON, "ON"), (OFF, "OFF")):
            drive = xi * v_bip
            x = drive - g.w_g * self.lp_g[xi](drive)
            current = _nonlinearity_branch_on_sign(x, g)
            vm, masks = self._spikes(current, xi)
            out[f"I_Gang_{tag}"] = current
            out[f"V_m_{tag}"] = vm
            out[f"spikes_{tag}"] = masks
        self.frame_index += block.shape[0]
        return out


def run_reference(stream: FrameStream, params: RetinaParams, probe: tuple[int, int] | None = None,
                  snapshot_frames=(), record_spikes: bool = True,
                  block: int = DEFAULT_BLOCK) -> RunResult:
    """Run the double-precision model over ``stream``.

    Pass ``params.quantized()`` to evaluate the model with the constants the
    fixed-point datapath actually uses.
    """
    _check_stream(stream, params)
    x, y = probe if probe is not None else default_probe(params)
    if not (0 <= x < params.width and 0 <= y < params.height):
        raise ValueError(f"probe ({x}, {y}) outside the frame")
    wanted = {int(f) for f in snapshot_frames}
    if any(not 0 <= f < stream.n_frames for f in wanted):
        raise ValueError("snapshot frame index outside the stream")
    model = ReferenceRetina(params)
    n = stream.n_frames
    traces = {s: np.zeros(n) for s in STAGES}
    snapshots: dict[int, dict[str, np.ndarray]] = {}
    spikes = []
    start = time.perf_counter()
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        out = model.process(stream.chunk(lo, hi))
        for s in STAGES:
            traces[s][lo:hi] = out[s][:, y, x]
        for f in sorted(wanted & set(range(lo, hi))):
            snapshots[f] = {s: out[s][f - lo].copy() for s in STAGES}
        if record_spikes:
            for xi, tag in ((ON, "ON"), (OFF, "OFF")):
                t, ys, xs = np.nonzero(out[f"spikes_{tag}"])
                spikes.append(SpikeTrain(t + lo, xs, ys, np.full(len(t), xi)))
    return RunResult(
        mode="reference",
        params=params,
        n_frames=n,
        probe=(x, y),
        traces=traces,
        snapshots=snapshots,
        spikes=SpikeTrain.concat(spikes),
        saturations={},
        elapsed=time.perf_counter() - start,
    )
