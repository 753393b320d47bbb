"""Luminance inputs: synthetic test stimuli and grayscale frame containers.

Containers
----------
* PGM (P5), 8 or 16 bit, one or more images per file; a directory of
  ``*.pgm`` files is read in sorted name order.
* Raw headerless samples (8 bit, or 16 bit little-endian), frames
  concatenated in raster order.

Either may carry a sidecar text file holding ``width height fps bitdepth``:
``<file>.meta`` next to a file, or ``stream.meta`` inside a directory.
Raw files require one; for PGM it only supplies the frame rate.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import GeometryMismatchError, TruncatedFileError, UnsupportedDepthError

DEFAULT_FPS = 200.0
SIDECAR_SUFFIX = ".meta"
DIR_SIDECAR = "stream.meta"

Geometry = tuple[int, int]  # (width, height)


def frame_index(t: float, fps: float) -> int:
    """Frame containing time ``t``: ``floor(t * fps)``, tolerant of float noise."""
    return int(math.floor(t * fps + 1e-9))


def _frame_count(duration: float, fps: float) -> int:
    return int(round(duration * fps))


def _check_geometry(geometry: Geometry, fps: float) -> tuple[int, int]:
    width, height = (int(v) for v in geometry)
    if width <= 0 or height <= 0:
        raise ValueError(f"geometry must have positive area, got {width}x{height}")
    if not fps > 0:
        raise ValueError(f"fps must be positive, got {fps}")
    return width, height


class FrameStream:
    """Fixed-geometry sequence of luminance frames with samples in ``[0, 1]``.

    ``data`` is any ``(n, height, width)`` array; samples are ``data / scale``.
    Container loads keep their integer samples and synthetic uniform
    stimuli are zero-copy broadcasts of a 1-D profile, so long streams stay
    cheap until a frame is requested.
    """

    def __init__(self, data, fps: float, scale: float = 1.0, profile=None):
        data = np.asarray(data) if not isinstance(data, np.ndarray) else data
        if data.ndim != 3:
            raise GeometryMismatchError(f"frames must form an (n, height, width) stack, got {data.shape}")
        if not fps > 0:
            raise ValueError(f"fps must be positive, got {fps}")
        self.data = data
        self.fps = float(fps)
        self.scale = float(scale)
        self.profile = None if profile is None else np.asarray(profile, dtype=np.float64)
        if data.size:
            lo, hi = (self.profile.min(), self.profile.max()) if self.profile is not None \
                else (data.min(), data.max())
            if lo < 0 or hi > scale or np.isnan(hi):
                raise ValueError("luminance samples must lie in [0, 1]")

    @classmethod
    def uniform(cls, profile, geometry: Geometry, fps: float) -> "FrameStream":
        width, height = _check_geometry(geometry, fps)
        profile = np.clip(np.asarray(profile, dtype=np.float64), 0.0, 1.0)
        profile.setflags(write=False)
        data = np.broadcast_to(profile[:, None, None], (len(profile), height, width))
        return cls(data, fps, profile=profile)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def geometry(self) -> Geometry:
        return (self.width, self.height)

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps

    def __len__(self) -> int:
        return self.n_frames

    def frame(self, i: int) -> np.ndarray:
        f = np.asarray(self.data[i], dtype=np.float64)
        return f / self.scale if self.scale != 1.0 else f

    def __getitem__(self, i: int) -> np.ndarray:
        return self.frame(i)

    def __iter__(self) -> Iterator[np.ndarray]:
        for i in range(self.n_frames):
            yield self.frame(i)

    def chunk(self, start: int, stop: int) -> np.ndarray:
        block = np.asarray(self.data[start:stop], dtype=np.float64)
        return block / self.scale if self.scale != 1.0 else block

    def as_array(self) -> np.ndarray:
        return self.chunk(0, self.n_frames)

    def trace(self, x: int, y: int) -> np.ndarray:
        if self.profile is not None:
            return self.profile.copy()
        return np.asarray(self.data[:, y, x], dtype=np.float64) / self.scale

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameStream):
            return NotImplemented
        return (self.fps == other.fps and self.data.shape == other.data.shape
                and np.array_equal(self.as_array(), other.as_array()))

    def __repr__(self) -> str:
        return f"FrameStream({self.width}x{self.height}, {self.n_frames} frames @ {self.fps:g} fps)"


# --- synthetic stimuli ----------------------------------------------------------


@dataclass(frozen=True)
class ChirpSpec:
    """Full-field chirp: step sequence, then frequency and amplitude sweeps.

    Timeline: ``lead`` s at ``baseline``; OFF/ON/OFF steps at ``pulse_low``,
    ``pulse_high``, ``pulse_low`` for ``pulse_durations``; a sinusoid about
    ``baseline`` whose frequency ramps ``freq_sweep = (f_start, f_end, T)``
    at ``freq_amplitude``; a sinusoid at ``amp_sweep = (f, max amplitude, T)``
    whose amplitude ramps from 0; then ``baseline`` until ``total_duration``.
    """

    baseline: float = 0.5
    pulse_low: float = 0.0
    pulse_high: float = 1.0
    lead: float = 0.5
    pulse_durations: tuple[float, float, float] = (0.5, 0.5, 0.5)
    freq_sweep: tuple[float, float, float] = (1.0, 10.0, 2.0)
    freq_amplitude: float = 0.25
    amp_sweep: tuple[float, float, float] = (5.0, 0.5, 2.0)
    total_duration: float = 7.0

    def __post_init__(self):
        durations = (self.lead, *self.pulse_durations, self.freq_sweep[2], self.amp_sweep[2])
        if any(d <= 0 for d in durations):
            raise ValueError("all chirp segment durations must be positive")
        if not 0 <= self.freq_sweep[0] <= self.freq_sweep[1]:
            raise ValueError("frequency sweep needs 0 <= f_start <= f_end")
        for v in (self.baseline, self.pulse_low, self.pulse_high):
            if not 0.0 <= v <= 1.0:
                raise ValueError("chirp luminance levels must lie in [0, 1]")
        if self.freq_amplitude < 0 or self.amp_sweep[1] < 0:
            raise ValueError("sweep amplitudes must be non-negative")
        if self.total_duration < self.segments_end - 1e-12:
            raise ValueError("total_duration shorter than the chirp segments")

    @property
    def segments_end(self) -> float:
        return self.lead + sum(self.pulse_durations) + self.freq_sweep[2] + self.amp_sweep[2]

    def luminance(self, t) -> np.ndarray:
        """Closed-form luminance at times ``t`` (seconds), clamped to ``[0, 1]``."""
        t = np.asarray(t, dtype=np.float64)
        y = np.full(t.shape, self.baseline)
        edges = np.cumsum([self.lead, *self.pulse_durations])
        for (a, b), level in zip(zip(edges[:-1], edges[1:]),
                                 (self.pulse_low, self.pulse_high, self.pulse_low)):
            y[(t >= a) & (t < b)] = level
        f0, f1, tf = self.freq_sweep
        s = t - edges[-1]
        seg = (s >= 0) & (s < tf)
        phase = 2 * np.pi * (f0 * s + (f1 - f0) * s * s / (2 * tf))
        y[seg] = self.baseline + self.freq_amplitude * np.sin(phase[seg])
        fa, amax, ta = self.amp_sweep
        s = t - edges[-1] - tf
        seg = (s >= 0) & (s < ta)
        y[seg] = self.baseline + (amax * s[seg] / ta) * np.sin(2 * np.pi * fa * s[seg])
        return np.clip(y, 0.0, 1.0)


def make_chirp(spec: ChirpSpec = ChirpSpec(), geometry: Geometry = (128, 128),
               fps: float = DEFAULT_FPS) -> FrameStream:
    _check_geometry(geometry, fps)
    n = _frame_count(spec.total_duration, fps)
    return FrameStream.uniform(spec.luminance(np.arange(n) / fps), geometry, fps)


def make_pulse(low: float, high: float, t_on: float, t_off: float, duration: float,
               geometry: Geometry = (128, 128), fps: float = DEFAULT_FPS) -> FrameStream:
    """Uniform ``low`` with frames ``[floor(t_on*fps), floor(t_off*fps))`` at ``high``."""
    _check_geometry(geometry, fps)
    if not 0.0 <= low <= high <= 1.0:
        raise ValueError("pulse needs 0 <= low <= high <= 1")
    if not 0.0 <= t_on < t_off <= duration:
        raise ValueError("pulse needs 0 <= t_on < t_off <= duration")
    profile = np.full(_frame_count(duration, fps), float(low))
    profile[frame_index(t_on, fps):frame_index(t_off, fps)] = high
    return FrameStream.uniform(profile, geometry, fps)


def make_impulse(amplitude: float, t_hit: float, geometry: Geometry = (128, 128),
                 fps: float = DEFAULT_FPS, duration: float = 0.5) -> FrameStream:
    """All-zero stream except a single uniform frame of ``amplitude`` at ``floor(t_hit*fps)``."""
    _check_geometry(geometry, fps)
    if not 0.0 <= amplitude <= 1.0:
        raise ValueError("impulse amplitude must lie in [0, 1]")
    n = _frame_count(duration, fps)
    k = frame_index(t_hit, fps)
    if not 0.0 <= t_hit or k >= n:
        raise ValueError(f"t_hit={t_hit} s lies outside the {duration} s stream")
    profile = np.zeros(n)
    profile[k] = amplitude
    return FrameStream.uniform(profile, geometry, fps)


def make_flicker(freq: float, amplitude: float, mean: float = 0.5, duration: float = 2.0,
                 geometry: Geometry = (128, 128), fps: float = DEFAULT_FPS) -> FrameStream:
    """Spatially uniform sinusoidal flicker ``mean + amplitude*sin(2 pi f t)``."""
    _check_geometry(geometry, fps)
    if amplitude < 0 or mean - amplitude < 0 or mean + amplitude > 1:
        raise ValueError("flicker must stay within [0, 1]")
    t = np.arange(_frame_count(duration, fps)) / fps
    return FrameStream.uniform(mean + amplitude * np.sin(2 * np.pi * freq * t), geometry, fps)


# --- containers -----------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")
_WHITESPACE = re.compile(rb"\s*")


def _read_sidecar(path: Path) -> tuple[int, int, float, int] | None:
    if not path.exists():
        return None
    parts = path.read_text().split()
    if len(parts) != 4:
        raise ValueError(f"sidecar {path} must hold 'width height fps bitdepth'")
    try:
        w, h, fps, depth = int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise ValueError(f"sidecar {path} has non-numeric fields") from None
    if depth not in (8, 16):
        raise UnsupportedDepthError(f"bit depth {depth} not supported (8 or 16)")
    return w, h, fps, depth


def _sidecar_path(path: Path) -> Path:
    return path / DIR_SIDECAR if path.is_dir() else path.with_name(path.name + SIDECAR_SUFFIX)


def parse_pgm(blob: bytes, name: str = "<pgm>") -> list[tuple[np.ndarray, int]]:
    """Decode every P5 image in ``blob``; returns ``(samples, maxval)`` pairs."""
    images = []
    pos = 0
    while _WHITESPACE.match(blob, pos).end() < len(blob):
        header = []
        for _ in range(4):
            m = _PGM_TOKEN.match(blob, pos)
            if not m:
                raise TruncatedFileError(f"{name}: incomplete PGM header")
            header.append(m.group(1))
            pos = m.end()
        if header[0] != b"P5":
            raise ValueError(f"{name}: not a binary PGM (magic {header[0]!r})")
        try:
            w, h, maxval = (int(v) for v in header[1:])
        except ValueError:
            raise ValueError(f"{name}: malformed PGM header") from None
        if not 0 < maxval < 65536:
            raise UnsupportedDepthError(f"{name}: maxval {maxval} outside 1..65535")
        pos += 1  # single whitespace byte ends the header
        dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
        nbytes = w * h * dtype.itemsize
        if pos + nbytes > len(blob):
            raise TruncatedFileError(f"{name}: image data ends after {len(blob) - pos} of {nbytes} bytes")
        img = np.frombuffer(blob, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
        if img.max(initial=0) > maxval:
            raise ValueError(f"{name}: sample exceeds maxval {maxval}")
        images.append((img, maxval))
        pos += nbytes
    return images


def _stack(images: list[tuple[np.ndarray, int]], expected: Geometry | None, fps: float,
           source: str) -> FrameStream:
    if not images:
        raise ValueError(f"{source}: no frames")
    shape = images[0][0].shape
    maxval = images[0][1]
    for img, mv in images:
        if img.shape != shape:
            raise GeometryMismatchError(f"{source}: frame sizes differ ({img.shape} vs {shape})")
        if mv != maxval:
            raise UnsupportedDepthError(f"{source}: mixed maxval {mv} and {maxval}")
    if expected is not None and (shape[1], shape[0]) != tuple(expected):
        raise GeometryMismatchError(
            f"{source}: frames are {shape[1]}x{shape[0]}, expected {expected[0]}x{expected[1]}")
    data = np.stack([img.astype(np.uint16 if maxval > 255 else np.uint8) for img, _ in images])
    return FrameStream(data, fps, scale=maxval)


def load_video(path: str | os.PathLike, expected_geometry: Geometry | None = None,
               fps: float | None = None) -> FrameStream:
    """Load a PGM file, a directory of PGM files, or a raw file with sidecar."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such input: {path}")
    side = _read_sidecar(_sidecar_path(path))
    rate = fps or (side[2] if side else DEFAULT_FPS)
    if side and expected_geometry is None:
        expected_geometry = (side[0], side[1])
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".pgm")
        images = [im for f in files for im in parse_pgm(f.read_bytes(), str(f))]
        return _stack(images, expected_geometry, rate, str(path))
    if path.suffix.lower() == ".pgm":
        return _stack(parse_pgm(path.read_bytes(), str(path)), expected_geometry, rate, str(path))
    if side is None:
        raise ValueError(f"{path}: raw input needs a sidecar {_sidecar_path(path).name}")
    w, h, _, depth = side
    if expected_geometry is not None and tuple(expected_geometry) != (w, h):
        raise GeometryMismatchError(f"{path}: sidecar says {w}x{h}, expected "
                                    f"{expected_geometry[0]}x{expected_geometry[1]}")
    dtype = np.dtype(np.uint8) if depth == 8 else np.dtype("<u2")
    blob = path.read_bytes()
    frame_bytes = w * h * dtype.itemsize
    if not blob or len(blob) % frame_bytes:
        raise TruncatedFileError(f"{path}: {len(blob)} bytes is not a whole number of "
                                 f"{w}x{h} {depth}-bit frames")
    data = np.frombuffer(blob, dtype=dtype).reshape(-1, h, w).astype(dtype.newbyteorder("="))
    return FrameStream(data, rate, scale=(1 << depth) - 1)


def encode_pgm(samples: np.ndarray, maxval: int) -> bytes:
    samples = np.asarray(samples)
    h, w = samples.shape
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    return f"P5\n{w} {h}\n{maxval}\n".encode() + samples.astype(dtype).tobytes()


def _atomic_write(path: Path, blob: bytes | str) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    if isinstance(blob, str):
        tmp.write_text(blob)
    else:
        tmp.write_bytes(blob)
    os.replace(tmp, path)


def save_frames(stream: FrameStream, path: str | os.PathLike, bitdepth: int = 8,
                layout: str | None = None) -> list[Path]:
    """Write ``stream`` and its sidecar; returns the paths written.

    ``layout`` is ``"dir"`` (one PGM per frame), ``"pgm"`` (multi-image PGM)
    or ``"raw"``; by default it follows the suffix of ``path``.
    """
    if bitdepth not in (8, 16):
        raise UnsupportedDepthError(f"bit depth {bitdepth} not supported (8 or 16)")
    path = Path(path)
    if layout is None:
        layout = {".pgm": "pgm", ".raw": "raw"}.get(path.suffix.lower(), "dir")
    maxval = (1 << bitdepth) - 1
    written = []

    def quantized(i):
        return np.rint(stream.frame(i) * maxval)

    if layout == "dir":
        path.mkdir(parents=True, exist_ok=True)
        digits = max(5, len(str(stream.n_frames - 1)))
        for i in range(stream.n_frames):
            target = path / f"frame_{i:0{digits}d}.pgm"
            _atomic_write(target, encode_pgm(quantized(i), maxval))
            written.append(target)
    elif layout == "pgm":
        blob = b"".join(encode_pgm(quantized(i), maxval) for i in range(stream.n_frames))
        _atomic_write(path, blob)
        written.append(path)
    elif layout == "raw":
        dtype = np.uint8 if bitdepth == 8 else np.dtype("<u2")
        blob = b"".join(quantized(i).astype(dtype).tobytes() for i in range(stream.n_frames))
        _atomic_write(path, blob)
        written.append(path)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    side = _sidecar_path(path)
    _atomic_write(side, f"{stream.width} {stream.height} {stream.fps:.10g} {bitdepth}\n")
    written.append(side)
    return written
