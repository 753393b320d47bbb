"""Run directories on disk and their comparison.

A run directory holds::

    manifest.txt             key = value record of inputs, parameters, counts
    traces/<stage>.csv       probe-pixel time series, ``frame,value``
    snapshots/<stage>_fNNNNN.pgm   full-frame 16-bit dumps
    spikes.csv               ``frame,x,y,polarity`` events

Trace values are written with ``repr`` so a reload is exact.  Snapshot PGMs
map each frame's value range linearly onto 0..65535; the range is stored in
a header comment.
"""
from __future__ import annotations

import csv
import io
import os
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ganglion import OFF, ON, POLARITY_NAMES, SpikeTrain
from .metrics import UndefinedMetricError, spike_agreement, variance_explained, xcorr_peak_lag
from .params import quantized_mapping, to_mapping
from .pipeline import SCORED_STAGES, STAGES, RunResult

MANIFEST = "manifest.txt"
SPIKES = "spikes.csv"
# manifest keys that legitimately differ between identical runs
VOLATILE_PREFIXES = ("timestamp", "wallclock.")


class RunFormatError(ValueError):
    """A run directory is missing files or holds inconsistent data."""


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(v) -> str:
    if v is None:
        return "none"
    return repr(v) if isinstance(v, float) else str(v)


def format_manifest(entries: dict[str, object]) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in entries.items())


def parse_manifest(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if sep:
            out[key.strip()] = value.strip()
    return out


def spikes_csv(spikes: SpikeTrain) -> str:
    buf = io.StringIO()
    buf.write("frame,x,y,polarity\n")
    names = np.where(spikes.polarity == ON, "ON", "OFF")
    for f, x, y, p in zip(spikes.frame.tolist(), spikes.x.tolist(), spikes.y.tolist(), names):
        buf.write(f"{f},{x},{y},{p}\n")
    return buf.getvalue()


def read_spikes(path: Path) -> SpikeTrain:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["frame", "x", "y", "polarity"]:
            raise RunFormatError(f"{path}: bad spike header {header}")
        cols = ([], [], [], [])
        lookup = {v: k for k, v in POLARITY_NAMES.items()}
        for row in reader:
            try:
                cols[0].append(int(row[0]))
                cols[1].append(int(row[1]))
                cols[2].append(int(row[2]))
                cols[3].append(lookup[row[3]])
            except (ValueError, KeyError, IndexError):
                raise RunFormatError(f"{path}: bad spike row {row}") from None
    return SpikeTrain(*cols)


def trace_csv(values: np.ndarray) -> str:
    return "frame,value\n" + "".join(f"{i},{float(v)!r}\n" for i, v in enumerate(values))


def read_trace(path: Path) -> np.ndarray:
    lines = path.read_text().splitlines()
    if not lines or lines[0] != "frame,value":
        raise RunFormatError(f"{path}: bad trace header")
    try:
        return np.array([float(line.split(",")[1]) for line in lines[1:]])
    except (IndexError, ValueError):
        raise RunFormatError(f"{path}: malformed trace row") from None


def snapshot_pgm(values: np.ndarray, stage: str, frame: int) -> bytes:
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    scaled = np.zeros(values.shape) if span == 0 else (values - lo) / span * 65535.0
    h, w = values.shape
    header = (f"P5\n# stage={stage} frame={frame} min={lo!r} max={hi!r}\n"
              f"{w} {h}\n65535\n").encode()
    return header + np.rint(scaled).astype(">u2").tobytes()


def write_run(result: RunResult, out_dir: str | os.PathLike, stages=STAGES,
              input_desc: dict[str, object] | None = None) -> list[Path]:
    """Write ``result`` into ``out_dir`` (replaced as a whole) and return the files."""
    out_dir = Path(out_dir)
    staging = out_dir.with_name(f".{out_dir.name}.partial{os.getpid()}")
    if staging.exists():
        shutil.rmtree(staging)
    (staging / "traces").mkdir(parents=True)
    files: list[Path] = []
    for s in stages:
        (staging / "traces" / f"{s}.csv").write_text(trace_csv(result.traces[s]))
        files.append(Path("traces") / f"{s}.csv")
    if result.snapshots:
        (staging / "snapshots").mkdir()
        for f, taps in sorted(result.snapshots.items()):
            for s in stages:
                name = Path("snapshots") / f"{s}_f{f:05d}.pgm"
                (staging / name).write_bytes(snapshot_pgm(taps[s], s, f))
                files.append(name)
    (staging / SPIKES).write_text(spikes_csv(result.spikes))
    files.append(Path(SPIKES))

    p = result.params
    manifest: dict[str, object] = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                                   "mode": result.mode}
    for k, v in (input_desc or {}).items():
        manifest[f"input.{k}"] = v
    manifest.update({"frames": result.n_frames, "width": p.width, "height": p.height,
                     "fps": p.fps, "probe": f"{result.probe[0]},{result.probe[1]}"})
    for k, v in to_mapping(p).items():
        manifest[f"param.{k}.requested"] = v
    for k, v in quantized_mapping(p).items():
        manifest[f"param.{k}.quantized"] = v
    for k, v in result.saturations.items():
        manifest[f"saturation.{k}"] = v
    manifest["spikes.on"] = int(np.count_nonzero(result.spikes.polarity == ON))
    manifest["spikes.off"] = int(np.count_nonzero(result.spikes.polarity == OFF))
    manifest["outputs"] = ",".join(str(f) for f in files)
    manifest["wallclock.seconds"] = round(result.elapsed, 6)
    manifest["wallclock.fps"] = round(result.fps_achieved, 3) if result.elapsed > 0 else "inf"
    (staging / MANIFEST).write_text(format_manifest(manifest))
    files.append(Path(MANIFEST))

    if out_dir.exists():
        old = out_dir.with_name(f".{out_dir.name}.old{os.getpid()}")
        os.replace(out_dir, old)
        os.replace(staging, out_dir)
        shutil.rmtree(old)
    else:
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        os.replace(staging, out_dir)
    return [out_dir / f for f in files]


@dataclass
class LoadedRun:
    path: Path
    manifest: dict[str, str]
    traces: dict[str, np.ndarray]
    spikes: SpikeTrain

    @property
    def n_frames(self) -> int:
        return int(self.manifest["frames"])

    @property
    def geometry(self) -> tuple[int, int]:
        return int(self.manifest["width"]), int(self.manifest["height"])


def read_run(path: str | os.PathLike) -> LoadedRun:
    path = Path(path)
    mf = path / MANIFEST
    if not mf.is_file():
        raise RunFormatError(f"{path}: no {MANIFEST}")
    manifest = parse_manifest(mf.read_text())
    for key in ("frames", "width", "height"):
        if key not in manifest:
            raise RunFormatError(f"{mf}: missing {key}")
    traces = {}
    tdir = path / "traces"
    if tdir.is_dir():
        for f in sorted(tdir.glob("*.csv")):
            traces[f.stem] = read_trace(f)
    sp = path / SPIKES
    spikes = read_spikes(sp) if sp.is_file() else SpikeTrain()
    return LoadedRun(path, manifest, traces, spikes)


# --- comparison ------------------------------------------------------------------

DEFAULT_THRESHOLDS = {"I_OPL": 0.95, "V_Bip": 0.99, "I_Gang_ON": 0.99, "I_Gang_OFF": 0.99}


@dataclass
class StageScore:
    stage: str
    variance_explained: float | None   # None when undefined (constant reference)
    lag: int | None
    rms_error: float
    threshold: float | None
    identical: bool

    @property
    def passed(self) -> bool:
        if self.identical:
            return True
        ve_ok = self.variance_explained is not None and (
            self.threshold is None or self.variance_explained >= self.threshold)
        return ve_ok and self.lag == 0


@dataclass
class Comparison:
    stages: list[StageScore]
    spike_scores: dict[str, float]
    spike_threshold: float
    extra: dict[str, object] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stages) and all(
            v >= self.spike_threshold for v in self.spike_scores.values())

    def report(self) -> str:
        entries: dict[str, object] = dict(self.extra)
        for s in self.stages:
            entries[f"{s.stage}.variance_explained"] = (
                "undefined" if s.variance_explained is None else round(s.variance_explained, 6))
            entries[f"{s.stage}.lag"] = "undefined" if s.lag is None else s.lag
            entries[f"{s.stage}.rms_error"] = s.rms_error
            if s.threshold is not None:
                entries[f"{s.stage}.threshold"] = s.threshold
            entries[f"{s.stage}.pass"] = s.passed
        for k, v in self.spike_scores.items():
            entries[f"spikes.{k}.agreement"] = round(v, 6)
        entries["spikes.threshold"] = self.spike_threshold
        entries["result"] = "PASS" if self.passed else "FAIL"
        return format_manifest(entries)

    def csv(self) -> str:
        rows = ["stage,variance_explained,lag,rms_error,threshold,pass"]
        for s in self.stages:
            ve = "" if s.variance_explained is None else repr(s.variance_explained)
            lag = "" if s.lag is None else str(s.lag)
            th = "" if s.threshold is None else repr(s.threshold)
            rows.append(f"{s.stage},{ve},{lag},{s.rms_error!r},{th},{s.passed}")
        return "\n".join(rows) + "\n"


def score_stage(stage: str, ref: np.ndarray, test: np.ndarray, threshold: float | None,
                max_lag: int) -> StageScore:
    identical = bool(np.array_equal(ref, test))
    rms = float(np.sqrt(np.mean((ref - test) ** 2)))
    try:
        ve = variance_explained(ref, test)
    except UndefinedMetricError:
        ve = None
    try:
        lag = xcorr_peak_lag(ref, test, min(max_lag, (len(ref) - 1) // 2))
    except UndefinedMetricError:
        lag = None
    return StageScore(stage, ve, lag, rms, threshold, identical)


def compare_runs(a: LoadedRun, b: LoadedRun, thresholds: dict[str, float] | None = None,
                 spike_threshold: float = 0.9, slack: int = 1, max_lag: int = 20) -> Comparison:
    """Score run ``b`` against reference run ``a``."""
    if a.geometry != b.geometry or a.n_frames != b.n_frames:
        raise RunFormatError(
            f"incompatible runs: {a.geometry[0]}x{a.geometry[1]}x{a.n_frames} vs "
            f"{b.geometry[0]}x{b.geometry[1]}x{b.n_frames}")
    if a.manifest.get("probe") != b.manifest.get("probe"):
        raise RunFormatError("runs recorded different probe pixels")
    thresholds = DEFAULT_THRESHOLDS if thresholds is None else thresholds
    common = [s for s in SCORED_STAGES if s in a.traces and s in b.traces]
    stages = [score_stage(s, a.traces[s], b.traces[s], thresholds.get(s), max_lag)
              for s in common]
    spikes = {name.lower(): spike_agreement(a.spikes.select(polarity=pol),
                                            b.spikes.select(polarity=pol), slack)
              for pol, name in POLARITY_NAMES.items()}
    extra = {"run_a": str(a.path), "run_b": str(b.path), "frames": a.n_frames,
             "slack": slack, "max_lag": max_lag}
    return Comparison(stages, spikes, spike_threshold, extra)
