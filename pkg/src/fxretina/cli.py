"""``fxretina`` command line.

Exit status: 0 success, 1 usage or configuration error, 2 comparison
threshold failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .bench import available_backends, measure
from .errors import GeometryMismatchError, TruncatedFileError, UnsupportedDepthError
from .params import (ConfigError, RetinaParams, dump_config, from_mapping, quantized_mapping,
                     read_config_values, to_mapping)
from .pipeline import STAGES, Retina, default_probe
from .reference import run_reference
from .runs import DEFAULT_THRESHOLDS, RunFormatError, compare_runs, read_run, write_run
from .stimulus import (ChirpSpec, load_video, make_chirp, make_flicker, make_impulse,
                       make_pulse, save_frames)

EXIT_OK, EXIT_USAGE, EXIT_THRESHOLD = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text: str, kind=int) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number in {text!r}") from None


def _triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number in {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


# --- stimulus ----------------------------------------------------------------------


def cmd_stimulus(args) -> int:
    geometry = (args.width, args.height)
    try:
        if args.kind == "chirp":
            d = ChirpSpec()
            spec = ChirpSpec(
                baseline=args.baseline, pulse_low=args.low, pulse_high=args.high,
                lead=args.lead, pulse_durations=args.pulses or d.pulse_durations,
                freq_sweep=args.freq_sweep or d.freq_sweep, freq_amplitude=args.freq_amplitude,
                amp_sweep=args.amp_sweep or d.amp_sweep,
                total_duration=args.duration if args.duration is not None else d.total_duration)
            stream = make_chirp(spec, geometry, args.fps)
        elif args.kind == "pulse":
            stream = make_pulse(args.low, args.high, args.t_on, args.t_off,
                                _duration(args, 1.0), geometry, args.fps)
        elif args.kind == "impulse":
            amp = 1.0 if args.amplitude is None else args.amplitude
            stream = make_impulse(amp, args.t_hit, geometry, args.fps,
                                  _duration(args, 0.5))
        else:
            amp = 0.5 if args.amplitude is None else args.amplitude
            stream = make_flicker(args.freq, amp, args.mean,
                                  _duration(args, 2.0), geometry, args.fps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    written = save_frames(stream, args.out, args.bitdepth, args.layout)
    print(f"wrote {stream.n_frames} frames {stream.width}x{stream.height} @ {stream.fps:g} fps "
          f"to {args.out} ({len(written)} files)")
    return EXIT_OK


def _duration(args, default: float) -> float:
    return args.duration if args.duration is not None else default


# --- params ------------------------------------------------------------------------


def _load_params(config: str | None, overrides: dict[str, str]) -> tuple[RetinaParams, set[str]]:
    values = read_config_values(config) if config else {}
    values.update(overrides)
    return from_mapping(values), set(values)


def cmd_params(args) -> int:
    params, _ = _load_params(args.config, _overrides(args.set))
    if args.dump:
        sys.stdout.write(dump_config(params))
        return EXIT_OK
    requested = to_mapping(params)
    quantized = quantized_mapping(params)
    fmt = params.fmt
    print(f"# format: {fmt.total_bits} bits, {fmt.frac_bits} fractional")
    print(f"{'key':<18} {'requested':>14} {'quantized':>14}")
    for k, v in requested.items():
        q = quantized.get(k)
        qs = "" if q is None else f"{q:.4f}"
        rs = "none" if v is None else (f"{v:g}" if isinstance(v, float) else str(v))
        print(f"{k:<18} {rs:>14} {qs:>14}")
    return EXIT_OK


# --- run ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    overrides = _overrides(args.set)
    params, explicit = _load_params(args.config, overrides)
    stream = load_video(args.input, fps=args.fps)
    if stream.n_frames == 0:
        raise UsageError(f"{args.input}: no frames")
    if {"width", "height"} & explicit:
        if (params.width, params.height) != stream.geometry:
            raise GeometryMismatchError(
                f"input is {stream.width}x{stream.height}, configuration says "
                f"{params.width}x{params.height}")
    params = params.replace(width=stream.width, height=stream.height, fps=stream.fps)
    probe = args.probe or default_probe(params)
    if not (0 <= probe[0] < params.width and 0 <= probe[1] < params.height):
        raise UsageError(f"probe {probe} outside the {params.width}x{params.height} frame")
    snaps = args.snapshot or []
    if any(not 0 <= f < stream.n_frames for f in snaps):
        raise UsageError(f"snapshot frames must lie in [0, {stream.n_frames})")
    stages = _stages(args.dump)
    modes = ["fixed", "reference"] if args.mode == "both" else [args.mode]
    desc = {"path": str(args.input), "frames": stream.n_frames}
    out = Path(args.out)
    for mode in modes:
        if mode == "fixed":
            result = Retina(params, backend=args.backend).run(stream, probe, snaps)
        else:
            result = run_reference(stream, params, probe, snaps)
        target = out / mode
        write_run(result, target, stages, desc)
        sat = sum(result.saturations.values())
        print(f"{mode}: {result.n_frames} frames, {len(result.spikes)} spikes, "
              f"{sat} saturations, {result.fps_achieved:.1f} fps -> {target}")
    return EXIT_OK


def _stages(spec: str) -> tuple[str, ...]:
    if spec == "all":
        return STAGES
    wanted = tuple(s.strip() for s in spec.split(",") if s.strip())
    unknown = [s for s in wanted if s not in STAGES]
    if unknown:
        raise UsageError(f"unknown stage(s) {', '.join(unknown)}; choose from {', '.join(STAGES)}")
    return wanted


# --- compare -----------------------------------------------------------------------


def cmd_compare(args) -> int:
    a, b = read_run(args.run_a), read_run(args.run_b)
    thresholds = dict(DEFAULT_THRESHOLDS)
    if args.min_ve_opl is not None:
        thresholds["I_OPL"] = args.min_ve_opl
    if args.min_ve is not None:
        for s in ("V_Bip", "I_Gang_ON", "I_Gang_OFF"):
            thresholds[s] = args.min_ve
    cmp = compare_runs(a, b, thresholds, args.min_spike, args.slack, args.max_lag)
    report = cmp.report()
    sys.stdout.write(report)
    if args.report:
        _write_text(Path(args.report), report)
    if args.csv:
        _write_text(Path(args.csv), cmp.csv())
    return EXIT_OK if cmp.passed else EXIT_THRESHOLD


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


# --- bench -------------------------------------------------------------------------


def cmd_bench(args) -> int:
    backends = available_backends() if args.backend == "all" else (args.backend,)
    for size in args.sizes:
        for b in backends:
            print(measure(size, args.frames, b).line())
    return EXIT_OK


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fxretina", description="Fixed-point retina emulator.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    st = sub.add_parser("stimulus", help="generate a synthetic stimulus")
    st.add_argument("kind", choices=("chirp", "pulse", "impulse", "flicker"))
    st.add_argument("--out", required=True,
                    help="directory (one PGM per frame), *.pgm (multi-image) or *.raw")
    st.add_argument("--width", type=int, default=128)
    st.add_argument("--height", type=int, default=128)
    st.add_argument("--fps", type=float, default=200.0)
    st.add_argument("--bitdepth", type=int, choices=(8, 16), default=8)
    st.add_argument("--layout", choices=("dir", "pgm", "raw"))
    st.add_argument("--duration", type=float, help="seconds")
    st.add_argument("--low", type=float, default=0.0, help="pulse/chirp low level")
    st.add_argument("--high", type=float, default=1.0, help="pulse/chirp high level")
    st.add_argument("--t-on", type=float, default=0.25)
    st.add_argument("--t-off", type=float, default=0.75)
    st.add_argument("--amplitude", type=float,
                    help="impulse height (default 1) or flicker amplitude (default 0.5)")
    st.add_argument("--t-hit", type=float, default=0.05)
    st.add_argument("--freq", type=float, default=2.0, help="flicker frequency, Hz")
    st.add_argument("--mean", type=float, default=0.5, help="flicker mean level")
    st.add_argument("--baseline", type=float, default=0.5)
    st.add_argument("--lead", type=float, default=0.5, help="chirp baseline lead-in, s")
    st.add_argument("--pulses", type=_triple, help="chirp OFF,ON,OFF durations, s")
    st.add_argument("--freq-sweep", type=_triple, help="f_start,f_end,duration")
    st.add_argument("--freq-amplitude", type=float, default=0.25)
    st.add_argument("--amp-sweep", type=_triple, help="freq,max_amplitude,duration")
    st.set_defaults(func=cmd_stimulus)

    pr = sub.add_parser("params", help="show requested and quantized parameters")
    pr.add_argument("--config")
    pr.add_argument("--set", action="append", metavar="KEY=VALUE")
    pr.add_argument("--dump", action="store_true", help="print as a config file")
    pr.set_defaults(func=cmd_params)

    rn = sub.add_parser("run", help="run the fixed-point and/or reference pipeline")
    rn.add_argument("input", help="PGM file or directory, or raw file with sidecar")
    rn.add_argument("--out", required=True, help="output directory; one subdirectory per mode")
    rn.add_argument("--config")
    rn.add_argument("--set", action="append", metavar="KEY=VALUE")
    rn.add_argument("--mode", choices=("fixed", "reference", "both"), default="fixed")
    rn.add_argument("--probe", type=_pair, metavar="X,Y", help="default: frame centre")
    rn.add_argument("--dump", default="all", help="comma-separated stages or 'all'")
    rn.add_argument("--snapshot", type=_int_list, metavar="F1,F2", help="frames to dump whole")
    rn.add_argument("--fps", type=float, help="override the input frame rate")
    rn.add_argument("--backend", choices=("numba", "numpy"))
    rn.set_defaults(func=cmd_run)

    cp = sub.add_parser("compare", help="score run B against reference run A")
    cp.add_argument("run_a")
    cp.add_argument("run_b")
    cp.add_argument("--min-ve-opl", type=float, help=f"default {DEFAULT_THRESHOLDS['I_OPL']}")
    cp.add_argument("--min-ve", type=float, help=f"V_Bip and I_Gang floor, default {DEFAULT_THRESHOLDS['V_Bip']}")
    cp.add_argument("--min-spike", type=float, default=0.9)
    cp.add_argument("--slack", type=int, default=1)
    cp.add_argument("--max-lag", type=int, default=20)
    cp.add_argument("--report", help="also write the key = value report here")
    cp.add_argument("--csv", help="write per-stage scores as CSV")
    cp.set_defaults(func=cmd_compare)

    bn = sub.add_parser("bench", help="measure pipeline throughput")
    bn.add_argument("--sizes", type=_int_list, default=[128, 512])
    bn.add_argument("--frames", type=int, default=200)
    bn.add_argument("--backend", choices=("all", "numba", "numpy"), default="all")
    bn.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, GeometryMismatchError, TruncatedFileError,
            UnsupportedDepthError, RunFormatError, FileNotFoundError, ValueError) as exc:
        print(f"fxretina {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
