"""Fixed-point streaming retina emulator with a double-precision reference model.

Luminance frames pass through an outer plexiform layer (centre/surround
filtering), bipolar contrast gain control and ON/OFF ganglion cells that
emit spikes.  :class:`Retina` runs the bit-accurate fixed-point datapath;
:func:`run_reference` evaluates the same equations in float64.
"""
from .errors import GeometryMismatchError, TruncatedFileError, UnsupportedDepthError
from .fixedpoint import (
    DEFAULT_FORMAT,
    FixedPointFormat,
    FixedPointValue,
    FormatMismatchError,
    fxp_add,
    fxp_div,
    fxp_exp_neg,
    fxp_mul,
    quantize,
)
from .ganglion import OFF, ON, GanglionParams, SpikeEvent, SpikeTrain, static_nonlinearity
from .metrics import TraceComparison, spike_agreement, variance_explained, xcorr_peak_lag
from .bipolar import BipolarParams
from .opl import OplParams
from .params import ConfigError, RetinaParams, dump_config, load_config, parse_config
from .pipeline import STAGES, Retina, RunResult
from .reference import run_reference
from .spatial import DegenerateKernelError, Kernel, conv2d_stream, gaussian_kernel
from .stimulus import (
    ChirpSpec,
    FrameStream,
    load_video,
    make_chirp,
    make_flicker,
    make_impulse,
    make_pulse,
    save_frames,
)

__version__ = "0.1.0"

__all__ = [
    "BipolarParams", "ChirpSpec", "ConfigError", "DEFAULT_FORMAT", "DegenerateKernelError",
    "FixedPointFormat", "FixedPointValue", "FormatMismatchError", "FrameStream",
    "GanglionParams", "GeometryMismatchError", "Kernel", "OFF", "ON", "OplParams", "Retina",
    "RetinaParams", "RunResult", "STAGES", "SpikeEvent", "SpikeTrain", "TraceComparison",
    "TruncatedFileError", "UnsupportedDepthError", "conv2d_stream", "dump_config",
    "fxp_add", "fxp_div", "fxp_exp_neg", "fxp_mul", "gaussian_kernel", "load_config",
    "load_video", "make_chirp", "make_flicker", "make_impulse", "make_pulse",
    "parse_config", "quantize", "run_reference", "save_frames", "spike_agreement",
    "static_nonlinearity", "variance_explained", "xcorr_peak_lag",
]
