"""Complete model configuration and its flat ``key = value`` text form."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .bipolar import BipolarParams
from .fixedpoint import DEFAULT_FORMAT, FixedPointFormat, quantize_real
from .ganglion import GanglionParams
from .opl import OplParams


class ConfigError(ValueError):
    """Malformed or out-of-range configuration text."""


_SECTIONS = {"opl": OplParams, "bipolar": BipolarParams, "ganglion": GanglionParams}
_INT_KEYS = {"xi", "refr", "frac_bits", "total_bits", "width", "height"}
_GEOMETRY_KEYS = ("width", "height", "fps", "pixels_per_degree")
# Quantities that stay exact under quantization: polarity, frame counts, geometry.
_NOT_QUANTIZED = {"xi", "refr"}


@dataclass(frozen=True)
class RetinaParams:
    opl: OplParams = field(default_factory=OplParams)
    bipolar: BipolarParams = field(default_factory=BipolarParams)
    ganglion: GanglionParams = field(default_factory=GanglionParams)
    fmt: FixedPointFormat = DEFAULT_FORMAT
    width: int = 128
    height: int = 128
    fps: float = 200.0
    pixels_per_degree: float = 20.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")
        if self.fps <= 0 or self.pixels_per_degree <= 0:
            raise ValueError("fps and pixels_per_degree must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    def replace(self, **changes) -> "RetinaParams":
        """Copy with flat-key overrides, e.g. ``replace(w_c=0.3, width=64)``."""
        return from_mapping({**to_mapping(self), **changes})

    def quantized(self, fmt: FixedPointFormat | None = None) -> "RetinaParams":
        """Every real-valued model constant snapped to ``fmt`` (default: own format).

        The bipolar step is made explicit first so the quantized copy carries
        the same integration step as the fixed-point datapath.
        """
        fmt = fmt or self.fmt
        q = lambda v: quantize_real(v, fmt)  # noqa: E731
        sections = {}
        for name, cls in _SECTIONS.items():
            section = getattr(self, name)
            if name == "bipolar":
                section = replace(section, dt=section.step_seconds(self.fps))
            sections[name] = _build(cls, {
                f.name: (getattr(section, f.name) if f.name in _NOT_QUANTIZED
                         else q(getattr(section, f.name)))
                for f in fields(cls)
            }, lenient=True)
        return replace(self, fmt=fmt, **sections)


def _build(cls, values: dict, lenient: bool = False):
    # Quantization can push a strictly-positive constant to zero; the
    # quantized copy is a record of the datapath values, so skip validation.
    if not lenient:
        return cls(**values)
    obj = object.__new__(cls)
    for k, v in values.items():
        object.__setattr__(obj, k, v)
    return obj


def to_mapping(params: RetinaParams) -> dict[str, object]:
    out: dict[str, object] = {}
    for name in _SECTIONS:
        section = getattr(params, name)
        for f in fields(section):
            out[f.name] = getattr(section, f.name)
    out["total_bits"] = params.fmt.total_bits
    out["frac_bits"] = params.fmt.frac_bits
    for k in _GEOMETRY_KEYS:
        out[k] = getattr(params, k)
    return out


def known_keys() -> list[str]:
    return list(to_mapping(RetinaParams()))


def _coerce(key: str, value):
    if value is None or (isinstance(value, str) and value.strip().lower() == "none"):
        if key == "dt":
            return None
        raise ConfigError(f"{key} may not be empty")
    try:
        if key in _INT_KEYS:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def from_mapping(values: dict) -> RetinaParams:
    base = to_mapping(RetinaParams())
    unknown = set(values) - set(base)
    if unknown:
        raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    merged = {k: _coerce(k, v) for k, v in {**base, **values}.items()}
    try:
        sections = {
            name: cls(**{f.name: merged[f.name] for f in fields(cls)})
            for name, cls in _SECTIONS.items()
        }
        fmt = FixedPointFormat(merged["total_bits"], merged["frac_bits"])
        return RetinaParams(fmt=fmt, **sections, **{k: merged[k] for k in _GEOMETRY_KEYS})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_values(text: str) -> dict[str, str]:
    """Raw ``key -> value`` strings; ``#`` starts a comment, blank lines are ignored."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        values[key] = value
    return values


def parse_config(text: str) -> RetinaParams:
    return from_mapping(parse_config_values(text))


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(params: RetinaParams) -> str:
    return "".join(f"{k} = {_fmt_value(v)}\n" for k, v in to_mapping(params).items())


def read_config_values(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_values(text)


def load_config(path: str | Path) -> RetinaParams:
    return from_mapping(read_config_values(path))


def quantized_mapping(params: RetinaParams) -> dict[str, object]:
    """Model constants as the fixed-point datapath holds them (integers omitted)."""
    q = to_mapping(params.quantized())
    return {k: q[k] for name, cls in _SECTIONS.items() for k in (f.name for f in fields(cls))
            if k not in _NOT_QUANTIZED}
