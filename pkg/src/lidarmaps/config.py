"""Pipeline configuration: defaults, validation, and the flat key=value
file format used to record experiment settings.

Command-line flags override file values; the serialized form is canonical
so that serialize -> parse -> serialize is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .extract import ExtractParams
from .hydro import WaterParams

#: Raster products the pipeline can emit, in canonical output order.
OUTPUT_NAMES = ("map2d", "map3d", "dsm", "dtm", "ndhm", "water", "diff")

_INT_FIELDS = frozenset({"k1", "k2", "rt", "k3", "water_window", "median_roof"})
_STR_FIELDS = frozenset({"kernel_shape", "map3d_source"})


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the map pipeline, defaults matching the robust set."""

    gsd: float = 0.5
    slope_threshold: float = 1.0
    ht: float = 1.5
    k1: int = 7
    k2: int = 5
    rt: int = 4
    dt: float = 0.1
    k3: int = 5
    kernel_shape: str = "square"
    median_roof: int = 0
    map3d_source: str = "ndhm"
    water_window: int = 9
    water_sigma_k: float = 2.0
    water_min_area: float = 1000.0
    water_buffer: float = 5.0
    window_size_m: float = 1000.0
    overlap_m: float = 100.0
    outputs: tuple[str, ...] = ("map2d", "map3d")

    def __post_init__(self) -> None:
        def positive(name: str) -> None:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")

        for name in (
            "gsd",
            "slope_threshold",
            "ht",
            "water_sigma_k",
            "water_min_area",
            "water_buffer",
            "window_size_m",
        ):
            positive(name)
        for name in ("k1", "k2", "k3", "water_window"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1 and v % 2 == 1):
                raise ConfigError(f"{name} must be a positive odd integer, got {v!r}")
        if not (isinstance(self.rt, int) and self.rt >= 1):
            raise ConfigError(f"rt must be an integer >= 1, got {self.rt!r}")
        if not 0.0 <= self.dt <= 1.0:
            raise ConfigError(f"dt must lie in [0, 1], got {self.dt!r}")
        if self.kernel_shape not in ("square", "diamond"):
            raise ConfigError(f"kernel_shape must be square or diamond, got {self.kernel_shape!r}")
        if self.median_roof != 0 and (self.median_roof < 1 or self.median_roof % 2 == 0):
            raise ConfigError(f"median_roof must be 0 (off) or odd, got {self.median_roof!r}")
        if self.map3d_source not in ("ndhm", "dsm"):
            raise ConfigError(f"map3d_source must be ndhm or dsm, got {self.map3d_source!r}")
        min_overlap = (self.k1 + self.water_window) * self.gsd
        if self.overlap_m < min_overlap:
            raise ConfigError(
                f"overlap_m {self.overlap_m} is below the stage support "
                f"(k1 + water_window)*gsd = {min_overlap}"
            )
        bad = [o for o in self.outputs if o not in OUTPUT_NAMES]
        if bad:
            raise ConfigError(f"unknown outputs {bad}; valid: {list(OUTPUT_NAMES)}")
        canon = tuple(o for o in OUTPUT_NAMES if o in self.outputs)
        if canon != self.outputs:
            object.__setattr__(self, "outputs", canon)

    def extract_params(self) -> ExtractParams:
        return ExtractParams(
            ht=self.ht,
            k1=self.k1,
            k2=self.k2,
            rt=self.rt,
            dt=self.dt,
            k3=self.k3,
            kernel_shape=self.kernel_shape,
            median_roof=self.median_roof,
            map3d_source=self.map3d_source,
        )

    def water_params(self) -> WaterParams:
        return WaterParams(
            window=self.water_window,
            sigma_k=self.water_sigma_k,
            min_area=self.water_min_area,
            buffer=self.water_buffer,
        )


def _coerce(name: str, raw: str) -> object:
    raw = raw.strip()
    if name == "outputs":
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return tuple(parts)
    if name in _STR_FIELDS:
        return raw
    try:
        if name in _INT_FIELDS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse key=value lines ('#' starts a comment) on top of `base`."""
    known = {f.name for f in fields(PipelineConfig)}
    updates: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _coerce(key, raw)
    base = base if base is not None else PipelineConfig()
    return replace(base, **updates)


def load_config(path: str, base: PipelineConfig | None = None) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base)


def _fmt_value(v: object) -> str:
    if isinstance(v, tuple):
        return ",".join(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: PipelineConfig) -> str:
    lines = [f"{f.name}={_fmt_value(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def apply_overrides(cfg: PipelineConfig, overrides: dict[str, object]) -> PipelineConfig:
    """Apply non-None CLI overrides; values are already typed."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return cfg
    return replace(cfg, **updates)
