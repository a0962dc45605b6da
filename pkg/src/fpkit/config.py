"""Run configuration: every tunable of the toolkit with documented defaults.

Config files are flat ``key = value`` text (``#`` comments allowed); keys are
exactly the RunConfig field names and unknown keys are rejected. CLI flags
win over file values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    # intensity normalization
    target_mean: float = 100.0
    target_var: float = 100.0
    # segmentation / orientation
    block_size: int = 16
    var_threshold: float = 50.0
    # optional oriented smoothing on the minutiae path only
    enhance: bool = False
    # minutiae extraction and DP matching
    minutiae_min_distance: float = 6.0
    minutiae_trace_length: int = 10
    ref_angle_tolerance_deg: float = 30.0
    match_tol_radius: float = 8.0
    match_tol_azimuth_deg: float = 6.0
    match_tol_direction_deg: float = 20.0
    match_weight_radius: float = 1.0
    match_weight_azimuth: float = 40.0
    match_weight_direction: float = 20.0
    match_skip_penalty: float = 25.0
    ref_pair_cap: int = 30  # 0 disables the cap
    c_m: float = 0.35
    # ridge matcher
    gabor_orientations: int = 8
    gabor_frequency: float = 0.1
    gabor_sigma_x: float = 4.0
    gabor_sigma_y: float = 4.0
    gabor_kernel_size: int = 33
    cell_size: int = 16
    search_radius: int = 56
    search_step: int = 8
    min_overlap: int = 6
    c_r: float = 1.0
    use_estimated_frequency: bool = False
    # quality measures
    q_width: float = 0.0  # 0 = quarter of the foreground bbox diagonal
    ring_count: int = 15
    f_min: float = 0.02
    f_max: float = 0.25
    # synthetic corpus
    synth_width: int = 256
    synth_height: int = 320
    ridge_period: float = 10.0
    orientation_model: str = "whorl"
    jitter_translation: float = 12.0
    jitter_rotation_deg: float = 3.0
    degrade_levels: int = 5
    # evaluation
    group_count: int = 5
    seed: int = 1
    jobs: int = 0  # 0 = available parallelism

    def to_text(self) -> str:
        lines = [f"{f.name} = {_format_value(getattr(self, f.name))}"
                 for f in fields(self)]
        return "\n".join(lines) + "\n"


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_value(name: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name!r}: {raw!r}") from exc


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply string key/value overrides; unknown keys raise ConfigError."""
    by_name = {f.name: f.type for f in fields(RunConfig)}
    typed = {}
    for key, raw in overrides.items():
        if key not in by_name:
            raise ConfigError(f"unknown configuration key {key!r}")
        kind = {"int": int, "float": float, "bool": bool, "str": str}[by_name[key]] \
            if isinstance(by_name[key], str) else by_name[key]
        typed[key] = _parse_value(key, raw, kind)
    return replace(cfg, **typed)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Read a flat key = value config file on top of the defaults."""
    overrides: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        overrides[key.strip()] = raw.strip()
    return apply_overrides(base or RunConfig(), overrides)
