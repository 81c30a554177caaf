"""Config files: flat "key = value" text under section headers, parsed with
strict key validation so typos fail loudly. serialize_config() round-trips
through parse_config() to an identical GenerationConfig.
"""
from __future__ import annotations

import configparser
from dataclasses import replace
from pathlib import Path

from .errors import ValidationError
from .pipeline import GenerationConfig


def _parse_scales(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.replace(" ", "").split(",") if part)
    except ValueError as exc:
        raise ValidationError(f"bad scale list {text!r}") from exc


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValidationError(f"bad boolean {text!r}")


# section -> key -> (config field, parser)
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "geometry": {
        "base_h": ("base_h", int),
        "base_w": ("base_w", int),
        "channels": ("channels", int),
        "spatial_factor": ("spatial_factor", int),
        "scales": ("scales", _parse_scales),
    },
    "sampling": {
        "steps": ("steps", int),
        "train_steps": ("train_steps", int),
        "beta_start": ("beta_start", float),
        "beta_end": ("beta_end", float),
        "stride_h": ("stride_h", int),
        "stride_w": ("stride_w", int),
        "eta_mode": ("eta_mode", str),
        "identity_bijections": ("identity_bijections", _parse_bool),
        "residual_injection": ("residual_injection", _parse_bool),
        "workers": ("workers", int),
    },
    "prompt": {
        "threshold_c": ("prompt_threshold", float),
        "open_radius": ("open_radius", int),
        "att_scale": ("att_scale", int),
    },
    "structure": {
        "controlnet_steps": ("controlnet_steps", int),
        "canny_low": ("canny_low", float),
        "canny_high": ("canny_high", float),
        "canny_sigma": ("canny_sigma", float),
    },
    "backend": {
        "kind": ("backend", str),
        "lam": ("backend_lam", float),
        "bias": ("backend_bias", float),
        "backend_seed": ("backend_seed", int),
        "guidance_scale": ("guidance_scale", float),
        "endpoint": ("endpoint", str),
        "timeout": ("timeout", float),
    },
    "run": {
        "seed": ("seed", int),
    },
}

_FIELD_TO_SECTION = {
    field: (section, key)
    for section, keys in _SCHEMA.items()
    for key, (field, _) in keys.items()
}


def parse_config(path: str | Path | None, overrides: dict | None = None) -> GenerationConfig:
    """Load a config file (optional) and apply flag overrides on top of it."""
    values: dict[str, object] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        text = Path(path).read_text()
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ValidationError(f"config parse error: {exc}") from exc
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ValidationError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ValidationError(f"unknown config key {key!r} in [{section}]")
                field, conv = _SCHEMA[section][key]
                try:
                    values[field] = conv(raw)
                except ValidationError:
                    raise
                except ValueError as exc:
                    raise ValidationError(f"bad value for {section}.{key}: {raw!r}") from exc
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = replace(GenerationConfig(), **values)
    return cfg.validate()


def serialize_config(cfg: GenerationConfig) -> str:
    """Canonical config text; parse_config() of it reproduces cfg exactly."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (field, _) in keys.items():
            value = getattr(cfg, field)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
