"""Pipeline configuration: schema-validated JSON with a stable hash.

One self-describing config file drives every batch command; unknown keys
are rejected so typos fail before any work starts.  The canonical hash of
the config names the pipeline output directory, which keeps reruns of the
same campaign in the same place and distinct configs apart.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .volume import DEFAULT_SPACING_UM


class ConfigError(ValueError):
    """Raised for malformed, mistyped or unknown configuration keys."""


_NUMBER = (int, float)

# key -> (type spec, default) where a dict type spec recurses; "?" marks
# sections that may be absent entirely
SCHEMA = {
    "seed": (int, 0),
    "out_dir": (str, "triphase-out"),
    "ingest": {
        "volumes": (list, []),
        "stacks": (list, []),
        "spacing": (_NUMBER, DEFAULT_SPACING_UM),
    },
    "subvolume": {
        "edge": (int, 96),
        "count": (int, 0),
        "augment": (bool, False),
    },
    "segment": {
        "inputs": (list, []),
        "bounds": (dict, None),
        "intensity_bins": (int, 256),
        "gradient_bins": (int, 64),
    },
    "metrics": {
        "inputs": (list, []),
        "connectivity": (int, 26),
        "active_policy": ((str, dict), "any_face"),
        "area_correction": (_NUMBER, 1.0),
    },
    "synth": {
        "count": (int, 0),
        "dims": (list, [96, 96, 96]),
        "spacing": (_NUMBER, DEFAULT_SPACING_UM),
        "fractions": (list, [0.21, 0.37, 0.42]),
        "size_moments": (dict, {"2": [0.55, 0.15], "3": [0.50, 0.12]}),
        "aspect_range": (list, [0.7, 1.3]),
        "octants": (bool, False),
        "overlap_threshold": (_NUMBER, 0.3),
        "max_retries": (int, 64),
        "render": (dict, None),
    },
    "compare": {
        "inputs": (dict, {}),
        "bins": (int, 24),
        "metrics": (str, "headline"),
    },
}


def _validate_section(data: dict, schema: dict, path: str) -> dict:
    out = {}
    for key in data:
        if key not in schema:
            raise ConfigError(f"unknown config key: {path}{key}")
    for key, spec in schema.items():
        where = f"{path}{key}"
        if isinstance(spec, dict):
            sub = data.get(key, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"{where} must be an object")
            out[key] = _validate_section(sub, spec, where + ".")
            continue
        types, default = spec
        if key not in data or data[key] is None:
            out[key] = default
            continue
        value = data[key]
        if isinstance(value, bool) and bool not in (
            types if isinstance(types, tuple) else (types,)
        ):
            raise ConfigError(f"{where} has wrong type bool")
        if not isinstance(value, types):
            raise ConfigError(
                f"{where} has wrong type {type(value).__name__}"
            )
        out[key] = value
    return out


def validate_config(raw: dict) -> dict:
    """Validate against the schema, filling defaults; rejects unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return _validate_section(raw, SCHEMA, "")


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    return validate_config(raw)


def config_hash(cfg: dict) -> str:
    """Stable hash of the validated config (defaults included)."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def seed_bounds_from_config(section: dict):
    """Build segmentation SeedBounds from the config's bounds mapping."""
    from .segmentation import SeedBounds

    raw = section.get("bounds")
    if not raw:
        raise ConfigError("segment.bounds is required for segmentation")
    boxes = {}
    for key, box in raw.items():
        try:
            phase = int(key)
            ilo, ihi = box["intensity"]
            glo, ghi = box["gradient"]
        except (KeyError, TypeError, ValueError):
            raise ConfigError(
                f"segment.bounds.{key} must have 'intensity' and 'gradient' pairs"
            ) from None
        boxes[phase] = ((float(ilo), float(ihi)), (float(glo), float(ghi)))
    try:
        return SeedBounds(boxes)
    except ValueError as e:
        raise ConfigError(f"segment.bounds invalid: {e}") from None


def synth_config_from_config(section: dict, seed: int):
    """Build a SynthConfig from the synth section of the pipeline config."""
    from .synthgen import SynthConfig

    moments = {int(k): tuple(float(x) for x in v) for k, v in section["size_moments"].items()}
    try:
        return SynthConfig(
            fractions=tuple(float(f) for f in section["fractions"]),
            size_moments=moments,
            dims=tuple(int(d) for d in section["dims"]),
            spacing=float(section["spacing"]),
            aspect_range=tuple(float(a) for a in section["aspect_range"]),
            seed=seed,
            overlap_threshold=float(section["overlap_threshold"]),
            max_retries=int(section["max_retries"]),
        )
    except (ValueError, KeyError) as e:
        raise ConfigError(f"synth section invalid: {e}") from None


def metric_options_from_config(section: dict):
    from .metrics import MetricOptions

    policy = section["active_policy"]
    if isinstance(policy, dict):
        policy = {int(k): list(v) for k, v in policy.items()}
    try:
        return MetricOptions(
            connectivity=int(section["connectivity"]),
            active_policy=policy,
            area_correction=float(section["area_correction"]),
        )
    except ValueError as e:
        raise ConfigError(f"metrics section invalid: {e}") from None
