"""Run configuration: presets, flat key/value config files, flag overrides.

Config files are diff-friendly flat text: one ``section.key = value`` per
line, ``#`` starts a comment line.  Every command writes its fully resolved
configuration (including the seed) next to its outputs, so a run is
reproducible from that file alone.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigInvalid

DESK_PHASES = ((3000, 1.0, 0.0), (2000, 1.0, 10.0), (2000, 1.0, 0.0))
FULL_PHASES = ((2_000_000, 1.0, 0.0), (1_000_000, 1.0, 10.0), (1_000_000, 1.0, 0.0))

PRESETS: dict[str, dict] = {
    "desk": {
        "patch_size": 64,
        "perturb_range": 8.0,
        "n_scales": 2,
        "base_channels": 16,
        "batch_size": 8,
        "phases": DESK_PHASES,
        "checkpoint_every": 1000,
        "n_samples": 2000,
        "samples_per_clip": 10,
    },
    "full": {
        "patch_size": 128,
        "perturb_range": 32.0,
        "n_scales": 3,
        "base_channels": 64,
        "batch_size": 32,
        "phases": FULL_PHASES,
        "checkpoint_every": 10_000,
        "n_samples": 100_000,
        "samples_per_clip": 10,
    },
}


def phases_to_str(phases) -> str:
    return ",".join(f"{int(n)}:{sf:g}:{sd:g}" for n, sf, sd in phases)


def parse_phases(text: str):
    out = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise ConfigInvalid(f"bad phase spec {part!r}; want iters:sigma_f:sigma_d")
        try:
            out.append((int(bits[0]), float(bits[1]), float(bits[2])))
        except ValueError as e:
            raise ConfigInvalid(f"bad phase spec {part!r}: {e}") from e
    return tuple(out)


def parse_scalar(text: str):
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def load_config_file(path) -> dict[str, str]:
    """Raw string values keyed by dotted name."""
    p = Path(path)
    if not p.is_file():
        raise ConfigInvalid(f"config file {p} does not exist")
    out: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigInvalid(f"{p}:{lineno}: expected 'key = value'")
        key, _, value = s.partition("=")
        out[key.strip()] = value.strip()
    return out


def resolve(section: str, defaults: dict, file_values: dict[str, str],
            overrides: dict) -> dict:
    """Typed config: defaults, overlaid by `section.key` file entries,
    overlaid by non-None override values.  Unknown keys are rejected."""
    cfg = dict(defaults)
    prefix = section + "."
    for key, raw in file_values.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        if name not in cfg:
            raise ConfigInvalid(f"unknown config key {key!r}")
        cfg[name] = parse_phases(raw) if name == "phases" else parse_scalar(raw)
    for name, value in overrides.items():
        if value is None:
            continue
        if name not in cfg:
            raise ConfigInvalid(f"unknown override {name!r}")
        cfg[name] = value
    return cfg


def write_resolved(section: str, cfg: dict, path) -> None:
    lines = [f"# resolved {section} configuration"]
    for key in sorted(cfg):
        value = cfg[key]
        if key == "phases":
            value = phases_to_str(value)
        lines.append(f"{section}.{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
