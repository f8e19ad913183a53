"""Training configuration: a flat dataclass mirrored by plain key=value files.

Every run writes a frozen copy of its resolved config next to its outputs
so results stay reproducible from the run directory alone.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "synthetic"
    base_lr: float = 5e-4
    epochs: int = 80
    input_size: int = 128
    batch_size: int = 32
    weight_decay: float = 5e-5
    momentum: float = 0.9  # used as the Adam beta1
    # loss weights and schedule coefficients
    mu: float = 1.0
    upsilon: float = 10.0
    zeta: float = 1.0
    xi: float = 1.0
    strategy: str = "none"  # none | uws | oaws
    oaws_a: float = 0.05
    oaws_b: float = 0.03
    oaws_t: float = 0.50
    oaws_phase: str = "quadratic"
    uws_sigma_init: float = 4.0
    grad_region_threshold: float = 0.1
    # sampling / evaluation
    n_samples: int = 8
    folds: int = 4
    seed: int = 0
    dilation_radius: int = 2
    lo_frac: float = 0.2
    hi_frac: float = 0.7
    # architecture scaling
    in_channels: int = 1
    depth: int = 4
    base_channels: int = 16
    latent_dim: int = 6
    unit_channels: tuple[int, ...] = (32, 32, 16)
    blocks_per_unit: int = 3
    attention_reduction: int = 4
    # training behavior
    umap_enabled: bool = True
    augment: bool = True
    warmup_epochs: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.base_lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("base_lr, epochs, and batch_size must be positive")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.strategy not in ("none", "uws", "oaws"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.input_size < 16:
            raise ValueError("input_size must be >= 16")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        object.__setattr__(self, "unit_channels", tuple(int(c) for c in self.unit_channels))


PRESETS = {
    "lidc-idri": dict(
        dataset="lidc-idri", base_lr=5e-4, epochs=80, input_size=128, batch_size=32
    ),
    "isic": dict(
        dataset="isic", base_lr=1e-4, epochs=100, input_size=256, batch_size=8, in_channels=3
    ),
    "brain-growth": dict(
        dataset="brain-growth", base_lr=1e-4, epochs=150, input_size=128, batch_size=4
    ),
}


def preset(name: str, **overrides) -> TrainConfig:
    """Named training presets for the three source datasets."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return TrainConfig(**{**PRESETS[name], **overrides})


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"expected boolean, got {raw!r}")
        return raw.lower() in ("true", "1")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw
    # tuple-of-int fields
    return tuple(int(part) for part in raw.split(",") if part.strip())


def write_config(path, config: TrainConfig) -> None:
    lines = [f"{f.name} = {_format_value(getattr(config, f.name))}" for f in fields(config)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_config(path, **overrides) -> TrainConfig:
    """Parse a key=value config file; '#' starts a comment, unknown keys error."""
    text = Path(path).read_text()
    kinds = {}
    for f in fields(TrainConfig):
        origin = f.type if isinstance(f.type, type) else None
        if origin is None:
            name = str(f.type)
            origin = {"str": str, "int": int, "float": float, "bool": bool}.get(
                name.split("|")[0].strip(), tuple
            )
        kinds[f.name] = origin
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in kinds:
            raise KeyError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(raw, kinds[key])
    values.update(overrides)
    return TrainConfig(**values)


def with_overrides(config: TrainConfig, **overrides) -> TrainConfig:
    return replace(config, **overrides)
