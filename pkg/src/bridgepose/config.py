"""Run configuration and its flat text format.

A run is configured by four sections (model, train, augment, fixture), each a
dataclass below.  The on-disk format is a flat key-value document::

    # comment lines start with '#', blank lines are ignored
    model.levels = 4
    model.channel_multipliers = 1,2,4,7
    train.milestones = 180,260
    augment.p_rotate = 0.6

Grammar per line: ``<section>.<field> = <value>``.  Values are rendered as
``true``/``false`` for booleans, ``repr`` for numbers, comma-joined ints for
int tuples, and ``level:column`` pairs (comma-joined) for node placements.
``model.hsa_placements`` additionally accepts the word ``default`` meaning
"use the built-in placement rule".  Unknown keys are rejected, both when
parsing a document and when applying ``--set`` overrides.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError


def _default_multipliers(levels: int) -> tuple[int, ...]:
    # doubling per level, capped at 7x base; picked so the default
    # 4-level model lands at (1, 2, 4, 7)
    return tuple(min(2 ** i, 7) for i in range(levels))


@dataclass(frozen=True)
class ModelConfig:
    """Static description of the pose network.

    ``hsa_placements=None`` means "use the default rule": one attention
    block at the deepest node of every downsampling column plus the last
    two full-resolution nodes.
    """

    levels: int = 4
    columns: int = 7
    num_joints: int = 16
    base_channels: int = 16
    channel_multipliers: tuple[int, ...] | None = None
    bridges_enabled: bool = True
    hsa_enabled: bool = True
    hsa_placements: tuple[tuple[int, int], ...] | None = None
    input_size: int = 256
    output_size: int = 128

    def __post_init__(self):
        if self.channel_multipliers is None:
            object.__setattr__(
                self, "channel_multipliers", _default_multipliers(self.levels)
            )

    def validate(self) -> None:
        if self.levels < 1:
            raise ConfigError(f"model.levels must be >= 1, got {self.levels}")
        if self.columns < 1:
            raise ConfigError(f"model.columns must be >= 1, got {self.columns}")
        if self.num_joints < 1:
            raise ConfigError(f"model.num_joints must be >= 1, got {self.num_joints}")
        if self.base_channels < 1:
            raise ConfigError(
                f"model.base_channels must be >= 1, got {self.base_channels}"
            )
        if len(self.channel_multipliers) != self.levels:
            raise ConfigError(
                "model.channel_multipliers needs one entry per level: "
                f"got {len(self.channel_multipliers)} for {self.levels} levels"
            )
        if any(m < 1 for m in self.channel_multipliers):
            raise ConfigError("model.channel_multipliers must all be >= 1")
        if self.input_size < 2 or self.input_size % 2 != 0:
            raise ConfigError(
                f"model.input_size must be even and >= 2, got {self.input_size}"
            )
        if self.output_size * 2 != self.input_size:
            raise ConfigError(
                "model.output_size must be exactly half of input_size: "
                f"got {self.output_size} vs {self.input_size}"
            )
        if self.output_size % (2 ** (self.levels - 1)) != 0:
            raise ConfigError(
                f"model.output_size={self.output_size} not divisible by "
                f"2^(levels-1)={2 ** (self.levels - 1)}"
            )
        if self.hsa_placements is not None:
            for lvl, col in self.hsa_placements:
                if not (1 <= lvl <= self.levels and 1 <= col <= self.columns):
                    raise ConfigError(
                        f"model.hsa_placements entry {lvl}:{col} outside the "
                        f"{self.levels}x{self.columns} grid"
                    )

    def width(self, level: int) -> int:
        """Channel count at a 1-based pyramid level."""
        return self.base_channels * self.channel_multipliers[level - 1]

    def spatial(self, level: int) -> int:
        """Feature-map side length at a 1-based pyramid level."""
        return self.output_size // (2 ** (level - 1))


@dataclass(frozen=True)
class TrainSchedule:
    initial_lr: float = 1e-3
    decay_factor: float = 0.1
    milestones: tuple[int, ...] = (180, 260)
    total_epochs: int = 300
    batch_size: int = 32
    target_sigma: float = 2.0
    eval_interval: int = 10
    max_steps: int = 0  # 0 = no cap; otherwise stop after this many steps

    def validate(self) -> None:
        if self.initial_lr <= 0:
            raise ConfigError(f"train.initial_lr must be > 0, got {self.initial_lr}")
        if not (0 < self.decay_factor < 1):
            raise ConfigError(
                f"train.decay_factor must be in (0, 1), got {self.decay_factor}"
            )
        if self.total_epochs < 1:
            raise ConfigError(
                f"train.total_epochs must be >= 1, got {self.total_epochs}"
            )
        if list(self.milestones) != sorted(set(self.milestones)):
            raise ConfigError("train.milestones must be strictly increasing")
        if self.milestones and not (
            0 < self.milestones[0] and self.milestones[-1] < self.total_epochs
        ):
            raise ConfigError(
                "train.milestones must lie strictly inside (0, total_epochs)"
            )
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.target_sigma <= 0:
            raise ConfigError(
                f"train.target_sigma must be > 0, got {self.target_sigma}"
            )
        if self.eval_interval < 1:
            raise ConfigError(
                f"train.eval_interval must be >= 1, got {self.eval_interval}"
            )
        if self.max_steps < 0:
            raise ConfigError(f"train.max_steps must be >= 0, got {self.max_steps}")


@dataclass(frozen=True)
class AugmentPolicy:
    p_rotate: float = 0.6
    rotation_max_deg: float = 30.0
    p_scale: float = 1.0
    scale_min: float = 0.75
    scale_max: float = 1.25
    p_flip: float = 0.5
    p_half_body: float = 0.3
    half_body_min_visible: int = 8
    half_body_padding: float = 1.5

    def validate(self) -> None:
        for name in ("p_rotate", "p_scale", "p_flip", "p_half_body"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"augment.{name} must be in [0, 1], got {p}")
        if self.rotation_max_deg < 0:
            raise ConfigError("augment.rotation_max_deg must be >= 0")
        if not (0 < self.scale_min <= self.scale_max):
            raise ConfigError(
                "augment scale range must satisfy 0 < scale_min <= scale_max, "
                f"got [{self.scale_min}, {self.scale_max}]"
            )
        if self.half_body_min_visible < 2:
            raise ConfigError("augment.half_body_min_visible must be >= 2")
        if self.half_body_padding <= 0:
            raise ConfigError("augment.half_body_padding must be > 0")


@dataclass(frozen=True)
class FixtureSpec:
    n_samples: int = 32
    image_size: int = 256
    num_joints: int = 16
    blob_sigma: float = 4.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1:
            raise ConfigError(f"fixture.n_samples must be >= 1, got {self.n_samples}")
        if self.image_size < 32:
            raise ConfigError(
                f"fixture.image_size must be >= 32, got {self.image_size}"
            )
        if self.num_joints < 1:
            raise ConfigError(
                f"fixture.num_joints must be >= 1, got {self.num_joints}"
            )
        if self.blob_sigma <= 0:
            raise ConfigError(f"fixture.blob_sigma must be > 0, got {self.blob_sigma}")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSchedule = field(default_factory=TrainSchedule)
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    fixture: FixtureSpec = field(default_factory=FixtureSpec)

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        self.augment.validate()
        self.fixture.validate()


_SECTIONS = ("model", "train", "augment", "fixture")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "default"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(f"{lvl}:{col}" for lvl, col in value)
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(section: str, name: str, text: str, kind):
    text = text.strip()
    try:
        if kind is bool:
            if text not in ("true", "false"):
                raise ValueError("expected true or false")
            return text == "true"
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind == "int_tuple":
            if text == "":
                return ()
            return tuple(int(v) for v in text.split(","))
        if kind == "placements":
            if text == "default":
                return None
            pairs = []
            for item in text.split(","):
                lvl, _, col = item.partition(":")
                pairs.append((int(lvl), int(col)))
            return tuple(pairs)
    except ValueError as err:
        raise ConfigError(f"bad value for {section}.{name}: {text!r} ({err})") from err
    raise AssertionError(f"unhandled kind {kind}")


def _field_kind(section: str, name: str, default):
    if section == "model" and name == "hsa_placements":
        return "placements"
    if section == "model" and name == "channel_multipliers":
        return "int_tuple"
    if section == "train" and name == "milestones":
        return "int_tuple"
    if isinstance(default, bool):
        return bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    raise AssertionError(f"unhandled field {section}.{name}")


def config_to_text(config: RunConfig) -> str:
    """Render the full configuration as the flat key-value document."""
    lines = []
    for section in _SECTIONS:
        obj = getattr(config, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def known_keys() -> tuple[str, ...]:
    keys = []
    for section in _SECTIONS:
        obj = getattr(RunConfig(), section)
        keys.extend(f"{section}.{f.name}" for f in fields(obj))
    return tuple(keys)


def _apply_pairs(config: RunConfig, pairs: list[tuple[str, str]]) -> RunConfig:
    defaults = RunConfig()
    updates: dict[str, dict] = {s: {} for s in _SECTIONS}
    for key, raw in pairs:
        section, _, name = key.partition(".")
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config key {key!r}")
        section_obj = getattr(defaults, section)
        names = {f.name for f in fields(section_obj)}
        if name not in names:
            raise ConfigError(f"unknown config key {key!r}")
        kind = _field_kind(section, name, getattr(section_obj, name))
        updates[section][name] = _parse_value(section, name, raw, kind)
    new_sections = {
        s: replace(getattr(config, s), **updates[s]) if updates[s] else getattr(config, s)
        for s in _SECTIONS
    }
    return RunConfig(**new_sections)


def config_from_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse a flat document, starting from defaults (or ``base``)."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, eq, value = stripped.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        pairs.append((key.strip(), value.strip()))
    return _apply_pairs(base if base is not None else RunConfig(), pairs)


def apply_overrides(config: RunConfig, assignments: list[str]) -> RunConfig:
    """Apply ``key=value`` strings (the --set flag) on top of ``config``."""
    pairs = []
    for item in assignments:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        pairs.append((key.strip(), value.strip()))
    return _apply_pairs(config, pairs)


def model_config_text(model: ModelConfig) -> str:
    """The model section alone; this is what the checkpoint digest covers."""
    lines = [f"model.{f.name} = {_format_value(getattr(model, f.name))}"
             for f in fields(model)]
    return "\n".join(lines) + "\n"


def model_digest(model: ModelConfig) -> str:
    """Stable hex digest of the model section (checkpoint compatibility key)."""
    return hashlib.sha256(model_config_text(model).encode("utf-8")).hexdigest()


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    """Read a config file (may be None for defaults), apply --set overrides."""
    if path is None:
        config = RunConfig()
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                config = config_from_text(fh.read())
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
    if overrides:
        config = apply_overrides(config, overrides)
    config.validate()
    return config
