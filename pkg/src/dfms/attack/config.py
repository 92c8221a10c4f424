"""
Attack configuration.

``AttackConfig`` holds every knob of a run. On disk it is flat ``key = value`` text
with dotted section keys (``clone.lr = 0.1``) and ``#`` comments; missing keys take
their defaults and are listed in the defaults report returned by ``load_config``.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from dfms.core.errors import ConfigError

AttackMode = Literal["hard", "soft-l1", "soft-kl"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class CloneOptimConfig(_Section):
    """SGD settings for the clone."""

    lr: float = Field(0.1, gt=0)
    alternating_lr: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0)
    weight_decay: float = Field(5e-4, ge=0)
    init_epochs: int = Field(20, ge=1)
    retrain_epochs: int = Field(20, ge=1)


class GanOptimConfig(_Section):
    """Adam settings for generator and discriminator."""

    lr: float = Field(2e-4, gt=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    pretrain_epochs: int = Field(20, ge=0)
    shared_latent: bool = False


class NetsConfig(_Section):
    latent_dim: int = Field(100, ge=1)
    channels: int = Field(3, ge=1)
    image_size: int = Field(32, ge=8)
    num_classes: int = Field(10, ge=2)
    clone_arch: str = "cnn4"
    gen_width: int = Field(64, ge=1)
    disc_width: int = Field(64, ge=1)


class DataConfig(_Section):
    """Where the inputs come from."""

    proxy: str = ""
    victim: str = ""
    victim_url: str = ""
    test: str = ""
    budget: Optional[int] = Field(None, ge=1)


class AttackConfig(_Section):
    """Every setting of one attack run."""

    seed: int = Field(0, ge=0)
    lambda_div: float = Field(500.0, ge=0)
    n_G: int = Field(5000, ge=0)
    n_C: int = Field(50_000, ge=0)
    N_Q: int = Field(8_000_000, ge=0)
    iteration_gap_G: int = Field(0, ge=0)
    iteration_gap_C: int = Field(0, ge=0)
    batch_size: int = Field(128, ge=1)
    mode: AttackMode = "hard"
    discriminator_enabled: bool = True
    init_mix_fraction: float = Field(0.5, ge=0, le=1)
    eval_every: int = Field(0, ge=0)
    hist_samples: int = Field(1000, ge=1)
    checkpoint_every: int = Field(0, ge=0)
    early_stop: bool = False

    clone: CloneOptimConfig = Field(default_factory=CloneOptimConfig)
    gan: GanOptimConfig = Field(default_factory=GanOptimConfig)
    nets: NetsConfig = Field(default_factory=NetsConfig)
    data: DataConfig = Field(default_factory=DataConfig)

    @field_validator("mode", mode="before")
    @classmethod
    def normalize_mode(cls, v: Any) -> Any:
        return v.lower() if isinstance(v, str) else v

    @property
    def total_budget(self) -> int:
        return 2 * self.n_C + self.N_Q


def flatten_config(config: BaseModel, prefix: str = "") -> Dict[str, Any]:
    """Dotted-key view of a config, sections expanded in field order."""
    flat: Dict[str, Any] = {}
    for name in type(config).model_fields:
        value = getattr(config, name)
        key = f"{prefix}{name}"
        if isinstance(value, BaseModel):
            flat.update(flatten_config(value, prefix=f"{key}."))
        else:
            flat[key] = value
    return flat


def config_keys() -> List[str]:
    return list(flatten_config(AttackConfig()))


def _nest(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        head, _, tail = key.partition(".")
        if tail:
            nested.setdefault(head, {})[tail] = value
        else:
            nested[key] = value
    return nested


def _parse_value(raw: str) -> Any:
    text = raw.strip()
    if text.lower() in ("none", "null"):
        return None
    return text


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def build_config(values: Mapping[str, Any], base: Optional[AttackConfig] = None) -> AttackConfig:
    """Validate dotted-key values on top of ``base`` (or the defaults).

    Raises:
        ConfigError: unknown key or invalid value, naming the field
    """
    known = set(config_keys())
    for key in values:
        if key not in known:
            raise ConfigError("unknown setting", field=key)
    merged = flatten_config(base) if base is not None else {}
    merged.update(values)
    try:
        return AttackConfig.model_validate(_nest(merged))
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or None
        raise ConfigError(first["msg"], field=field) from e


def parse_config_text(text: str, source: str = "<text>") -> Tuple[AttackConfig, List[str]]:
    """Parse flat config text; returns the config and the keys left at their defaults."""
    values: Dict[str, Any] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got '{line}'")
        key = key.strip()
        if key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate setting", field=key)
        values[key] = _parse_value(raw)
    config = build_config(values)
    defaulted = [key for key in config_keys() if key not in values]
    return config, defaulted


def load_config(path: Path) -> Tuple[AttackConfig, List[str]]:
    """Load and validate a run config file.

    Returns:
        The config and its defaults report (every key not set by the file)

    Raises:
        ConfigError: missing or unreadable file, unknown key, or invalid value
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    config, defaulted = parse_config_text(text, source=str(path))
    for key in defaulted:
        logger.debug(f"Config default: {key} = {_format_value(flatten_config(config)[key])}")
    logger.info(f"Loaded config {path} ({len(defaulted)} settings defaulted)")
    return config, defaulted


def config_to_text(config: AttackConfig) -> str:
    lines = []
    section: Optional[str] = ""
    for key, value in flatten_config(config).items():
        head = key.split(".", 1)[0] if "." in key else None
        if head != section:
            lines.append("")
            lines.append(f"# {head}" if head else "# attack")
            section = head
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines).lstrip("\n") + "\n"


def save_config(config: AttackConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config_to_text(config), encoding="utf-8")
    logger.info(f"Saved config to {path}")
    return path
