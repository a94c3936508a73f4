"""Run configuration.

Config files are flat ``key = value`` text; ``#`` starts a comment, blank
lines are ignored and unknown keys are an error. Command-line flags override
file values. Keys (default, unit):

    gat_heads        2          attention heads per GAT layer
    gat_layers       2          stacked GAT layers per graph
    epochs           50         training epochs
    batch_size       64         drugs per optimizer step
    num_layers       3          transformer decoder layers
    decoder_heads    8          attention heads per decoder attention block
    d_model          128        model width (GAT output and decoder)
    max_len          200        labels kept per drug
    max_atoms        128        memory length; larger molecules are truncated
    vocab_size       13191      label codec size, specials excluded
    lr_max           0.001      cosine schedule start
    lr_min           0.00001    cosine schedule end
    dropout          0.1        attention and feed-forward dropout rate
    seeds            1,2,3,4,5  split and initialization seeds
    dataset          (bundled toy corpus)  drug_id/structure/labels TSV
    output_dir       runs       where run directories are written
    rules            (bundled)  BRICS rule table JSON
    prune_threshold  none       drop motifs whose average TF-IDF is below this
    raw_features     false      skip atom feature standardization
    sinusoidal_pos   false      fixed sinusoidal instead of learned positions
    allow_duplicates false      let generation repeat a label
    float_width      32         32 or 64 bit training arithmetic
    label_order      frequency  frequency | dataset | random target order
    feature_mode     mol+motif  mol+motif | mol | motif
    fragmenter       brics      brics | rings
    workers          4          threads for corpus preparation
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from .codec import LABEL_ORDERS
from .errors import ConfigError
from .fragment import FRAGMENTERS
from .model import FEATURE_MODES

logger = logging.getLogger(__name__)


def bundled_corpus() -> str:
    return str(resources.files("mol2adr") / "data" / "toy_corpus.tsv")


@dataclass(frozen=True)
class RunConfig:
    gat_heads: int = 2
    gat_layers: int = 2
    epochs: int = 50
    batch_size: int = 64
    num_layers: int = 3
    decoder_heads: int = 8
    d_model: int = 128
    max_len: int = 200
    max_atoms: int = 128
    vocab_size: int = 13191
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    dropout: float = 0.1
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    dataset: Optional[str] = None
    output_dir: str = "runs"
    rules: Optional[str] = None
    prune_threshold: Optional[float] = None
    raw_features: bool = False
    sinusoidal_pos: bool = False
    allow_duplicates: bool = False
    float_width: int = 32
    label_order: str = "frequency"
    feature_mode: str = "mol+motif"
    fragmenter: str = "brics"
    workers: int = 4

    def __post_init__(self):
        validate(self)

    @property
    def dataset_path(self) -> str:
        return self.dataset or bundled_corpus()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["seeds"] = list(self.seeds)
        return data

    def hash(self) -> str:
        return config_hash(self)

    def with_overrides(self, **overrides) -> "RunConfig":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return replace(self, **overrides)


def validate(cfg: RunConfig) -> None:
    """Raises ConfigError on the first out-of-range value."""
    positive = ("gat_heads", "gat_layers", "batch_size", "num_layers", "decoder_heads",
                "d_model", "max_len", "max_atoms", "vocab_size", "workers")
    for name in positive:
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1, got {getattr(cfg, name)}")
    if cfg.epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {cfg.epochs}")
    if cfg.d_model % cfg.decoder_heads:
        raise ConfigError(f"d_model {cfg.d_model} is not divisible by decoder_heads")
    if not (cfg.lr_max >= cfg.lr_min > 0):
        raise ConfigError(f"need lr_max >= lr_min > 0, got {cfg.lr_max} and {cfg.lr_min}")
    if not 0.0 <= cfg.dropout < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {cfg.dropout}")
    if not cfg.seeds:
        raise ConfigError("at least one seed is required")
    if cfg.float_width not in (32, 64):
        raise ConfigError(f"float_width must be 32 or 64, got {cfg.float_width}")
    choices = {"label_order": LABEL_ORDERS, "feature_mode": FEATURE_MODES,
               "fragmenter": FRAGMENTERS}
    for name, allowed in choices.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigError(
                f"{name} must be one of {', '.join(allowed)}, got {getattr(cfg, name)!r}"
            )


def config_hash(cfg: RunConfig) -> str:
    """First 16 hex digits of SHA-256 over the sorted JSON of every field."""
    payload = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _convert(name: str, default: Any, text: str) -> Any:
    text = text.strip()
    optional = name in ("dataset", "rules", "prune_threshold")
    if optional and text.lower() in ("", "none", "null"):
        return None
    try:
        if name == "seeds":
            return tuple(int(s) for s in text.split(",") if s.strip())
        if name == "prune_threshold":
            return float(text)
        if isinstance(default, bool):
            if text.lower() not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {text!r}")
            return _BOOL_WORDS[text.lower()]
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {e}") from e
    return text


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """Parse ``key = value`` lines into typed overrides."""
    defaults = {f.name: f.default for f in fields(RunConfig)}
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"{source}:{number}: unknown config key {key!r}")
        values[key] = _convert(key, defaults[key], value)
    return values


def load_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (None values skipped)."""
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = RunConfig().with_overrides(**values)
    logger.debug(f"Resolved config {cfg.hash()}: {cfg.to_dict()}")
    return cfg


def format_config(cfg: RunConfig) -> str:
    """The resolved config in the file format, loadable by :func:`load_config`."""
    lines = [f"# config hash {cfg.hash()}"]
    for key, value in cfg.to_dict().items():
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = str(value).lower()
        elif isinstance(value, list):
            text = ",".join(str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
