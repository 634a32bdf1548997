"""Run configuration and its plain-text ``key = value`` file format.

Nested sections use dotted keys::

    # comment
    epochs = 50
    data.n_train = 512
    weights.w_m = 0.1
    model.widths = (16, 32, 64, 128)

Values are Python literals; ``true``/``false`` are accepted for booleans.
"""
import ast
import dataclasses
import hashlib
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .losses import AnnealSchedule, LossWeights
from .model import ModelConfig
from .synthdata import DataConfig


@dataclass(frozen=True)
class ModelShape:
    widths: tuple = (16, 32, 64, 128)
    n_classes: int = 2
    n_seg_classes: int = 3
    mask_conv_width: int = 16


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelShape = field(default_factory=ModelShape)
    weights: LossWeights = field(default_factory=LossWeights)
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    lr: float = 1e-4
    weight_decay: float = 1e-5
    epochs: int = 50
    batch_size: int = 8
    md_only: bool = False
    use_un: bool = True
    use_ui: bool = True
    seed: int = 0
    threads: int = 1
    data_workers: int = 1
    eval_sigmas: tuple = (0.0, 0.03, 0.05)
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.md_only and (self.use_un or self.use_ui):
            raise ConfigurationError("md_only excludes use_un and use_ui")
        if self.epochs < 0 or self.batch_size <= 0 or self.threads <= 0:
            raise ConfigurationError("epochs must be >= 0, batch_size and threads > 0")
        if not self.lr > 0 or self.weight_decay < 0:
            raise ConfigurationError("lr must be positive and weight_decay non-negative")
        if any(s < 0 for s in self.eval_sigmas):
            raise ConfigurationError("noise levels must be non-negative")

    def model_config(self):
        return ModelConfig(
            widths=tuple(self.model.widths),
            n_classes=self.model.n_classes,
            n_seg_classes=self.model.n_seg_classes,
            mask_conv_width=self.model.mask_conv_width,
            use_un=self.use_un and not self.md_only,
            use_ui=self.use_ui and not self.md_only,
        )

    @property
    def variant(self):
        if self.md_only or not (self.use_un or self.use_ui):
            return "MD"
        return "MD" + ("+UN" if self.use_un else "") + ("+UI" if self.use_ui else "")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _flatten(obj, prefix=""):
    items = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            items += _flatten(value, f"{prefix}{f.name}.")
        else:
            items.append((prefix + f.name, value))
    return items


def dump_config(cfg, prefix=""):
    """Serialise a (nested) config dataclass or a flat dict to ``key = value`` text."""
    items = _flatten(cfg) if dataclasses.is_dataclass(cfg) else list(cfg.items())
    return "".join(f"{prefix}{key} = {value!r}\n" for key, value in items)


def config_digest(cfg):
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def parse_value(text):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = parse_value(value)
    return out


def _build(cls, values, path):
    kwargs = {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in values.items():
        head, _, rest = key.partition(".")
        if head not in known:
            raise ConfigurationError(f"unknown config key {path + key!r}")
        if rest:
            kwargs.setdefault(head, {})[rest] = value
        else:
            kwargs[head] = value
    for name, value in list(kwargs.items()):
        f = known[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if isinstance(value, dict):
            if sub is None:
                raise ConfigurationError(f"{path + name!r} is not a section")
            kwargs[name] = _build(sub, value, f"{path}{name}.")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def config_from_dict(values, base=None):
    """Build a :class:`RunConfig` from flat dotted keys, layered over ``base``."""
    merged = dict(_flatten(base)) if base is not None else {}
    merged.update(values)
    return _build(RunConfig, merged, "")


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    values.update(overrides or {})
    return config_from_dict(values)
