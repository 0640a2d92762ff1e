"""Flat ``key = value`` run configuration."""

import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .augment import AugmentationSpec
from .diff import ObjectiveConfig
from .encoder import EncoderConfig
from .errors import ConfigError

# keys that define the model and its data; a checkpoint is only valid
# against a config that agrees on all of them
MODEL_KEYS = (
    "data_dir", "interactions", "kg", "item_entities", "synthetic",
    "n_users", "n_items", "n_entities", "n_relations", "power_exponent", "data_seed",
    "train_frac", "valid_frac", "split_seed",
    "dim", "layers", "layer_combination", "kg_hops", "c1", "c2", "euclidean_ablation",
)
PATH_KEYS = ("data_dir", "interactions", "kg", "item_entities")
# not part of the run's identity
LOCAL_KEYS = ("out_dir",)


@dataclass
class RunConfig:
    # data: either a directory / explicit files, or the synthetic generator
    data_dir: str = ""
    interactions: str = ""
    kg: str = ""
    item_entities: str = ""
    synthetic: bool = False
    n_users: int = 200
    n_items: int = 100
    n_entities: int = 150
    n_relations: int = 4
    power_exponent: float = 1.5
    data_seed: int = 1
    train_frac: float = 0.8
    valid_frac: float = 0.1
    split_seed: int = 0
    # model
    dim: int = 64
    layers: int = 3
    layer_combination: str = "last"
    kg_hops: int = 1
    c1: float = 1.0
    c2: float = 1.0
    init_std: float = 0.1
    init_curvature: float = 1.0
    euclidean_ablation: bool = False
    # augmentation and objective
    aug: str = "C"
    dropout_ratio: float = 0.1
    prune_ratio: float = 0.1
    k1: int = 1
    k2: int = 3
    tau: float = 0.2
    lam: float = 0.5
    contrast_set: str = "batch"
    # optimization
    batch_size: int = 2048
    epochs: int = 100
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 1
    patience: int = 10
    ks: str = "10,20"
    out_dir: str = "run"

    def __post_init__(self):
        self.validate()

    def validate(self):
        sources = bool(self.data_dir) + bool(self.interactions) + bool(self.synthetic)
        if sources != 1:
            raise ConfigError("set exactly one data source: data_dir, interactions (+kg), or synthetic = true")
        if self.interactions and not self.kg:
            raise ConfigError("interactions requires a kg path")
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if not self.c2 > 0:
            raise ConfigError("c2 must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.contrast_set not in ("batch", "full"):
            raise ConfigError("contrast_set must be 'batch' or 'full'")
        if self.eval_every < 1 or self.patience < 0:
            raise ConfigError("eval_every must be >= 1 and patience >= 0")
        self.k_list()
        self.encoder_config()
        self.augmentation()

    def k_list(self):
        try:
            ks = sorted({int(k) for k in str(self.ks).split(",") if k.strip()})
        except ValueError:
            raise ConfigError(f"ks must be a comma separated list of integers, got {self.ks!r}") from None
        if not ks or ks[0] < 1:
            raise ConfigError("ks must contain positive integers")
        return ks

    def encoder_config(self):
        return EncoderConfig(
            self.layers, self.layer_combination,
            0.0 if self.aug == "P" else self.dropout_ratio,
            self.kg_hops, self.c1, self.c2,
        )

    def augmentation(self):
        return AugmentationSpec(self.aug, self.dropout_ratio, self.k1, self.k2, self.prune_ratio)

    def objective(self):
        return ObjectiveConfig(self.tau, self.lam, self.contrast_set)

    def identity(self):
        """Everything except machine-local keys, as a plain dict."""
        return {k: v for k, v in asdict(self).items() if k not in LOCAL_KEYS}

    def model_hash(self):
        d = asdict(self)
        text = "\n".join(f"{k}={d[k]!r}" for k in MODEL_KEYS)
        return hashlib.sha256(text.encode()).hexdigest()


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(field, raw, where):
    typ = field.type
    try:
        if typ is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {field.name} = {raw!r} as {typ.__name__}") from None


def parse_config(text, base_dir=None, source="<config>"):
    """Parse ``key = value`` lines (``#`` starts a comment). Paths resolve against ``base_dir``."""
    known = {f.name: f for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(known[key], raw, f"{source}:{lineno}")
    if base_dir is not None:
        for key in PATH_KEYS + LOCAL_KEYS:
            if values.get(key):
                values[key] = str((Path(base_dir) / values[key]).resolve())
    return RunConfig(**values)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent, str(path))


def dump_config(cfg):
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())
