"""Run configuration: defaults, flat key=value config files, overrides."""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

from .dataset_io import load_raw, preprocess, split
from .errors import ConfigError
from .model import Hyperparams
from .rng import RngHub

RATINGS_FILE = "ratings.txt"
TRUST_FILE = "trust.txt"


@dataclass
class RunConfig:
    data_dir: str = ""
    out_dir: str = ""
    variant: str = "full"
    seed: int = 0
    dim: int = 64
    n_layers: int = 2
    tau: float = 0.2
    threshold: float = 0.5
    drop_ratio: float = 0.1
    lambda1: float = 0.01
    lambda2: float = 0.01
    lambda3: float = 1e-4
    beta: float = 0.5
    lr: float = 1e-3
    batch_size: int = 2048
    epochs: int = 100
    top_k: int = 5
    test_fraction: float = 0.2
    patience: int = 20
    val_fraction: float = 0.1
    infonce_normalize: bool = True
    infonce_negatives: str = "batch"
    exclude_train: bool = True
    hit_mode: str = "pooled"
    eval_threads: int = 1

    def hyperparams(self):
        return Hyperparams(
            dim=self.dim, n_layers=self.n_layers, tau=self.tau,
            threshold=self.threshold, drop_ratio=self.drop_ratio,
            lambda1=self.lambda1, lambda2=self.lambda2, lambda3=self.lambda3,
            beta=self.beta, lr=self.lr, batch_size=self.batch_size,
            epochs=self.epochs, top_k=self.top_k, seed=self.seed,
            infonce_normalize=self.infonce_normalize,
            infonce_negatives=self.infonce_negatives,
        )

    def with_overrides(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def validate(self):
        self.hyperparams()  # hyperparameter domain checks
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if self.eval_threads < 1:
            raise ConfigError(f"eval_threads must be >= 1, got {self.eval_threads}")
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key, raw):
    kind = _FIELD_TYPES[key]
    if kind == "bool" or kind is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "int" or kind is int:
        return int(raw)
    if kind == "float" or kind is float:
        return float(raw)
    return raw.strip()


def parse_config_file(path):
    """Read a flat ``key = value`` file into a dict of typed values."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{line_no}: unknown option {key!r}")
            values[key] = _coerce(key, raw)
    return values


def load_config(path=None, **overrides):
    """Config file values, then explicit overrides, on top of defaults."""
    values = parse_config_file(path) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values).validate()


def load_dataset_from_config(config):
    """Load, preprocess, and split the dataset named by the config."""
    ratings = os.path.join(config.data_dir, RATINGS_FILE)
    trust = os.path.join(config.data_dir, TRUST_FILE)
    raw = load_raw(ratings, trust)
    unsplit = preprocess(raw)
    return split(unsplit, config.test_fraction, RngHub(config.seed).child_seed("split"))


def write_run_record(out_dir, config, extra=None):
    """Persist the fully resolved config (and seeds) for bit-exact replay."""
    os.makedirs(out_dir, exist_ok=True)
    record = {"config": config.to_dict(), "config_digest": config.digest()}
    if extra:
        record.update(extra)
    path = os.path.join(out_dir, "run.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
