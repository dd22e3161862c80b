"""Flat ``key = value`` experiment configuration with flag overrides."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .linkpred import SimilarityMode
from .trainer import TrainConfig

SETTINGS = ("per-relation-transductive", "multi-relation-transductive", "multi-relation-inductive")


@dataclass
class ExperimentConfig:
    # data
    triples: str = ""
    types: str = ""
    relations: str = ""
    schema: str = ""
    inverse: bool = True
    # settings
    setting: str = "multi-relation-transductive"
    train_relations: list = field(default_factory=list)
    test_relations: list = field(default_factory=list)
    # training (mirrors TrainConfig)
    i_base: int = 500
    i_r: int = 5
    k: int = 20
    n: int = 40
    alpha: float = 0.0005
    beta: float = 0.05
    lambda1: float = 1.0
    lambda2: float = 1.0
    query_threshold: float | None = None
    seed: int = 0
    # model
    d_e: int = 64
    d_h: int = 200
    max_hops: int = 4
    embed_method: str = "transe"
    embed_epochs: int = 200
    # inference / evaluation
    beam_width: int = 400
    similarity: str = "sum_conf"
    reg_weight: float = 0.01
    lp_l: int = 5
    split_ratio: float = 0.8
    budget_multiplier: int = 1

    def train_config(self) -> TrainConfig:
        return TrainConfig(i_base=self.i_base, i_r=self.i_r, k=self.k, n=self.n, lambda1=self.lambda1,
                           lambda2=self.lambda2, alpha=self.alpha, beta=self.beta, seed=self.seed,
                           query_threshold=self.query_threshold)

    def validate(self) -> "ExperimentConfig":
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting must be one of {', '.join(SETTINGS)}")
        tr, te = set(self.train_relations), set(self.test_relations)
        if self.setting == "multi-relation-inductive":
            if tr & te:
                raise ConfigError(f"inductive setting needs disjoint relation lists; shared: {sorted(tr & te)}")
        elif te and not te <= tr:
            raise ConfigError(f"transductive setting needs test relations within train: {sorted(te - tr)}")
        for name in ("d_e", "d_h", "max_hops", "beam_width", "embed_epochs", "lp_l"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.embed_method not in ("transe", "random"):
            raise ConfigError("embed_method must be 'transe' or 'random'")
        try:
            SimilarityMode(self.similarity)
        except ValueError:
            raise ConfigError(f"unknown similarity mode {self.similarity!r}") from None
        self.train_config()  # range checks
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(name: str, raw: str, current):
    raw = raw.strip()
    kind = type(current)
    try:
        if name in ("train_relations", "test_relations"):
            return [x.strip() for x in raw.split(",") if x.strip()]
        if name == "query_threshold":
            return None if raw.lower() in ("", "none") else float(raw)
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def apply_overrides(cfg: ExperimentConfig, pairs: dict) -> ExperimentConfig:
    known = {f.name for f in fields(cfg)}
    for key, raw in pairs.items():
        key = key.strip().replace("-", "_")
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}")
        setattr(cfg, key, _coerce(key, str(raw), getattr(cfg, key)))
    return cfg


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path:
        try:
            with open(path, encoding="utf-8") as f:
                text = f.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        apply_overrides(cfg, parse_config_text(text, str(path)))
    if overrides:
        apply_overrides(cfg, overrides)
    return cfg.validate()


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, list):
            v = ",".join(v)
        lines.append(f"{k} = {'' if v is None else v}")
    return "\n".join(lines) + "\n"
