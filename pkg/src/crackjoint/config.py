"""Run configuration: dataclasses, JSON schema validation, config hash."""

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from importlib import resources

import jsonschema

from .errors import ConfigError, ParameterError
from .losses import LossConfig
from .networks import NetworkConfig
from .weighting import WeightConfig

_BETA_RE = re.compile(r"^(increasing|fixed:([0-9.]+))$")


def parse_beta_schedule(schedule: str) -> tuple[str, float | None]:
    m = _BETA_RE.match(schedule or "")
    if not m:
        raise ParameterError(f"beta schedule must be 'increasing' or 'fixed:<value>', got {schedule!r}")
    if m.group(1) == "increasing":
        return "increasing", None
    value = float(m.group(2))
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"fixed beta {value} outside [0, 1]")
    return "fixed", value


def beta_at(iteration: int, total: int, schedule: str) -> float:
    """Task weight at ``iteration`` of ``total``: a constant, or ``iteration / total``."""
    if total <= 0 or not 0 <= iteration <= total:
        raise ParameterError(f"need 0 <= iteration <= total, got {iteration}/{total}")
    kind, value = parse_beta_schedule(schedule)
    return value if kind == "fixed" else iteration / total


@dataclass
class TrainConfig:
    step1_iters: int = 200_000
    step2_iters: int = 30_000
    step3_iters: int = 150_000
    batch_size: int = 6
    lr_pretrain: float = 2e-4
    lr_finetune: float = 2e-5
    lr_seg: float | None = None
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    beta_schedule: str | None = None
    mode: str = "joint"
    ckpt_every: int = 0

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        if min(self.step1_iters, self.step2_iters, self.step3_iters) <= 0 or self.batch_size < 1:
            raise ParameterError("iterations and batch size must be positive")
        if self.beta_schedule is not None:
            parse_beta_schedule(self.beta_schedule)
        if self.mode not in ("joint", "independent"):
            raise ParameterError("mode must be 'joint' or 'independent'")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Desk-scale schedule: 200/100/1000 iterations, batch 4."""
        base = dict(step1_iters=200, step2_iters=100, step3_iters=1000, batch_size=4,
                    lr_pretrain=1e-3, lr_finetune=2e-4, lr_seg=1e-3)
        base.update(overrides)
        return cls(**base)

    def iters(self, stage: int) -> int:
        return {1: self.step1_iters, 2: self.step2_iters, 3: self.step3_iters}[stage]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


@dataclass
class DataConfig:
    manifest: str | None = None
    patch: int = 64
    synthetic: dict = field(default_factory=lambda: {"train": 64, "test": 16, "pretrain": 64,
                                                     "size": 64, "seed": 0})


@dataclass
class DegradationConfig:
    scale: str = "1/4"
    sigma2_range: tuple[float, float] = (0.2, 4.0)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.scale)


@dataclass
class RunConfig:
    seed: int = 0
    out: str | None = None
    data: DataConfig = field(default_factory=DataConfig)
    degradation: DegradationConfig = field(default_factory=DegradationConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    weights: WeightConfig = field(default_factory=WeightConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def beta_schedule(self) -> str:
        return self.train.beta_schedule or f"fixed:{self.loss.beta}"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out": self.out,
            "data": asdict(self.data),
            "degradation": {"scale": self.degradation.scale,
                            "sigma2_range": list(self.degradation.sigma2_range)},
            "network": self.network.to_dict(),
            "loss": self.loss.to_dict(),
            "weights": self.weights.to_dict(),
            "train": self.train.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        validate(d)
        try:
            data = DataConfig(**{**asdict(DataConfig()), **d.get("data", {})})
            syn = DataConfig().synthetic
            syn.update(d.get("data", {}).get("synthetic", {}))
            data.synthetic = syn
            return cls(
                seed=d.get("seed", 0),
                out=d.get("out"),
                data=data,
                degradation=DegradationConfig(**d.get("degradation", {})),
                network=NetworkConfig(**d.get("network", {})),
                loss=LossConfig(**d.get("loss", {})),
                weights=WeightConfig(**d.get("weights", {})),
                train=TrainConfig(**d.get("train", {})),
            )
        except (TypeError, ParameterError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(d)

    @classmethod
    def desk(cls, **train_overrides) -> "RunConfig":
        """Desk preset: short schedule and a narrower SR net (16 features)."""
        return cls(network=NetworkConfig(sr_features=16), train=TrainConfig.desk(**train_overrides))

    def replace(self, **sections) -> "RunConfig":
        """Copy with dotted overrides, e.g. ``replace(**{"loss.beta": 0.5})``."""
        new = copy.deepcopy(self)
        for key, value in sections.items():
            obj = new
            *path, last = key.split(".")
            for p in path:
                obj = getattr(obj, p)
            setattr(obj, last, value)
            if hasattr(obj, "__post_init__"):
                obj.__post_init__()
        return new

    def hash(self) -> str:
        return config_hash(self)


def schema() -> dict:
    text = resources.files("crackjoint").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


def validate(d: dict) -> None:
    try:
        jsonschema.validate(d, schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from exc


def config_hash(config: RunConfig) -> str:
    """Hex digest of the canonical config JSON, ignoring the output directory."""
    d = config.to_dict()
    d.pop("out", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
