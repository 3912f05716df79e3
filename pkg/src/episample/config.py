"""Run configuration: JSON parsing, validation and defaults."""

from __future__ import annotations

import difflib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .asr import MODES
from .measures import MeasureConfig
from .metalearn import ALGOS, Arch, embedding_arch, regression_arch
from .samplers import SamplerConfig, SamplerError
from .taskgen import GeneratorSpec

ALIASES = {
    "learning_rate": "lambda_outer",
    "lr": "lambda_outer",
    "outer_lr": "lambda_outer",
    "meta_lr": "lambda_outer",
    "inner_lr": "lambda_inner",
    "steps": "inner_steps",
    "epochs": "episodes",
    "pool_size": "n_pool",
}


class ConfigError(ValueError):
    pass


def _reject_unknown(obj: dict, known, where: str) -> None:
    for key in obj:
        if key in known:
            continue
        hint = ALIASES.get(key) if ALIASES.get(key) in known else None
        if hint is None:
            close = difflib.get_close_matches(key, list(known), n=1)
            hint = close[0] if close else None
        msg = f"unknown key {key!r} in {where}"
        if hint:
            msg += f"; did you mean {hint!r}?"
        raise ConfigError(msg)


@dataclass(frozen=True)
class AsrConfig:
    hidden: int = 16
    lr: float = 0.01
    mode: str = "weight_only"
    candidate_factor: int = 4

    def __post_init__(self):
        if self.hidden < 1:
            raise ConfigError("asr.hidden must be >= 1")
        if not self.lr > 0:
            raise ConfigError("asr.lr must be > 0")
        if self.mode not in MODES:
            raise ConfigError(f"asr.mode must be one of {MODES}")
        if self.candidate_factor < 1:
            raise ConfigError("asr.candidate_factor must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (40, 40)
    embed_dim: int = 8

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden) or self.embed_dim < 1:
            raise ConfigError("model sizes must be >= 1")

    def arch_for(self, gen: GeneratorSpec) -> Arch:
        if gen.is_classification:
            return embedding_arch(gen.d_in, self.embed_dim, self.hidden)
        return regression_arch(self.hidden, gen.d_in)


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorSpec
    algo: str
    episodes: int
    seed: int = 0
    sampler: Optional[SamplerConfig] = None
    asr: Optional[AsrConfig] = None
    n_pool: int = 4
    lambda_inner: float = 0.01
    lambda_outer: float = 0.01
    inner_steps: int = 5
    eval_steps: int = 10
    eval_tasks: int = 200
    eval_every: int = 0
    seeds: int = 5
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    out: Optional[str] = None
    verbosity: int = 0

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if (self.sampler is None) == (self.asr is None):
            raise ConfigError("give exactly one of 'sampler' or 'asr'")
        if self.n_pool < 1 or self.seeds < 1 or self.eval_tasks < 1:
            raise ConfigError("n_pool, seeds and eval_tasks must be >= 1")
        if self.lambda_inner < 0 or self.lambda_outer <= 0:
            raise ConfigError("need lambda_inner >= 0 and lambda_outer > 0")
        if self.inner_steps < 0 or self.eval_steps < 0 or self.eval_every < 0:
            raise ConfigError("step counts must be >= 0")
        if self.algo == "protonet" and not self.generator.is_classification:
            raise ConfigError("protonet needs a classification generator")

    @property
    def label(self) -> str:
        return "ASr" if self.asr is not None else self.sampler.kind.value

    @property
    def run_seeds(self) -> list:
        return [self.seed + i for i in range(self.seeds)]

    @property
    def eval_interval(self) -> int:
        return self.eval_every or max(1, self.episodes // 20)

    def to_dict(self) -> dict:
        out = {
            "generator": self.generator.to_dict(),
            "algo": self.algo,
            "episodes": self.episodes,
            "seed": self.seed,
            "n_pool": self.n_pool,
            "lambda_inner": self.lambda_inner,
            "lambda_outer": self.lambda_outer,
            "inner_steps": self.inner_steps,
            "eval_steps": self.eval_steps,
            "eval_tasks": self.eval_tasks,
            "eval_every": self.eval_every,
            "seeds": self.seeds,
            "measure": asdict(self.measure),
            "model": {"hidden": list(self.model.hidden), "embed_dim": self.model.embed_dim},
        }
        if self.sampler is not None:
            out["sampler"] = self.sampler.to_dict()
        else:
            out["asr"] = asdict(self.asr)
        return out

    def replace(self, **changes) -> "RunConfig":
        from dataclasses import replace

        return replace(self, **changes)


_TOP_KEYS = {f.name for f in fields(RunConfig)}


def _sub(cls, obj, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    _reject_unknown(obj, {f.name for f in fields(cls)}, where)
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(obj, _TOP_KEYS, "config")
    for key in ("generator", "algo", "episodes"):
        if key not in obj:
            raise ConfigError(f"missing required key {key!r}")
    kw = dict(obj)
    kw["generator"] = _sub(GeneratorSpec, obj["generator"], "generator")
    if "sampler" in obj:
        try:
            kw["sampler"] = SamplerConfig.from_dict(obj["sampler"])
        except SamplerError as exc:
            raise ConfigError(f"sampler: {exc}") from None
    if "asr" in obj:
        kw["asr"] = _sub(AsrConfig, obj["asr"], "asr")
    if "measure" in obj:
        kw["measure"] = _sub(MeasureConfig, obj["measure"], "measure")
    if "model" in obj:
        kw["model"] = _sub(ModelConfig, obj["model"], "model")
    try:
        return RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def parse_config(path) -> RunConfig:
    return config_from_dict(load_json(path))
