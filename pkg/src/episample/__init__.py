"""Task measurement, task sampling and adaptive weighting for episodic meta-learning."""

from .asr import AsrParams, asr_grad, asr_init, asr_update, asr_weights
from .config import ConfigError, RunConfig, parse_config
from .measures import (
    MeasureConfig,
    measure_task,
    normalize_measures,
    task_difficulty,
    task_diversity,
    task_entropy,
    tdpp_score,
)
from .metalearn import MetaModel, evaluate, meta_step, model_init
from .samplers import Sampler, SamplerConfig, SamplerKind, make_sampler, next_pool, observe_feedback
from .taskgen import GeneratorSpec, TaskGenerator
from .tasks import EncodedTask, MeasurementVector, Task, TaskError, TaskPool, WeightedPool
from .training import RunLog, run_training

__version__ = "0.1.0"
