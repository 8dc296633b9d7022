from .config import ConfigError, RunConfig
from .evaluation import (EvalReport, evaluate_checkpoint, evaluate_params,
                         evaluate_scripted_expert, report_from_episodes)
from .metrics import (BASELINES, MetricsError, append_log_record,
                      compute_asd_msd, episode_distance,
                      episodes_to_baseline, read_log, rolling_mean,
                      summarize_log)
from .server import PROTOCOL_VERSION, EnvServer, EnvSession, serve
from .training import (Trainer, build_params, lambda_config,
                       run_policy_episode, run_random_episode,
                       world_model_config)

__all__ = [
    "BASELINES",
    "ConfigError",
    "EnvServer",
    "EnvSession",
    "EvalReport",
    "MetricsError",
    "PROTOCOL_VERSION",
    "RunConfig",
    "Trainer",
    "append_log_record",
    "build_params",
    "compute_asd_msd",
    "episode_distance",
    "episodes_to_baseline",
    "evaluate_checkpoint",
    "evaluate_params",
    "evaluate_scripted_expert",
    "lambda_config",
    "read_log",
    "report_from_episodes",
    "rolling_mean",
    "run_policy_episode",
    "run_random_episode",
    "serve",
    "summarize_log",
    "world_model_config",
]
