from .flows import (INVERTIBILITY_EPS, effective_u, flow_forward,
                    flow_inverse, flow_log_density, init_flow_stack,
                    planar_inverse)
from .model import (Belief, ImaginedRollout, ModelLossBreakdown,
                    WorldModelConfig, advance_context, decode_observation,
                    encode, filter_sequence, filter_step, imagine_rollout,
                    init_world_model, initial_context, model_loss, obs_scales,
                    open_loop_eval, posterior_belief, predict_reward,
                    prior_belief)

__all__ = [
    "INVERTIBILITY_EPS",
    "effective_u",
    "flow_forward",
    "flow_inverse",
    "flow_log_density",
    "init_flow_stack",
    "planar_inverse",
    "Belief",
    "ImaginedRollout",
    "ModelLossBreakdown",
    "WorldModelConfig",
    "advance_context",
    "decode_observation",
    "encode",
    "filter_sequence",
    "filter_step",
    "imagine_rollout",
    "init_world_model",
    "initial_context",
    "model_loss",
    "obs_scales",
    "open_loop_eval",
    "posterior_belief",
    "predict_reward",
    "prior_belief",
]
