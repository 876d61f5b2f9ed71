from .a2c import Rollout, TrainConfig, a2c_update, gradient_check
from .checkpoint import load_checkpoint, save_checkpoint
from .network import NetConfig, NetworkParams, forward_actor, forward_critic, init_params
from .training import CURRICULA, CurriculumPlan, train_curriculum, train_stage

__all__ = [
    "CURRICULA", "CurriculumPlan", "NetConfig", "NetworkParams", "Rollout", "TrainConfig", "a2c_update",
    "forward_actor", "forward_critic", "gradient_check", "init_params", "load_checkpoint", "save_checkpoint",
    "train_curriculum", "train_stage",
]
