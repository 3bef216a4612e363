"""Meta-trained inference and Q networks, and linear fitted-Q iteration."""

from pure_explorer.learner.buffer import ReplayBuffer, Transition, transitions_from_history
from pure_explorer.learner.fitted_q import FittedQ, fitted_q_linear
from pure_explorer.learner.losses import cost_update, inference_loss, q_loss_fixed_budget, q_loss_fixed_confidence
from pure_explorer.learner.model import InferenceNet, QNet, SequenceModel, TokenEncoder
from pure_explorer.learner.trainer import LearnedPolicy, LearnerState, load_checkpoint, save_checkpoint, train

__all__ = [
    "FittedQ",
    "InferenceNet",
    "LearnedPolicy",
    "LearnerState",
    "QNet",
    "ReplayBuffer",
    "SequenceModel",
    "TokenEncoder",
    "Transition",
    "cost_update",
    "fitted_q_linear",
    "inference_loss",
    "load_checkpoint",
    "q_loss_fixed_budget",
    "q_loss_fixed_confidence",
    "save_checkpoint",
    "train",
    "transitions_from_history",
]
