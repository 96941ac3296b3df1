"""Spatial-temporal recurrent network (quad-directional spatial RNN stacked
under a bidirectional temporal RNN, with L1-sparse projections) and the EEG
differential-entropy feature pipeline that feeds it."""

from .graph import DIRECTIONS, Direction, GridLayout, TraversalPlan, build_plan, \
    build_plans, seed_layout_62
from .loss import LossConfig, objective, objective_grad, softmax
from .model import MODES, ModelConfig, StrnnModel
from .training import TrainConfig, evaluate, grad_check, saliency, train

__version__ = "0.1.0"
