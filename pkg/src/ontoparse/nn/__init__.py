from . import tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients
from .layers import lstm_init, lstm_step, project_keys, soft_attention
from .optim import MomentumSGD
from .params import ParamStore
from .tensor import Tensor, backward

__all__ = [
    "tensor", "Tensor", "backward", "ParamStore", "MomentumSGD",
    "lstm_step", "lstm_init", "soft_attention", "project_keys",
    "check_gradients", "save_checkpoint", "load_checkpoint",
]
