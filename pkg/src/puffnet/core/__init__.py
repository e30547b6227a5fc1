from . import functional
from .gradcheck import grad_check
from .module import Module
from .patches import PatchSequence, patchify, unpatchify
from .rng import Rng
from .tensor import (
    MacCounter,
    NonFiniteError,
    ShapeError,
    Tensor,
    backward,
    count_macs,
    no_grad,
)

__all__ = [
    "functional", "grad_check", "Module", "PatchSequence", "patchify", "unpatchify",
    "Rng", "MacCounter", "NonFiniteError", "ShapeError", "Tensor", "backward",
    "count_macs", "no_grad",
]
