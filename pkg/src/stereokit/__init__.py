"""Desk-scale stereo disparity estimation on a minimal autodiff core."""

from .tensor import GradTape, Tensor, no_grad, set_debug_checks

__all__ = ["GradTape", "Tensor", "no_grad", "set_debug_checks"]
__version__ = "0.1.0"
