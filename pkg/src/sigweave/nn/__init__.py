from . import kernels, tensor
from .tensor import Tensor, no_grad

__all__ = ["Tensor", "kernels", "no_grad", "tensor"]
