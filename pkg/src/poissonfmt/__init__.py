"""Exact chaos calculus, thinning simulation and fourth-moment bounds on finite Poisson spaces."""
from .kernels import GroundSpace, Kernel, contract, contraction_identity_check, inner, norm, symmetrize, tensor
from .chaos import ChaosElement, integral_from_kernel, kernel_of, multiply

__version__ = "0.1.0"

__all__ = [
    "GroundSpace",
    "Kernel",
    "ChaosElement",
    "contract",
    "contraction_identity_check",
    "inner",
    "norm",
    "symmetrize",
    "tensor",
    "integral_from_kernel",
    "kernel_of",
    "multiply",
]
