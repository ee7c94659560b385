"""Dense SDP backends behind a single solve interface."""

from .base import (FAILED, INFEASIBLE, OPTIMAL, UNBOUNDED, SDPProblem, SDPResult,
                   available_backends, default_backend_name, get_backend, register_backend)
from .clarabel_backend import ClarabelBackend
from .ipm import DenseIPM

register_backend("clarabel", ClarabelBackend)
register_backend("ipm", DenseIPM)

__all__ = [
    "SDPProblem",
    "SDPResult",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "FAILED",
    "get_backend",
    "register_backend",
    "available_backends",
    "default_backend_name",
    "ClarabelBackend",
    "DenseIPM",
]
