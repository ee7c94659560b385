"""Small dense SDPs and the backend registry.

Every backend solves the same form::

    minimize    c'y
    subject to  F0_j + sum_i y_i F_ij  <=  0      (each LMI block j)
                A_lin y <= b_lin
                A_eq  y  = b_eq

which covers the strict-feasibility and condition-number problems built by
:mod:`aadmm.certify`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

__all__ = [
    "SDPProblem",
    "SDPResult",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "FAILED",
    "register_backend",
    "get_backend",
    "available_backends",
    "default_backend_name",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "numerical-failure"


@dataclass
class SDPProblem:
    c: np.ndarray
    blocks: List[Tuple[np.ndarray, np.ndarray]]
    A_lin: Optional[np.ndarray] = None
    b_lin: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        blocks = []
        for F0, F in self.blocks:
            F0 = np.asarray(F0, dtype=float)
            F = np.asarray(F, dtype=float).reshape((n,) + F0.shape)
            blocks.append((F0, F))
        self.blocks = blocks
        if self.A_lin is None:
            self.A_lin, self.b_lin = np.zeros((0, n)), np.zeros(0)
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        self.A_lin = np.asarray(self.A_lin, dtype=float).reshape(-1, n)
        self.b_lin = np.asarray(self.b_lin, dtype=float).ravel()
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()

    @property
    def n_vars(self) -> int:
        return self.c.size

    def block_value(self, j: int, y) -> np.ndarray:
        F0, F = self.blocks[j]
        return F0 + np.tensordot(y, F, 1)

    def violation(self, y) -> float:
        """Largest violation of any constraint at ``y`` (0 when feasible)."""
        y = np.asarray(y, dtype=float)
        worst = 0.0
        for j in range(len(self.blocks)):
            worst = max(worst, np.linalg.eigvalsh(self.block_value(j, y))[-1])
        if self.b_lin.size:
            worst = max(worst, np.max(self.A_lin @ y - self.b_lin))
        if self.b_eq.size:
            worst = max(worst, np.max(np.abs(self.A_eq @ y - self.b_eq)))
        return float(worst)


@dataclass
class SDPResult:
    status: str
    y: Optional[np.ndarray] = None
    objective: float = float("nan")
    iterations: int = 0
    info: Dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


_BACKENDS: Dict[str, Callable[[], object]] = {}


def register_backend(name: str, factory: Callable[[], object]) -> None:
    _BACKENDS[name] = factory


def available_backends() -> List[str]:
    return sorted(_BACKENDS)


def default_backend_name() -> str:
    return os.environ.get("AADMM_SDP_BACKEND", "ipm")


def get_backend(name: Optional[str] = None):
    """Instantiate a backend; each call returns a fresh solver workspace."""
    name = name or default_backend_name()
    try:
        factory = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown SDP backend {name!r}; have {available_backends()}") from None
    return factory()
