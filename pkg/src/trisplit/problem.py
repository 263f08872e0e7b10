"""Problem container ``min F(Ax) + G(y) + H(x, y)``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError
from .functions import ProxFunction, SmoothCoupling
from .linop import DenseOperator

__all__ = ["ProblemInstance", "AssumptionFlags"]


@dataclass(frozen=True)
class AssumptionFlags:
    """Boundedness metadata.

    Iterates are guaranteed bounded when H is coercive, or when A is
    invertible and both F and G are coercive. Instances satisfying neither
    route are ``unguarded``.
    """

    h_coercive: bool = False
    a_invertible: bool = False
    f_coercive: bool = False
    g_coercive: bool = False

    @property
    def guarded(self) -> bool:
        return self.h_coercive or (self.a_invertible and self.f_coercive and self.g_coercive)

    def to_dict(self):
        return {
            "h_coercive": self.h_coercive,
            "a_invertible": self.a_invertible,
            "f_coercive": self.f_coercive,
            "g_coercive": self.g_coercive,
            "guarded": self.guarded,
        }


@dataclass
class ProblemInstance:
    """One instance: ``f`` acts on ``Ax``, ``g`` on ``y``, ``h`` couples both.

    ``descriptor`` records how the instance was built (``name``, ``params``,
    ``seed``) so it can be written back to a config file.
    """

    f: ProxFunction
    g: ProxFunction
    h: SmoothCoupling
    a: DenseOperator
    q: int
    assumption_flags: AssumptionFlags = field(default_factory=AssumptionFlags)
    analytic_solution: Optional[tuple] = None
    inf_h: Optional[float] = None
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.a, DenseOperator):
            self.a = DenseOperator(self.a)
        m_h = getattr(self.h, "m", None)
        q_h = getattr(self.h, "q", None)
        if m_h is not None and m_h != self.a.cols:
            raise DimensionError(f"H acts on x in R^{m_h} but A has {self.a.cols} columns")
        if q_h is not None and q_h != self.q:
            raise DimensionError(f"H acts on y in R^{q_h} but q = {self.q}")
        if self.inf_h is None:
            self.inf_h = self.h.inf_value

    @property
    def m(self) -> int:
        return self.a.cols

    @property
    def p(self) -> int:
        return self.a.rows

    @property
    def dims(self):
        return (self.m, self.q, self.p)

    @property
    def lipschitz_L(self) -> float:
        return self.h.lipschitz_L

    @property
    def name(self) -> str:
        return self.descriptor.get("name", "custom")

    def objective(self, x, y):
        """``F(Ax) + G(y) + H(x, y)``; broadcasts over leading axes."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.f(self.a.apply(x)) + self.g(y) + self.h.value(x, y)

    def psi_lower_hint(self) -> Optional[float]:
        """``inf F + inf G + inf H`` when ``inf H`` is known, else ``None``."""
        if self.inf_h is None:
            return None
        return self.f.lower_bound + self.g.lower_bound + self.inf_h
