"""Oracles for the nonsmooth terms F, G and the smooth coupling H.

Nonsmooth terms are :class:`ProxFunction` subclasses exposing a value and a
proximal map.  All values accept a batch of points along leading axes; the
vector lives on the last axis.  Set-valued proximal maps (``L0`` at the
threshold) are resolved towards the candidate of smallest norm.

Smooth couplings expose ``value``, ``grad_x``, ``grad_y`` and a Lipschitz
constant ``lipschitz_L`` of the joint gradient.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError
from .linop import spectral_norm

__all__ = [
    "ProxFunction",
    "Zero",
    "L1",
    "L0",
    "SquaredL2",
    "BoxIndicator",
    "make_function",
    "SmoothCoupling",
    "QuadraticCoupling",
    "SeparableCoupling",
    "CustomCoupling",
    "check_lipschitz",
]


class ProxFunction:
    """Proper lsc function with an explicit lower bound and a computable prox."""

    kind = "abstract"
    lower_bound = 0.0

    def __call__(self, v):
        return self.evaluate(v)

    def evaluate(self, v):
        raise NotImplementedError

    def prox(self, gamma, v):
        """A point of ``argmin_w f(w) + ||v - w||^2 / (2 gamma)``."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "kind")
        return f"{type(self).__name__}({params})"


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValueError(f"prox parameter must be positive, got {gamma}")


def _sum_last(values):
    out = np.sum(values, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


class Zero(ProxFunction):
    kind = "zero"

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        return _sum_last(np.zeros_like(v))

    def prox(self, gamma, v):
        _check_gamma(gamma)
        return np.array(v, dtype=float, copy=True)


class _Weighted(ProxFunction):
    def __init__(self, weight=1.0):
        weight = float(weight)
        if not weight >= 0:
            raise ValueError(f"{self.kind} weight must be nonnegative, got {weight}")
        self.weight = weight

    def describe(self):
        return {"kind": self.kind, "weight": self.weight}


class L1(_Weighted):
    """``weight * ||v||_1``; prox is soft thresholding."""

    kind = "l1"

    def evaluate(self, v):
        return self.weight * _sum_last(np.abs(np.asarray(v, dtype=float)))

    def prox(self, gamma, v):
        _check_gamma(gamma)
        v = np.asarray(v, dtype=float)
        return np.sign(v) * np.maximum(np.abs(v) - gamma * self.weight, 0.0)


class L0(_Weighted):
    """``weight * #{i : v_i != 0}``; prox is hard thresholding.

    Coordinates with ``|v_i| <= sqrt(2 * gamma * weight)`` map to zero, so the
    tie at the threshold resolves to the smaller-norm candidate.
    """

    kind = "l0"

    def evaluate(self, v):
        return self.weight * _sum_last((np.asarray(v, dtype=float) != 0).astype(float))

    def prox(self, gamma, v):
        _check_gamma(gamma)
        v = np.asarray(v, dtype=float)
        # compare squares: no rounding from the square root at the tie
        keep = v * v > 2.0 * gamma * self.weight
        return np.where(keep, v, 0.0)


class SquaredL2(_Weighted):
    """``(weight / 2) * ||v||^2``."""

    kind = "squared_l2"

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * self.weight * _sum_last(v * v)

    def prox(self, gamma, v):
        _check_gamma(gamma)
        return np.asarray(v, dtype=float) / (1.0 + gamma * self.weight)


class BoxIndicator(ProxFunction):
    """Indicator of ``{v : lo <= v <= hi}`` (bounds scalar or per coordinate)."""

    kind = "box"

    def __init__(self, lo=0.0, hi=1.0):
        lo_arr = np.asarray(lo, dtype=float)
        hi_arr = np.asarray(hi, dtype=float)
        if np.any(lo_arr > hi_arr):
            raise ValueError("box lower bound exceeds upper bound")
        self.lo = lo_arr
        self.hi = hi_arr

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        inside = np.all((v >= self.lo) & (v <= self.hi), axis=-1)
        out = np.where(inside, 0.0, math.inf)
        return float(out) if np.ndim(out) == 0 else out

    def prox(self, gamma, v):
        _check_gamma(gamma)
        return np.clip(np.asarray(v, dtype=float), self.lo, self.hi)

    def describe(self):
        lo = self.lo.tolist() if self.lo.ndim else float(self.lo)
        hi = self.hi.tolist() if self.hi.ndim else float(self.hi)
        return {"kind": self.kind, "lo": lo, "hi": hi}


_CATALOG = {cls.kind: cls for cls in (Zero, L1, L0, SquaredL2, BoxIndicator)}


def make_function(kind: str, **params) -> ProxFunction:
    """Build a catalog function from its name, as used in run configs."""
    try:
        cls = _CATALOG[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown function kind {kind!r}; expected one of {sorted(_CATALOG)}") from None
    return cls(**params)


# ---------------------------------------------------------------------------
# smooth couplings


class SmoothCoupling:
    """Smooth ``H(x, y)`` with gradient Lipschitz constant ``lipschitz_L``.

    ``box`` is the bounded region ``(lo, hi)`` on which ``lipschitz_L`` is
    claimed, as a pair of arrays over the stacked ``(x, y)`` vector, or
    ``None`` when the constant is global.
    """

    kind = "abstract"
    lipschitz_L: float
    box = None
    inf_value: Optional[float] = None

    @property
    def ell_plus(self) -> float:
        return self.lipschitz_L * math.sqrt(2.0)

    def value(self, x, y):
        raise NotImplementedError

    def grad_x(self, x, y):
        raise NotImplementedError

    def grad_y(self, x, y):
        raise NotImplementedError

    def grad(self, x, y):
        return self.grad_x(x, y), self.grad_y(x, y)


class QuadraticCoupling(SmoothCoupling):
    """``H(x, y) = (weight / 2) * ||K x + M y - b||^2``.

    The Lipschitz constant is the exact spectral norm of the Hessian
    ``weight * [K M]^T [K M]``.
    """

    kind = "quadratic"

    def __init__(self, K, M, b, weight=1.0):
        K = np.atleast_2d(np.asarray(K, dtype=float))
        M = np.asarray(M, dtype=float)
        if M.ndim == 1:
            M = M.reshape(K.shape[0], -1)
        b = np.asarray(b, dtype=float).reshape(-1)
        if not (K.shape[0] == M.shape[0] == b.shape[0]):
            raise DimensionError(f"K {K.shape}, M {M.shape} and b {b.shape} disagree on rows")
        if not weight > 0:
            raise ValueError("quadratic weight must be positive")
        self.K, self.M, self.b = K, M, b
        self.weight = float(weight)
        self.m, self.q = K.shape[1], M.shape[1]
        J = np.hstack([K, M])
        self.lipschitz_L = self.weight * spectral_norm(J) ** 2
        # inf of the least-squares residual
        if J.size:
            sol = np.linalg.lstsq(J, b, rcond=None)[0]
            resid = J @ sol - b
        else:
            resid = -b
        self.inf_value = 0.5 * self.weight * float(resid @ resid)

    def residual(self, x, y):
        return np.asarray(x, dtype=float) @ self.K.T + np.asarray(y, dtype=float) @ self.M.T - self.b

    def value(self, x, y):
        r = self.residual(x, y)
        return 0.5 * self.weight * _sum_last(r * r)

    def grad_x(self, x, y):
        return self.weight * (self.residual(x, y) @ self.K)

    def grad_y(self, x, y):
        return self.weight * (self.residual(x, y) @ self.M)

    def grad(self, x, y):
        r = self.weight * self.residual(x, y)
        return r @ self.K, r @ self.M

    def describe(self):
        return {
            "kind": self.kind,
            "K": self.K.tolist(),
            "M": self.M.tolist(),
            "b": self.b.tolist(),
            "weight": self.weight,
        }


class SeparableCoupling(SmoothCoupling):
    """``H(x, y) = hx(x) + hy(y)`` from two smooth callbacks.

    The Hessian is block diagonal, so ``lipschitz_L = max(Lx, Ly)``.
    """

    kind = "separable"

    def __init__(self, hx: Callable, grad_hx: Callable, lipschitz_x: float,
                 hy: Callable, grad_hy: Callable, lipschitz_y: float,
                 box=None, inf_value=None):
        self._hx, self._ghx = hx, grad_hx
        self._hy, self._ghy = hy, grad_hy
        self.lipschitz_L = float(max(lipschitz_x, lipschitz_y))
        self.box = box
        self.inf_value = inf_value

    def value(self, x, y):
        return self._hx(np.asarray(x, dtype=float)) + self._hy(np.asarray(y, dtype=float))

    def grad_x(self, x, y):
        return np.asarray(self._ghx(np.asarray(x, dtype=float)), dtype=float)

    def grad_y(self, x, y):
        return np.asarray(self._ghy(np.asarray(y, dtype=float)), dtype=float)


class CustomCoupling(SmoothCoupling):
    """User-registered coupling: callbacks plus a declared constant and box.

    The declared constant is trusted by the tuner; :func:`check_lipschitz`
    validates it by sampling, it does not certify it.
    """

    kind = "custom"

    def __init__(self, value: Callable, grad_x: Callable, grad_y: Callable,
                 lipschitz_L: float, box, inf_value=None):
        if not lipschitz_L > 0:
            raise ValueError("declared Lipschitz constant must be positive")
        if box is None:
            raise ValueError("custom couplings must declare the box on which L holds")
        self._value, self._gx, self._gy = value, grad_x, grad_y
        self.lipschitz_L = float(lipschitz_L)
        self.box = (np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float))
        self.inf_value = inf_value

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim == 1:
            return float(self._value(x, y))
        flat_x = x.reshape(-1, x.shape[-1])
        flat_y = np.broadcast_to(y, x.shape[:-1] + y.shape[-1:]).reshape(-1, y.shape[-1])
        vals = np.array([self._value(a, b) for a, b in zip(flat_x, flat_y)])
        return vals.reshape(x.shape[:-1])

    def grad_x(self, x, y):
        return np.asarray(self._gx(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)

    def grad_y(self, x, y):
        return np.asarray(self._gy(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)


def check_lipschitz(h: SmoothCoupling, m, q, samples=1000, rng=None, box=None):
    """Sample pairs in the declared box and compare gradient growth to L.

    Returns ``(ok, worst_ratio)`` where ``worst_ratio`` is the largest
    observed ``|||grad H(a) - grad H(b)||| / |||a - b|||``.
    """
    rng = np.random.default_rng(rng)
    if box is None:
        box = h.box
    if box is None:
        lo, hi = -10.0 * np.ones(m + q), 10.0 * np.ones(m + q)
    else:
        lo = np.broadcast_to(np.asarray(box[0], dtype=float), (m + q,))
        hi = np.broadcast_to(np.asarray(box[1], dtype=float), (m + q,))
    worst = 0.0
    for _ in range(samples):
        a = rng.uniform(lo, hi)
        b = rng.uniform(lo, hi)
        ga = np.concatenate(h.grad(a[:m], a[m:]))
        gb = np.concatenate(h.grad(b[:m], b[m:]))
        dist = np.linalg.norm(a - b)
        if dist > 0:
            worst = max(worst, np.linalg.norm(ga - gb) / dist)
    return worst <= h.lipschitz_L * (1.0 + 1e-9), worst
