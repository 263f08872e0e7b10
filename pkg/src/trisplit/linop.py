"""Dense linear operators and the spectral data the solver constants need.

Every constant used by the parameter tuner depends on ``||A||``,
``lambda_min(A A^T)`` and the condition number of ``A A^T``.  They are
computed once, at construction, with a cyclic Jacobi eigensolver applied to
the symmetric matrix ``A A^T``.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, NotSurjective

__all__ = [
    "Spectrum",
    "DenseOperator",
    "jacobi_eigenvalues",
    "spectral_quantities",
    "spectral_norm",
    "load_matrix_csv",
    "SURJECTIVITY_RTOL",
]

#: ``lambda_min(A A^T) <= SURJECTIVITY_RTOL * ||A||^2`` counts as rank deficient.
SURJECTIVITY_RTOL = 1e-12


class Spectrum(NamedTuple):
    norm: float
    min_eig_aat: float
    kappa: float


def jacobi_eigenvalues(sym, max_sweeps=60):
    """Eigenvalues of a symmetric matrix by the cyclic Jacobi method.

    Parameters
    ----------
    sym : array_like, shape (n, n)
        Symmetric matrix. Only symmetry up to rounding is assumed; the
        strictly upper triangle drives the rotations.
    max_sweeps : int
        Upper bound on full sweeps over all off-diagonal pairs.

    Returns
    -------
    ndarray, shape (n,)
        Eigenvalues in ascending order.
    """
    a = np.array(sym, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    a = 0.5 * (a + a.T)
    # work on a matrix with entries in [-1, 1] so squares neither overflow nor underflow
    amax = float(np.max(np.abs(a)))
    if amax == 0.0:
        return np.zeros(n)
    a = a / amax
    scale = np.linalg.norm(a)
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= eps * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                # rotation would change the diagonal below its resolution
                if abs(apq) <= 0.25 * eps * math.sqrt(abs(app * aqq)):
                    a[p, q] = a[q, p] = 0.0
                    continue
                h = aqq - app
                if abs(h) + 100.0 * abs(apq) == abs(h):
                    # theta = h / (2 apq) would overflow; t ~ 1 / (2 theta)
                    t = apq / h
                else:
                    theta = h / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a)) * amax


def spectral_quantities(entries) -> Spectrum:
    """Return ``(||A||, lambda_min(A A^T), kappa(A A^T))`` for a dense matrix.

    Raises
    ------
    NotSurjective
        When ``lambda_min(A A^T) <= 1e-12 * ||A||^2``. The exception carries
        the computed ``norm`` and ``min_eig_aat``.
    """
    a = np.atleast_2d(np.asarray(entries, dtype=float))
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"expected a nonempty matrix, got shape {a.shape}")
    eig = jacobi_eigenvalues(a @ a.T)
    lam_max = max(float(eig[-1]), 0.0)
    lam_min = max(float(eig[0]), 0.0)
    norm = math.sqrt(lam_max)
    if a.shape[0] > a.shape[1] or lam_min <= SURJECTIVITY_RTOL * lam_max:
        raise NotSurjective(
            f"A ({a.shape[0]}x{a.shape[1]}) is not surjective: "
            f"lambda_min(AA^T) = {lam_min:.3e}, ||A||^2 = {lam_max:.3e}",
            norm=norm,
            min_eig_aat=lam_min,
        )
    return Spectrum(norm, lam_min, lam_max / lam_min)


def spectral_norm(entries) -> float:
    """Largest singular value of a dense matrix (no rank requirement)."""
    a = np.atleast_2d(np.asarray(entries, dtype=float))
    if a.size == 0:
        return 0.0
    # the smaller Gram matrix has the same nonzero spectrum
    gram = a @ a.T if a.shape[0] <= a.shape[1] else a.T @ a
    return math.sqrt(max(float(jacobi_eigenvalues(gram)[-1]), 0.0))


class DenseOperator:
    """Immutable dense matrix ``A: R^m -> R^p`` with cached spectral data.

    ``rows`` is ``p`` and ``cols`` is ``m``. Rank-deficient operators can be
    built (so that callers can report on them); :attr:`is_surjective` is then
    false, :attr:`kappa` is infinite and :meth:`require_surjective` raises.
    """

    __slots__ = ("_entries", "_norm", "_min_eig", "_kappa", "_surjective")

    def __init__(self, entries):
        a = np.array(np.atleast_2d(entries), dtype=float)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise DimensionError(f"operator must be a nonempty matrix, got shape {a.shape}")
        a.setflags(write=False)
        self._entries = a
        try:
            spec = spectral_quantities(a)
        except NotSurjective as exc:
            self._norm, self._min_eig = exc.norm, exc.min_eig_aat
            self._kappa = math.inf
            self._surjective = False
        else:
            self._norm, self._min_eig, self._kappa = spec
            self._surjective = True

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def from_csv(cls, path):
        return cls(load_matrix_csv(path))

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def rows(self) -> int:
        return self._entries.shape[0]

    @property
    def cols(self) -> int:
        return self._entries.shape[1]

    @property
    def shape(self):
        return self._entries.shape

    @property
    def norm(self) -> float:
        return self._norm

    @property
    def min_eig_aat(self) -> float:
        return self._min_eig

    @property
    def kappa(self) -> float:
        return self._kappa

    @property
    def is_surjective(self) -> bool:
        return self._surjective

    @property
    def spectrum(self) -> Spectrum:
        return Spectrum(self._norm, self._min_eig, self._kappa)

    def require_surjective(self) -> Spectrum:
        if not self._surjective:
            raise NotSurjective(
                f"operator {self.rows}x{self.cols} is not surjective: lambda_min(AA^T) = {self._min_eig:.3e}",
                norm=self._norm,
                min_eig_aat=self._min_eig,
            )
        return self.spectrum

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.cols,):
            raise DimensionError(f"apply: expected length {self.cols}, got shape {x.shape}")
        return x @ self._entries.T

    def adjoint_apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.rows,):
            raise DimensionError(f"adjoint_apply: expected length {self.rows}, got shape {v.shape}")
        return v @ self._entries

    def coupling_matrix_apply(self, tau, beta, x):
        """Apply ``B = tau*Id - beta*A^T A`` to ``x``."""
        x = np.asarray(x, dtype=float)
        return tau * x - beta * self.adjoint_apply(self.apply(x))

    def __repr__(self):
        return f"DenseOperator({self.rows}x{self.cols}, norm={self._norm:.6g}, kappa={self._kappa:.6g})"


def load_matrix_csv(path) -> np.ndarray:
    """Read a comma-separated matrix, one row per line."""
    return np.loadtxt(Path(path), delimiter=",", ndmin=2, dtype=float)


# Module-level aliases mirroring the operator methods.
def apply(op: DenseOperator, x):
    return op.apply(x)


def adjoint_apply(op: DenseOperator, v):
    return op.adjoint_apply(v)


def coupling_matrix_apply(op: DenseOperator, tau, beta, x):
    return op.coupling_matrix_apply(tau, beta, x)
