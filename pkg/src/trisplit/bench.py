"""Problem corpus, special-case reductions and a brute-force oracle.

Every builder is deterministic given its arguments; random data come from
``numpy.random.default_rng(seed)`` with the seed recorded in the
instance descriptor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, GridTooLarge
from .functions import L0, L1, QuadraticCoupling, SquaredL2, Zero, make_function
from .linop import DenseOperator, load_matrix_csv
from .problem import AssumptionFlags, ProblemInstance

__all__ = [
    "ProblemInstance",
    "AssumptionFlags",
    "Reduction",
    "OracleResult",
    "DEFAULT_SEED",
    "first_difference",
    "make_tv_sparse_recovery",
    "make_convex_sanity",
    "make_one_dimensional",
    "make_reduction_palm",
    "make_reduction_botnguyen",
    "make_reduction_proxgrad",
    "make_quadratic",
    "brute_force_oracle",
    "make_instance",
    "instance_names",
    "dump_signal_csv",
]

DEFAULT_SEED = 20240611
MAX_GRID_POINTS = 10**8
_CHUNK = 1 << 20


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _full_column_rank(mat) -> bool:
    mat = np.atleast_2d(mat)
    return mat.shape[0] >= mat.shape[1] and np.linalg.matrix_rank(mat) == mat.shape[1]


def first_difference(m) -> np.ndarray:
    """``(m-1) x m`` matrix with rows ``(..., -1, 1, ...)``."""
    if m < 2:
        raise ValueError("first difference needs m >= 2")
    d = np.zeros((m - 1, m))
    idx = np.arange(m - 1)
    d[idx, idx] = -1.0
    d[idx, idx + 1] = 1.0
    return d


def make_tv_sparse_recovery(m=20, noise_seed=DEFAULT_SEED, lam_f=0.1, lam_g=0.05, noise=0.05):
    """Total-variation plus sparsity model of a noisy piecewise-constant signal.

    ``F = lam_f ||.||_1`` on the first differences ``A x``, ``G = lam_g ||.||_0``
    on ``y`` and ``H(x, y) = 1/2 ||x - y - b||^2``: ``x`` carries the
    piecewise-constant part and ``y`` sparse spikes.
    """
    m = int(m)
    if m < 3:
        raise ValueError("tv_sparse_recovery needs m >= 3")
    rng = np.random.default_rng(noise_seed)
    cuts = np.sort(rng.choice(np.arange(1, m), size=min(3, m - 1), replace=False))
    levels = rng.uniform(-1.0, 1.0, size=cuts.size + 1)
    clean = np.repeat(levels, np.diff(np.concatenate([[0], cuts, [m]])))
    b = clean + noise * rng.standard_normal(m)
    eye = np.eye(m)
    h = QuadraticCoupling(eye, -eye, b)
    return ProblemInstance(
        f=L1(lam_f), g=L0(lam_g), h=h, a=DenseOperator(first_difference(m)), q=m,
        # H is flat along x - y = const and A has a kernel: no boundedness route
        assumption_flags=AssumptionFlags(h_coercive=False, a_invertible=False,
                                         f_coercive=True, g_coercive=False),
        descriptor={"name": "tv_sparse_recovery", "seed": int(noise_seed),
                    "params": {"m": m, "lam_f": lam_f, "lam_g": lam_g, "noise": noise}},
    )


CONVEX_C = (3.0, -0.4, 1.7, -2.5)
CONVEX_D = (1.0, -2.0, 0.5, 3.0)


def make_convex_sanity(m=1, c=None, d=None):
    """``|x|_1 + 1/2 ||y||^2 + 1/2 ||x - c||^2 + 1/2 ||y - d||^2`` with ``A = Id``.

    The minimizer is ``(soft_threshold(c, 1), d / 2)``.
    """
    m = int(m)
    if not 1 <= m <= 4:
        raise ValueError("convex_sanity needs 1 <= m <= 4")
    c = np.asarray(CONVEX_C[:m] if c is None else c, dtype=float).reshape(m)
    d = np.asarray(CONVEX_D[:m] if d is None else d, dtype=float).reshape(m)
    zeros = np.zeros((m, m))
    eye = np.eye(m)
    h = QuadraticCoupling(np.vstack([eye, zeros]), np.vstack([zeros, eye]), np.concatenate([c, d]))
    return ProblemInstance(
        f=L1(1.0), g=SquaredL2(1.0), h=h, a=DenseOperator.identity(m), q=m,
        assumption_flags=AssumptionFlags(True, True, True, True),
        analytic_solution=(_soft(c, 1.0), d / 2.0),
        descriptor={"name": "convex_sanity", "seed": None,
                    "params": {"m": m, "c": c.tolist(), "d": d.tolist()}},
    )


def make_one_dimensional():
    """``|x| + 1/2 (x - 1)^2`` with a passive ``y``; minimizer ``x = 0``, value ``1/2``."""
    h = QuadraticCoupling([[1.0]], [[0.0]], [1.0])
    return ProblemInstance(
        f=L1(1.0), g=Zero(), h=h, a=DenseOperator.identity(1), q=1,
        assumption_flags=AssumptionFlags(h_coercive=False, a_invertible=True,
                                         f_coercive=True, g_coercive=False),
        analytic_solution=(np.zeros(1), None),
        descriptor={"name": "one_dimensional", "seed": None, "params": {}},
    )


class Reduction(NamedTuple):
    """A suite instance and the standalone iteration it must reproduce."""

    problem: ProblemInstance
    reference_step: Callable


def make_reduction_palm(m=3, q=2, seed=DEFAULT_SEED, f=None, g=None):
    """``A = Id`` with a random quadratic coupling.

    The reference step is the identity-operator scheme written out with
    the coupling matrices directly.
    """
    rng = np.random.default_rng(seed)
    K = rng.standard_normal((m + q, m))
    M = rng.standard_normal((m + q, q))
    b = rng.standard_normal(m + q)
    f = Zero() if f is None else f
    g = L1(0.1) if g is None else g
    h = QuadraticCoupling(K, M, b)
    problem = ProblemInstance(
        f=f, g=g, h=h, a=DenseOperator.identity(m), q=q,
        assumption_flags=AssumptionFlags(h_coercive=_full_column_rank(np.hstack([K, M])),
                                         a_invertible=True, f_coercive=False, g_coercive=False),
        descriptor={"name": "reduction_palm", "seed": int(seed), "params": {"m": m, "q": q}},
    )

    def reference_step(x, y, z, u, params):
        mu, beta, tau, sigma = params.mu, params.beta, params.tau, params.sigma
        y1 = g.prox(1.0 / mu, y - M.T @ (K @ x + M @ y - b) / mu)
        z1 = f.prox(1.0 / beta, x + u / beta)
        x1 = x - (K.T @ (K @ x + M @ y1 - b) + u + beta * (x - z1)) / tau
        u1 = u + sigma * beta * (x1 - z1)
        return x1, y1, z1, u1

    return Reduction(problem, reference_step)


def make_reduction_botnguyen(m=3, p=2, q=2, seed=DEFAULT_SEED, f=None):
    """``G = 0`` and ``H(x, y) = 1/2 ||K x - b||^2``; ``y`` never moves.

    The reference step is the three-step ``(z, x, u)`` scheme.
    """
    if p > m:
        raise ValueError("botnguyen reduction needs p <= m for a surjective A")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, m))
    K = rng.standard_normal((m + 1, m))
    b = rng.standard_normal(m + 1)
    f = L1(0.5) if f is None else f
    h = QuadraticCoupling(K, np.zeros((m + 1, q)), b)
    problem = ProblemInstance(
        f=f, g=Zero(), h=h, a=DenseOperator(A), q=q,
        assumption_flags=AssumptionFlags(h_coercive=False, a_invertible=(p == m),
                                         f_coercive=isinstance(f, L1), g_coercive=False),
        descriptor={"name": "reduction_botnguyen", "seed": int(seed),
                    "params": {"m": m, "p": p, "q": q}},
    )

    def reference_step(x, z, u, params):
        beta, tau, sigma = params.beta, params.tau, params.sigma
        z1 = f.prox(1.0 / beta, A @ x + u / beta)
        x1 = x - (K.T @ (K @ x - b) + A.T @ u + beta * A.T @ (A @ x - z1)) / tau
        u1 = u + sigma * beta * (A @ x1 - z1)
        return x1, z1, u1

    return Reduction(problem, reference_step)


def make_reduction_proxgrad(q=3, m=2, seed=DEFAULT_SEED, g=None):
    """``A = Id``, ``F = 0`` and ``H(x, y) = 1/2 ||M y - b||^2``.

    The y-iterates are those of plain proximal gradient with step ``1/mu``.
    """
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((q + 1, q))
    b = rng.standard_normal(q + 1)
    g = L1(0.2) if g is None else g
    h = QuadraticCoupling(np.zeros((q + 1, m)), M, b)
    problem = ProblemInstance(
        f=Zero(), g=g, h=h, a=DenseOperator.identity(m), q=q,
        assumption_flags=AssumptionFlags(h_coercive=False, a_invertible=True,
                                         f_coercive=False, g_coercive=isinstance(g, L1)),
        descriptor={"name": "reduction_proxgrad", "seed": int(seed), "params": {"q": q, "m": m}},
    )

    def reference_step(y, params):
        return g.prox(1.0 / params.mu, y - M.T @ (M @ y - b) / params.mu)

    return Reduction(problem, reference_step)


def make_quadratic(a, k, m, b, f=None, g=None, weight=1.0):
    """User-supplied ``F(Ax) + G(y) + weight/2 ||K x + M y - b||^2``.

    ``a`` is a nested list or the path of a CSV file. ``f`` and ``g``
    default to ``Zero``.
    """
    a = load_matrix_csv(a) if isinstance(a, str) else np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("a must be a matrix")
    k = np.asarray(k, dtype=float)
    m_mat = np.asarray(m, dtype=float)
    h = QuadraticCoupling(k, m_mat, np.asarray(b, dtype=float), weight=weight)
    return ProblemInstance(
        f=Zero() if f is None else f, g=Zero() if g is None else g, h=h, a=DenseOperator(a),
        q=m_mat.shape[1],
        assumption_flags=AssumptionFlags(h_coercive=_full_column_rank(np.hstack([k, m_mat])),
                                         a_invertible=a.shape[0] == a.shape[1] and _full_column_rank(a),
                                         f_coercive=False, g_coercive=False),
        descriptor={"name": "quadratic", "seed": None, "params": {}},
    )


# ---------------------------------------------------------------------------
# brute-force oracle


class OracleResult(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    value: float


def _axes(box, step):
    axes = []
    for lo, hi in box:
        if hi < lo:
            raise ValueError(f"empty box side [{lo}, {hi}]")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        axes.append(lo + step * np.arange(count))
    return axes


def _grid_min(problem, axes, jobs=1):
    """Minimum over the tensor grid; ties go to the lowest C-order index."""
    m = problem.m
    shape = tuple(len(a) for a in axes)
    total = int(np.prod(shape, dtype=np.int64))
    if total > MAX_GRID_POINTS:
        raise GridTooLarge(f"grid has {total} points, limit is {MAX_GRID_POINTS}")

    def chunk(start):
        idx = np.arange(start, min(start + _CHUNK, total))
        coords = np.unravel_index(idx, shape)
        pts = np.stack([ax[c] for ax, c in zip(axes, coords)], axis=-1)
        vals = problem.objective(pts[:, :m], pts[:, m:])
        k = int(np.argmin(vals))
        return float(vals[k]), int(idx[k])

    starts = range(0, total, _CHUNK)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(chunk, starts))
    else:
        results = [chunk(s) for s in starts]
    # deterministic reduction: by value, then by grid index
    value, flat = min(results)
    point = np.array([ax[i] for ax, i in zip(axes, np.unravel_index(flat, shape))])
    return point, value


def brute_force_oracle(problem: ProblemInstance, box, resolution=1e-3, refine=1e-5, jobs=1) -> OracleResult:
    """Exhaustive grid minimization of ``F(Ax) + G(y) + H(x, y)`` over ``box``.

    Parameters
    ----------
    box : sequence of (lo, hi)
        One interval per coordinate of the stacked ``(x, y)``.
    resolution : float
        Coarse grid step.
    refine : float or None
        Step of a second pass over the cells adjacent to the coarse
        minimizer, clipped to ``box``. ``None`` skips it.

    Raises
    ------
    GridTooLarge
        When either pass would exceed ``1e8`` points.
    """
    box = [(float(lo), float(hi)) for lo, hi in box]
    dim = problem.m + problem.q
    if len(box) != dim:
        raise ValueError(f"box needs {dim} intervals, got {len(box)}")
    if dim > 3:
        raise GridTooLarge(f"oracle supports at most 3 coordinates, got {dim}")
    best, value = _grid_min(problem, _axes(box, resolution), jobs)
    if refine:
        local = [(max(lo, c - resolution), min(hi, c + resolution)) for (lo, hi), c in zip(box, best)]
        fine, fine_value = _grid_min(problem, _axes(local, refine), jobs)
        if fine_value < value:
            best, value = fine, fine_value
    return OracleResult(best[: problem.m], best[problem.m:], value)


# ---------------------------------------------------------------------------
# registry


_REGISTRY = {
    "tv_sparse_recovery": lambda seed=None, **kw: make_tv_sparse_recovery(
        noise_seed=DEFAULT_SEED if seed is None else seed, **kw),
    "convex_sanity": lambda seed=None, **kw: make_convex_sanity(**kw),
    "one_dimensional": lambda seed=None, **kw: make_one_dimensional(**kw),
    "reduction_palm": lambda seed=None, **kw: make_reduction_palm(
        seed=DEFAULT_SEED if seed is None else seed, **_with_functions(kw)).problem,
    "reduction_botnguyen": lambda seed=None, **kw: make_reduction_botnguyen(
        seed=DEFAULT_SEED if seed is None else seed, **_with_functions(kw)).problem,
    "reduction_proxgrad": lambda seed=None, **kw: make_reduction_proxgrad(
        seed=DEFAULT_SEED if seed is None else seed, **_with_functions(kw)).problem,
    "quadratic": lambda seed=None, **kw: make_quadratic(**_with_functions(kw)),
}


def _with_functions(kw):
    """Turn ``{"kind": ..., ...}`` tables for ``f``/``g`` into function objects."""
    out = dict(kw)
    for key in ("f", "g"):
        if isinstance(out.get(key), dict):
            spec = dict(out[key])
            out[key] = make_function(spec.pop("kind"), **spec)
    return out


def instance_names():
    return sorted(_REGISTRY)


def make_instance(name, seed=None, **params) -> ProblemInstance:
    """Build a registered instance by name; ``seed`` overrides the default seed."""
    try:
        builder = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; expected one of {instance_names()}") from None
    try:
        problem = builder(seed=seed, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for problem {name!r}: {exc}") from None
    problem.descriptor.setdefault("params", {}).update(
        {k: v for k, v in params.items() if k not in problem.descriptor["params"]})
    return problem


def dump_signal_csv(problem: ProblemInstance, path) -> None:
    """Write the data vector ``b`` of a quadratic coupling as ``index,value`` rows."""
    b = getattr(problem.h, "b", None)
    if b is None:
        raise ValueError("instance has no data vector to dump")
    with open(path, "w", newline="") as fh:
        fh.write("index,value\n")
        for i, v in enumerate(b):
            fh.write(f"{i},{format(float(v), '.17g')}\n")
