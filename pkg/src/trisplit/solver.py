"""The four-step splitting iteration, its Lyapunov function and trace recording.

One step from ``(x, y, z, u)``::

    y+ = prox_{G/mu}(y - grad_y H(x, y) / mu)
    z+ = prox_{F/beta}(A x + u / beta)
    x+ = x - (grad_x H(x, y+) + A^T u + beta A^T (A x - z+)) / tau
    u+ = u + sigma beta (A x+ - z+)

The regularized augmented Lagrangian ``Psi`` decreases along the iterates
when the parameters are admissible; every recorded step carries ``Psi``,
the norm of an explicit element of its limiting subdifferential and four
KKT residuals.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from .errors import AssumptionViolation, DimensionError, NumericalDivergence
from .problem import ProblemInstance
from .tuning import DerivedConstants, SolverParams, derive_constants, validate

__all__ = [
    "SolverState",
    "SubgradientElement",
    "IterationRecord",
    "IterationTrace",
    "StoppingRule",
    "step",
    "augmented_lagrangian",
    "evaluate_psi",
    "subgradient_residual",
    "kkt_residual",
    "run",
    "TRACE_COLUMNS",
    "DESCENT_RTOL",
]

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "n", "psi", "lagrangian", "objective", "feasibility",
    "dx", "dy", "dz", "du", "subgrad_norm",
    "kkt_gx", "kkt_y", "kkt_z", "kkt_feas",
)
TRACE_SCHEMA = "trisplit.trace/1"
#: relative tolerance of the per-step descent check
DESCENT_RTOL = 1e-9


def _vec(v, n, name):
    arr = np.array(v, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise DimensionError(f"{name} must have length {n}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class SolverState:
    """Iterate ``X_n = (x_n, y_n, z_n, u_n, x_{n-1}, u_{n-1})``.

    ``y_prev`` and ``z_prev`` are kept as well: the y-component of the
    subgradient element needs ``y_{n-1}`` and the trace reports ``||dz||``.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    u: np.ndarray
    x_prev: np.ndarray
    y_prev: np.ndarray
    z_prev: np.ndarray
    u_prev: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, problem: ProblemInstance, x0=None, y0=None, z0=None, u0=None):
        """Starting point; defaults are ``x0 = 0``, ``y0 = 0``, ``z0 = A x0``, ``u0 = 0``."""
        m, q, p = problem.dims
        x = np.zeros(m) if x0 is None else _vec(x0, m, "x0")
        y = np.zeros(q) if y0 is None else _vec(y0, q, "y0")
        z = problem.a.apply(x) if z0 is None else _vec(z0, p, "z0")
        u = np.zeros(p) if u0 is None else _vec(u0, p, "u0")
        return cls(x, y, z, u, x.copy(), y.copy(), z.copy(), u.copy(), 0)

    def norm(self) -> float:
        return math.sqrt(sum(float(v @ v) for v in (self.x, self.y, self.z, self.u)))


def _check_finite(block, value, state, trace=None):
    if not np.all(np.isfinite(value)):
        raise NumericalDivergence(
            f"non-finite {block} at iteration {state.iteration + 1}", block=block, trace=trace
        )


def step(state: SolverState, problem: ProblemInstance, params: SolverParams) -> SolverState:
    """One iteration. The y- and z-updates only read the pre-step state."""
    a, h = problem.a, problem.h
    mu, beta, tau, sigma = params.mu, params.beta, params.tau, params.sigma
    x, y, u = state.x, state.y, state.u

    y1 = problem.g.prox(1.0 / mu, y - h.grad_y(x, y) / mu)
    _check_finite("y", y1, state)
    ax = a.apply(x)
    z1 = problem.f.prox(1.0 / beta, ax + u / beta)
    _check_finite("z", z1, state)
    x1 = x - (h.grad_x(x, y1) + a.adjoint_apply(u) + beta * a.adjoint_apply(ax - z1)) / tau
    _check_finite("x", x1, state)
    u1 = u + sigma * beta * (a.apply(x1) - z1)
    _check_finite("u", u1, state)
    return SolverState(x1, y1, z1, u1, x, y, state.z, u, state.iteration + 1)


def augmented_lagrangian(state: SolverState, problem: ProblemInstance, params: SolverParams) -> float:
    """``F(z) + G(y) + H(x, y) + <u, Ax - z> + (beta/2) ||Ax - z||^2``."""
    r = problem.a.apply(state.x) - state.z
    base = float(problem.f(state.z) + problem.g(state.y) + problem.h.value(state.x, state.y))
    if math.isinf(base):
        return base
    return base + float(state.u @ r) + 0.5 * params.beta * float(r @ r)


def _coupling_term(state, problem, params):
    """``w = A^T (u - u') + sigma B (x - x')`` with ``B = tau Id - beta A^T A``."""
    a = problem.a
    dx = state.x - state.x_prev
    return a.adjoint_apply(state.u - state.u_prev) + params.sigma * a.coupling_matrix_apply(
        params.tau, params.beta, dx
    )


def evaluate_psi(state: SolverState, problem: ProblemInstance, params: SolverParams,
                 constants: DerivedConstants) -> float:
    """``L_beta + C0 ||A^T(u - u') + sigma B (x - x')||^2 + C1 ||x - x'||^2``."""
    w = _coupling_term(state, problem, params)
    dx = state.x - state.x_prev
    return (augmented_lagrangian(state, problem, params)
            + constants.c0 * float(w @ w) + constants.c1 * float(dx @ dx))


@dataclass(frozen=True)
class SubgradientElement:
    d_x: np.ndarray
    d_y: np.ndarray
    d_z: np.ndarray
    d_u: np.ndarray
    d_x_prev: np.ndarray
    d_u_prev: np.ndarray

    @property
    def norm(self) -> float:
        """Product-space norm, the Euclidean norm of all blocks stacked."""
        return math.sqrt(sum(float(v @ v) for v in self.components()))

    def components(self):
        return (self.d_x, self.d_y, self.d_z, self.d_u, self.d_x_prev, self.d_u_prev)


def subgradient_residual(state: SolverState, problem: ProblemInstance, params: SolverParams,
                         constants: DerivedConstants) -> SubgradientElement:
    """Explicit element of the limiting subdifferential of ``Psi`` at ``X_n``."""
    a, h = problem.a, problem.h
    mu, beta, tau, sigma = params.mu, params.beta, params.tau, params.sigma
    c0, c1 = constants.c0, constants.c1
    dx = state.x - state.x_prev
    w = _coupling_term(state, problem, params)
    bw = a.coupling_matrix_apply(tau, beta, w)  # B is symmetric
    aw = a.apply(w)
    r = a.apply(state.x) - state.z

    gx, gy = h.grad(state.x, state.y)
    d_x = gx + a.adjoint_apply(state.u) + beta * a.adjoint_apply(r) + 2.0 * c1 * dx + 2.0 * sigma * c0 * bw
    d_y = gy - h.grad_y(state.x_prev, state.y_prev) + mu * (state.y_prev - state.y)
    d_z = state.u_prev - state.u + beta * a.apply(state.x_prev - state.x)
    d_u = r + 2.0 * c0 * aw
    d_x_prev = -2.0 * sigma * c0 * bw - 2.0 * c1 * dx
    d_u_prev = -2.0 * c0 * aw
    return SubgradientElement(d_x, d_y, d_z, d_u, d_x_prev, d_u_prev)


def kkt_residual(state: SolverState, problem: ProblemInstance):
    """``(r_grad_x, r_y, r_z, r_feas)`` with unit probe steps for the prox residuals."""
    a, h = problem.a, problem.h
    gx, gy = h.grad(state.x, state.y)
    r_gx = np.linalg.norm(gx + a.adjoint_apply(state.u))
    r_y = np.linalg.norm(state.y - problem.g.prox(1.0, state.y - gy))
    r_z = np.linalg.norm(state.z - problem.f.prox(1.0, state.z + state.u))
    r_feas = np.linalg.norm(a.apply(state.x) - state.z)
    return float(r_gx), float(r_y), float(r_z), float(r_feas)


@dataclass(frozen=True)
class StoppingRule:
    """Stop when every step norm is ``<= step_tol`` and, if set, every KKT residual ``<= kkt_tol``."""

    max_iterations: int = 5000
    step_tol: float = 1e-8
    kkt_tol: Optional[float] = None
    divergence_guard: float = 1e12

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.step_tol < 0 or (self.kkt_tol is not None and self.kkt_tol < 0):
            raise ValueError("tolerances must be nonnegative")
        if not self.divergence_guard > 0:
            raise ValueError("divergence_guard must be positive")

    def satisfied(self, record: "IterationRecord") -> bool:
        if record.max_step > self.step_tol:
            return False
        if self.kkt_tol is None:
            return True
        return max(record.kkt_gx, record.kkt_y, record.kkt_z, record.kkt_feas) <= self.kkt_tol

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class IterationRecord:
    n: int
    psi: float
    lagrangian: float
    objective: float
    feasibility: float
    dx: float
    dy: float
    dz: float
    du: float
    subgrad_norm: float
    kkt_gx: float
    kkt_y: float
    kkt_z: float
    kkt_feas: float

    @property
    def max_step(self) -> float:
        return max(self.dx, self.dy, self.dz, self.du)

    @property
    def kkt(self):
        return (self.kkt_gx, self.kkt_y, self.kkt_z, self.kkt_feas)

    def as_row(self):
        return [getattr(self, c) for c in TRACE_COLUMNS]


def make_record(state: SolverState, problem, params, constants) -> IterationRecord:
    norm = np.linalg.norm
    r = problem.a.apply(state.x) - state.z
    lag = augmented_lagrangian(state, problem, params)
    w = _coupling_term(state, problem, params)
    dxv = state.x - state.x_prev
    psi = lag + constants.c0 * float(w @ w) + constants.c1 * float(dxv @ dxv)
    objective = float(problem.f(state.z) + problem.g(state.y) + problem.h.value(state.x, state.y))
    d = subgradient_residual(state, problem, params, constants)
    return IterationRecord(
        n=state.iteration,
        psi=psi,
        lagrangian=lag,
        objective=objective,
        feasibility=float(norm(r)),
        dx=float(norm(dxv)),
        dy=float(norm(state.y - state.y_prev)),
        dz=float(norm(state.z - state.z_prev)),
        du=float(norm(state.u - state.u_prev)),
        subgrad_norm=d.norm,
        **dict(zip(("kkt_gx", "kkt_y", "kkt_z", "kkt_feas"), kkt_residual(state, problem))),
    )


def descent_violation(prev: IterationRecord, cur: IterationRecord, constants: DerivedConstants) -> float:
    """``Psi_{n+1} + C2 dx^2 + C3 dy^2 + C4 du^2 - Psi_n`` for consecutive records."""
    return (cur.psi + constants.c2 * cur.dx**2 + constants.c3 * cur.dy**2
            + constants.c4 * cur.du**2 - prev.psi)


@dataclass
class IterationTrace:
    """Records for steps ``n = 1..N``; ``initial_lagrangian`` is ``L_beta`` at ``n = 0``.

    ``status`` is one of ``converged``, ``max_iterations``, ``diverged`` or
    ``assumption_violation``.
    """

    records: List[IterationRecord] = field(default_factory=list)
    status: str = "running"
    params: Optional[SolverParams] = None
    constants: Optional[DerivedConstants] = None
    initial_lagrangian: Optional[float] = None
    final_state: Optional[SolverState] = None
    states: Optional[List[SolverState]] = None

    def __len__(self):
        return len(self.records)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    # -- serialization --------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        for rec in self.records:
            buf.write(str(rec.n))
            for c in TRACE_COLUMNS[1:]:
                buf.write("," + format(getattr(rec, c), ".17g"))
            buf.write("\n")
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "schema": TRACE_SCHEMA,
            "status": self.status,
            "params": self.params.to_dict() if self.params else None,
            "initial_lagrangian": self.initial_lagrangian,
            "columns": list(TRACE_COLUMNS),
            "records": [rec.as_row() for rec in self.records],
        }
        return json.dumps(payload, indent=1) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "IterationTrace":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("trace CSV is empty") from None
        if tuple(h.strip() for h in header) != TRACE_COLUMNS:
            raise ValueError(f"trace CSV header mismatch: expected {','.join(TRACE_COLUMNS)}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACE_COLUMNS):
                raise ValueError(f"line {lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
            try:
                records.append(IterationRecord(int(row[0]), *(float(v) for v in row[1:])))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return cls(records=records, status="loaded")

    @classmethod
    def from_json(cls, text: str) -> "IterationTrace":
        data = json.loads(text)
        if not isinstance(data, dict) or data.get("schema") != TRACE_SCHEMA:
            raise ValueError(f"trace JSON must carry schema {TRACE_SCHEMA!r}")
        if tuple(data.get("columns", ())) != TRACE_COLUMNS:
            raise ValueError("trace JSON columns mismatch")
        records = []
        for i, row in enumerate(data["records"]):
            if len(row) != len(TRACE_COLUMNS):
                raise ValueError(f"record {i}: expected {len(TRACE_COLUMNS)} fields")
            records.append(IterationRecord(int(row[0]), *(float(v) for v in row[1:])))
        params = SolverParams(**data["params"]) if data.get("params") else None
        return cls(records=records, status=data.get("status", "loaded"), params=params,
                   initial_lagrangian=data.get("initial_lagrangian"))


def run(problem: ProblemInstance, params: SolverParams, stopping: Optional[StoppingRule] = None,
        initial: Optional[SolverState] = None, strict: bool = True, keep_states: bool = False,
        constants: Optional[DerivedConstants] = None) -> IterationTrace:
    """Iterate until ``stopping`` fires and return the recorded trace.

    In strict mode parameters failing the admissibility checks are refused
    and every step is checked against the descent inequality. In permissive
    mode both are only logged.

    Raises
    ------
    AssumptionViolation
        Strict mode only; the partial trace is attached.
    NumericalDivergence
        Non-finite iterate or state norm above ``stopping.divergence_guard``;
        the partial trace is attached.
    NotSurjective
        When ``A`` has no full row rank.
    """
    stopping = stopping or StoppingRule()
    spectrum = problem.a.require_surjective()
    if constants is None:
        constants = derive_constants(spectrum, problem.lipschitz_L, params,
                                     psi_lower_bound_hint=problem.psi_lower_hint())
    report = validate(params, constants, spectrum)
    trace = IterationTrace(params=params, constants=constants)
    if not report.admissible:
        msg = f"parameters fail admissibility checks: {', '.join(report.failures())}"
        if strict:
            trace.status = "assumption_violation"
            raise AssumptionViolation(msg, report=report, trace=trace)
        log.warning(msg)

    state = initial if initial is not None else SolverState.initial(problem)
    trace.initial_lagrangian = augmented_lagrangian(state, problem, params)
    if keep_states:
        trace.states = [state]
    prev = None
    for _ in range(int(stopping.max_iterations)):
        try:
            state = step(state, problem, params)
        except NumericalDivergence as exc:
            trace.status = "diverged"
            trace.final_state = state
            exc.trace = trace
            raise
        rec = make_record(state, problem, params, constants)
        trace.records.append(rec)
        trace.final_state = state
        if keep_states:
            trace.states.append(state)
        if state.norm() > stopping.divergence_guard:
            trace.status = "diverged"
            raise NumericalDivergence(
                f"state norm {state.norm():.3e} exceeds guard at iteration {rec.n}", block="state", trace=trace
            )
        if prev is not None:
            viol = descent_violation(prev, rec, constants)
            if viol > DESCENT_RTOL * (1.0 + max(abs(prev.psi), abs(rec.psi))):
                msg = f"descent inequality violated by {viol:.3e} at iteration {rec.n}"
                if strict:
                    trace.status = "assumption_violation"
                    raise AssumptionViolation(msg, report=report, trace=trace)
                log.debug(msg)
        prev = rec
        if stopping.satisfied(rec):
            trace.status = "converged"
            return trace
    trace.status = "max_iterations"
    return trace

