"""Checks of the convergence theory on recorded traces.

Everything here is a pure function of a trace (and the constants it was
produced with). Empirical rate fits can corroborate the asymptotic theory,
never refute it, and the report wording reflects that.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import NotConverged, TooShort
from .solver import DESCENT_RTOL, IterationTrace, descent_violation
from .tuning import DerivedConstants, SolverParams

__all__ = [
    "RateEstimate",
    "DiagnosticsReport",
    "RecurrenceCheck",
    "IterateRateReport",
    "check_descent",
    "check_subgradient_bound",
    "check_feasibility_identity",
    "dual_identity_ulps",
    "psi_gaps",
    "estimate_rate",
    "check_recurrence",
    "estimate_lojasiewicz_constant",
    "iterate_rate_check",
    "diagnose",
]

FINITE_TIME = "FiniteTime"
LINEAR = "Linear"
SUBLINEAR = "Sublinear"
UNDETERMINED = "Undetermined"

SUBGRAD_ATOL = 1e-9
#: a regime wins only if its R^2 beats the other's by this margin
REGIME_MARGIN = 0.01
WARMUP_FRACTION = 0.1
TAIL_FRACTION = 0.05
MIN_POINTS = 20
#: theta for n^{-1} gaps is exactly 1, just outside [0, 1)
THETA_MAX = math.nextafter(1.0, 0.0)


def check_descent(trace: IterationTrace, constants: DerivedConstants):
    """Largest violation of ``Psi_{n+1} + C2 dx^2 + C3 dy^2 + C4 du^2 <= Psi_n``.

    Returns ``(ok, worst_violation)``; ``ok`` iff the worst violation is at
    most ``1e-9 * (1 + max |Psi|)``.
    """
    recs = trace.records
    if len(recs) < 2:
        raise TooShort(f"descent check needs at least 2 records, got {len(recs)}")
    viol = np.array([descent_violation(a, b, constants) for a, b in zip(recs[:-1], recs[1:])])
    psi = np.abs(trace.column("psi"))
    if not np.all(np.isfinite(viol)):
        return False, math.inf
    worst = float(viol.max())
    return worst <= DESCENT_RTOL * (1.0 + float(psi.max())), worst


def check_subgradient_bound(trace: IterationTrace, constants: DerivedConstants):
    """``subgrad_norm <= C5 dx + C6 dy + C7 du + 1e-9`` on every record.

    Returns ``(ok, worst_slack)`` with slack ``subgrad_norm - bound`` (so
    negative means the bound holds with room).
    """
    if not trace.records:
        raise TooShort("subgradient check needs at least 1 record")
    s = trace.column("subgrad_norm")
    bound = (constants.c5 * trace.column("dx") + constants.c6 * trace.column("dy")
             + constants.c7 * trace.column("du"))
    slack = s - bound
    if not np.all(np.isfinite(slack)):
        return False, math.inf
    worst = float(slack.max())
    return worst <= SUBGRAD_ATOL, worst


def check_feasibility_identity(trace: IterationTrace, params: SolverParams, rtol=1e-9):
    """``||A x_n - z_n|| == ||u_n - u_{n-1}|| / (sigma beta)`` on every record.

    ``u_n - u_{n-1}`` loses digits to cancellation once the dual settles, so
    the error is measured relative to the largest dual step in the trace.
    Returns ``(ok, worst_scaled_error)``.
    """
    sb = params.sigma * params.beta
    feas = trace.column("feasibility")
    du = trace.column("du")
    if not du.size:
        return True, 0.0
    scale = max(float(du.max()), float((sb * feas).max()), np.finfo(float).tiny)
    worst = float(np.max(np.abs(sb * feas - du))) / scale
    return worst <= rtol, worst


def dual_identity_ulps(before, after, problem, params) -> float:
    """Worst componentwise error of ``u+ - u = sigma beta (A x+ - z+)``.

    Measured in units of the last place of the largest magnitude among
    ``u+``, ``u`` and ``sigma beta (A x+ - z+)`` for each component.
    """
    rhs = params.sigma * params.beta * (problem.a.apply(after.x) - after.z)
    lhs = after.u - before.u
    scale = np.maximum(np.maximum(np.abs(after.u), np.abs(before.u)), np.abs(rhs))
    ulp = np.spacing(scale)
    err = np.abs(lhs - rhs)
    ratio = np.where(err == 0, 0.0, err / np.where(ulp > 0, ulp, np.finfo(float).tiny))
    return float(ratio.max()) if ratio.size else 0.0


# ---------------------------------------------------------------------------
# rates


class Gaps(NamedTuple):
    n: np.ndarray
    gaps: np.ndarray
    psi_star: float
    floor: float


def psi_gaps(psi, psi_star=None, n=None, tail_fraction=TAIL_FRACTION) -> Gaps:
    """Gaps ``Psi_n - Psi_*`` truncated at the first one below the noise floor.

    ``Psi_*`` defaults to the mean of the last ``tail_fraction`` of the
    values. The floor is ``max(10 * tail spread, 1e3 * eps * (1 + |Psi_*|))``;
    gaps that close to the estimate carry no rate information.
    """
    psi = np.asarray(psi, dtype=float)
    if n is None:
        n = np.arange(1, psi.size + 1)
    n = np.asarray(n)
    k = max(1, int(math.ceil(tail_fraction * psi.size)))
    tail = psi[-k:]
    if psi_star is None:
        psi_star = float(np.mean(tail))
    gaps = psi - psi_star
    rounding = 1e3 * np.finfo(float).eps * (1.0 + abs(psi_star))
    if np.any(gaps == 0):
        first = int(np.argmax(gaps == 0))
        # exact termination, unless the values merely rounded onto Psi_*
        if np.all(gaps[first:] == 0) and (first == 0 or gaps[first - 1] > rounding):
            return Gaps(n, gaps, psi_star, 0.0)
    spread = float(tail.max() - tail.min()) if tail.size else 0.0
    floor = max(10.0 * spread, rounding)
    below = np.nonzero(gaps <= floor)[0]
    end = int(below[0]) if below.size else gaps.size
    return Gaps(n[:end], gaps[:end], psi_star, floor)


@dataclass(frozen=True)
class RateEstimate:
    regime: str
    theta_hat: Optional[float] = None
    q_hat: Optional[float] = None
    fit_quality: float = 0.0
    window: Optional[tuple] = None
    r2_linear: Optional[float] = None
    r2_sublinear: Optional[float] = None

    def to_dict(self):
        return asdict(self)

    def describe(self) -> str:
        if self.regime == FINITE_TIME:
            return "gaps reach exactly zero: consistent with finite-time convergence (theta = 0)"
        if self.regime == LINEAR:
            return (f"linear fit Q = {self.q_hat:.6g} (R^2 = {self.fit_quality:.4f}): "
                    "consistent with theta <= 1/2")
        if self.regime == SUBLINEAR:
            return (f"sublinear fit theta = {self.theta_hat:.4f} (R^2 = {self.fit_quality:.4f}): "
                    "consistent with theta in (1/2, 1)")
        return "rate undetermined: the data do not separate the linear and sublinear fits"


def _fit(t, logg):
    """Least-squares line through ``(t, logg)``; returns ``(slope, r2)``."""
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, logg, rcond=None)
    resid = logg - A @ coef
    ss_tot = float(np.sum((logg - logg.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), max(0.0, min(1.0, r2))


def estimate_rate(gaps, n=None, warmup=WARMUP_FRACTION, min_points=MIN_POINTS) -> RateEstimate:
    """Classify the decay of ``gaps`` (``Psi_n - Psi_*``) as finite, linear or sublinear.

    Fits ``log gap`` against ``n`` (linear regime) and against ``log n``
    (sublinear regime) after dropping the first ``warmup`` fraction.

    Parameters
    ----------
    gaps : array_like
        Nonnegative gaps, e.g. from :func:`psi_gaps`.
    n : array_like, optional
        Iteration indices, default ``1..len(gaps)``.

    Raises
    ------
    TooShort
        Fewer than ``min_points`` usable points remain.
    """
    if isinstance(gaps, Gaps):
        n, gaps = gaps.n, gaps.gaps
    g = np.asarray(gaps, dtype=float)
    n = np.arange(1, g.size + 1) if n is None else np.asarray(n, dtype=float)
    if g.size and np.any(g == 0):
        first = int(np.argmax(g == 0))
        if np.all(g[first:] == 0):
            return RateEstimate(FINITE_TIME, theta_hat=0.0, fit_quality=1.0,
                                window=(int(n[0]), int(n[first])))
    start = int(math.floor(warmup * g.size))
    g, n = g[start:], n[start:]
    keep = np.isfinite(g) & (g > 0) & (n > 0)
    g, n = g[keep], n[keep]
    if g.size < min_points:
        raise TooShort(f"rate estimate needs at least {min_points} usable points, got {g.size}")
    logg = np.log(g)
    slope_lin, r2_lin = _fit(n, logg)
    slope_sub, r2_sub = _fit(np.log(n), logg)
    window = (int(n[0]), int(n[-1]))
    common = dict(window=window, r2_linear=r2_lin, r2_sublinear=r2_sub)
    if r2_lin >= r2_sub + REGIME_MARGIN and slope_lin < 0:
        return RateEstimate(LINEAR, q_hat=math.exp(slope_lin), fit_quality=r2_lin, **common)
    if r2_sub >= r2_lin + REGIME_MARGIN and slope_sub < 0:
        theta = min(0.5 * (1.0 - 1.0 / slope_sub), THETA_MAX)
        return RateEstimate(SUBLINEAR, theta_hat=theta, fit_quality=r2_sub, **common)
    return RateEstimate(UNDETERMINED, fit_quality=max(r2_lin, r2_sub), **common)


class RecurrenceCheck(NamedTuple):
    ok: bool
    worst_slack: float
    empirical_c10: float


def check_recurrence(gaps, theta, c10, warmup=0.0) -> RecurrenceCheck:
    """Check ``gap_{n-1} - gap_n >= c10 * gap_n^(2 theta)`` on the tail window.

    Only pairs with ``gap_n > 0`` constrain anything. ``empirical_c10`` is
    the largest constant for which the recurrence holds (``inf`` when no
    pair constrains it).
    """
    if not 0 <= theta < 1:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    if not c10 > 0:
        raise ValueError("c10 must be positive")
    if isinstance(gaps, Gaps):
        gaps = gaps.gaps
    g = np.asarray(gaps, dtype=float)
    g = g[int(math.floor(warmup * g.size)):]
    prev, cur = g[:-1], g[1:]
    active = cur > 0
    if not np.any(active):
        return RecurrenceCheck(True, 0.0, math.inf)
    drop = (prev - cur)[active]
    power = cur[active] ** (2.0 * theta)
    slack = drop - c10 * power
    tol = 1e-9 * float(np.max(np.abs(g)))
    worst = float(slack.min())
    return RecurrenceCheck(worst >= -tol, worst, float(np.min(drop / power)))


def _theta_for(rate: RateEstimate) -> float:
    if rate.regime == SUBLINEAR:
        return rate.theta_hat
    if rate.regime == FINITE_TIME:
        return 0.0
    # linear or undetermined: the exponent 1/2 is the boundary case both share
    return 0.5


def estimate_lojasiewicz_constant(gaps: Gaps, subgrad_norms, theta) -> float:
    """Smallest ``C_L`` with ``gap_n^theta <= C_L * subgrad_norm_n`` on the window."""
    idx = gaps.n.astype(int) - 1
    d = np.asarray(subgrad_norms, dtype=float)[idx]
    e = gaps.gaps
    ok = (d > 0) & (e > 0)
    if not np.any(ok):
        return math.nan
    return float(np.max(e[ok] ** theta / d[ok]))


@dataclass
class IterateRateReport:
    ok: bool
    worst_ratio: float
    theta: float
    lojasiewicz_constant: float
    checked: int

    def to_dict(self):
        return asdict(self)


def iterate_rate_check(trace: IterationTrace, rate: RateEstimate, constants: DerivedConstants,
                       lojasiewicz_constant=None, psi_star=None) -> IterateRateReport:
    """Check ``||v_n - v_N|| <= C * max(sqrt(gap_n), phi(gap_n))`` for each block.

    ``v`` runs over ``x``, ``y``, ``u`` with ``C = C11`` and over ``z`` with
    ``C = C12``; the final iterate stands in for the limit and
    ``phi(s) = C_L s^(1 - theta) / (1 - theta)``. ``C_L`` is estimated from
    the trace when not supplied. Indices whose gap fell below the noise
    floor are skipped.

    Raises
    ------
    NotConverged
        When the trace did not converge or holds no states.
    """
    if not trace.converged:
        raise NotConverged(f"iterate rate check needs a converged run, status is {trace.status!r}")
    if not trace.states:
        raise NotConverged("iterate rate check needs the iterates; run with keep_states=True")
    theta = _theta_for(rate)
    gaps = psi_gaps(trace.column("psi"), psi_star=psi_star)
    c_l = lojasiewicz_constant
    if c_l is None:
        c_l = estimate_lojasiewicz_constant(gaps, trace.column("subgrad_norm"), theta)
    final = trace.states[-1]
    worst = 0.0
    checked = 0
    start = int(math.floor(WARMUP_FRACTION * gaps.n.size))
    for n, e in zip(gaps.n[start:], gaps.gaps[start:]):
        if not e > 0:
            continue
        s = trace.states[int(n)]
        phi = c_l * e ** (1.0 - theta) / (1.0 - theta) if math.isfinite(c_l) else 0.0
        bound = max(math.sqrt(e), phi)
        for vec, lim, c in ((s.x, final.x, constants.c11), (s.y, final.y, constants.c11),
                            (s.u, final.u, constants.c11), (s.z, final.z, constants.c12)):
            lhs = float(np.linalg.norm(vec - lim))
            if lhs > 0:
                worst = max(worst, lhs / (c * bound))
        checked += 1
    return IterateRateReport(worst <= 1.0, worst, theta, c_l, checked)


# ---------------------------------------------------------------------------
# aggregate report


@dataclass
class DiagnosticsReport:
    descent_ok: bool
    descent_worst_violation: float
    subgrad_bound_ok: bool
    subgrad_worst_slack: float
    psi_lower_ok: Optional[bool] = None
    feasibility_identity_ok: Optional[bool] = None
    recurrence_c10: Optional[float] = None
    rate: Optional[RateEstimate] = None
    rate_note: str = ""
    limit_point: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.descent_ok and self.subgrad_bound_ok

    def to_dict(self):
        out = asdict(self)
        out["rate"] = self.rate.to_dict() if self.rate else None
        out["passed"] = self.passed
        return out

    def summary(self) -> str:
        yes = {True: "ok", False: "FAILED", None: "skipped"}
        lines = [
            f"descent inequality:    {yes[self.descent_ok]} (worst violation {self.descent_worst_violation:.3e})",
            f"subgradient bound:     {yes[self.subgrad_bound_ok]} (worst slack {self.subgrad_worst_slack:.3e})",
            f"Psi lower bound:       {yes[self.psi_lower_ok]}",
            f"feasibility identity:  {yes[self.feasibility_identity_ok]}",
            f"rate:                  {self.rate.describe() if self.rate else self.rate_note}",
        ]
        if self.recurrence_c10 is not None:
            lines.append(f"empirical C10:         {self.recurrence_c10:.6g}")
        if self.limit_point:
            kkt = self.limit_point.get("kkt", {})
            lines.append("final KKT residuals:   " + ", ".join(f"{k}={v:.3e}" for k, v in kkt.items()))
        return "\n".join(lines)


def diagnose(trace: IterationTrace, constants: DerivedConstants, psi_star=None,
             psi_lower_hint=None) -> DiagnosticsReport:
    """Run every trace-level check and fit the rate."""
    descent_ok, descent_worst = check_descent(trace, constants)
    sub_ok, sub_worst = check_subgradient_bound(trace, constants)
    report = DiagnosticsReport(descent_ok, descent_worst, sub_ok, sub_worst)

    psi = trace.column("psi")
    hint = psi_lower_hint if psi_lower_hint is not None else constants.psi_lower_bound_hint
    if hint is not None and psi.size > 1:
        # the lower bound is guaranteed from the second iterate on
        report.psi_lower_ok = bool(np.min(psi[1:]) >= hint - DESCENT_RTOL * (1.0 + abs(hint)))
    if trace.params is not None:
        report.feasibility_identity_ok = check_feasibility_identity(trace, trace.params)[0]

    gaps = psi_gaps(psi, psi_star=psi_star)
    try:
        report.rate = estimate_rate(gaps)
    except TooShort as exc:
        report.rate_note = f"rate not estimated: {exc}"
    if report.rate is not None and report.rate.regime in (LINEAR, SUBLINEAR):
        theta = _theta_for(report.rate)
        start = int(math.floor(WARMUP_FRACTION * gaps.gaps.size))
        check = check_recurrence(gaps.gaps[start:], theta, 1.0)
        if math.isfinite(check.empirical_c10):
            report.recurrence_c10 = check.empirical_c10

    last = trace.records[-1]
    report.limit_point = {
        "n": last.n,
        "psi": last.psi,
        "objective": last.objective,
        "kkt": dict(zip(("grad_x", "y", "z", "feas"), last.kkt)),
    }
    if trace.final_state is not None:
        s = trace.final_state
        report.limit_point.update(x=s.x.tolist(), y=s.y.tolist(), z=s.z.tolist(), u=s.u.tolist())
    return report
