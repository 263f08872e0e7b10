"""Step-size admissibility, parameter selection and the analysis constants.

All formulas use the single Lipschitz constant ``L`` of the joint gradient
of H, with the per-block constants set to ``ell = L * sqrt(2)``.

Naming: ``lam`` is ``lambda_min(A A^T)``, ``kappa`` the condition number of
``A A^T``, ``norm`` is ``||A||`` and ``nu = ell / lam``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import EmptyInterval
from .linop import Spectrum

__all__ = [
    "SolverParams",
    "DerivedConstants",
    "AdmissibilityReport",
    "derive_constants",
    "select_parameters",
    "validate",
    "tau_interval",
    "beta_lower_bound",
    "mu_lower_bound",
    "discriminant",
]

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class SolverParams:
    """Step parameters ``(mu, beta, tau, sigma)`` of the iteration."""

    mu: float
    beta: float
    tau: float
    sigma: float

    def __post_init__(self):
        for name in ("mu", "beta", "tau"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if not 0 < self.sigma <= 1:
            raise ValueError(f"sigma must lie in (0, 1], got {self.sigma}")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DerivedConstants:
    ell_plus: float
    nu: float
    delta_tau_prime: float
    c0: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float
    c9: float
    c10: Optional[float]
    c11: float
    c12: float
    gamma1_exists: bool
    gamma2_exists: bool
    lojasiewicz_constant: Optional[float] = None
    psi_lower_bound_hint: Optional[float] = None

    @property
    def descent_margin(self) -> float:
        return min(self.c2, self.c3, self.c4)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in names})


def _spectrum(op_spec) -> Spectrum:
    if isinstance(op_spec, Spectrum):
        return op_spec
    if hasattr(op_spec, "spectrum"):
        return op_spec.spectrum
    return Spectrum(*op_spec)


def discriminant(nu, beta, sigma, kappa):
    """Reduced discriminant of the quadratic in tau whose negativity gives C2 > 0."""
    return 1.0 - 32.0 * nu / beta - 128.0 * nu**2 / beta**2 - 24.0 * nu * sigma / beta - 24.0 * sigma * kappa


def derive_constants(op_spec, L, params: SolverParams, lojasiewicz_constant=None,
                     psi_lower_bound_hint=None) -> DerivedConstants:
    """Evaluate every constant of the descent and subgradient estimates.

    Values are substituted directly; negative ``c2``/``c3`` are returned as
    such and flagged by :func:`validate`.
    """
    norm, lam, kappa = _spectrum(op_spec)
    mu, beta, tau, sigma = params.mu, params.beta, params.tau, params.sigma
    ell = L * SQRT2
    nu = ell / lam
    sbl = sigma * beta * lam

    c0 = 4.0 * (1.0 - sigma) / (sigma**2 * beta * lam)
    c1 = 8.0 * (sigma * tau + ell) ** 2 / sbl
    c2 = tau - (ell + beta * norm**2) / 2.0 - 4.0 * sigma * tau**2 / (beta * lam) - c1
    c3 = (mu - ell) / 2.0 - 16.0 * L**2 / sbl
    c4 = 1.0 / (sigma * beta)
    c5 = (2.0 * SQRT2 * L + tau + beta * norm
          + 4.0 * (sigma * tau + norm) * sigma * tau * c0 + 4.0 * c1)
    c6 = ell + mu
    c7 = 1.0 + 1.0 / (sigma * beta) + (2.0 / sigma - 1.0) * norm + 4.0 * (sigma * tau + norm) * c0 * norm

    margin = min(c2, c3, c4)
    c8 = 1.0 / margin if margin != 0 else math.inf
    c9 = max(c5, c6, c7)
    c10 = None
    if lojasiewicz_constant is not None:
        c10 = c8 / (3.0 * (lojasiewicz_constant * c9) ** 2)
    c11 = 2.0 * math.sqrt(3.0 * c8) + 3.0 * c8 * c9 if c8 >= 0 else math.nan
    c12 = (norm + 2.0 / (sigma * beta)) * c11

    return DerivedConstants(
        ell_plus=ell,
        nu=nu,
        delta_tau_prime=discriminant(nu, beta, sigma, kappa),
        c0=c0, c1=c1, c2=c2, c3=c3, c4=c4, c5=c5, c6=c6, c7=c7,
        c8=c8, c9=c9, c10=c10, c11=c11, c12=c12,
        gamma1_exists=beta * lam >= 2.0 * ell,
        gamma2_exists=beta * lam >= 4.0 * ell,
        lojasiewicz_constant=lojasiewicz_constant,
        psi_lower_bound_hint=psi_lower_bound_hint,
    )


def beta_lower_bound(nu, sigma, kappa):
    """Lower bound on beta making the tau-discriminant positive (needs 24*sigma*kappa < 1)."""
    root = math.sqrt(24.0 + 24.0 * sigma + 9.0 * sigma**2 - 192.0 * sigma * kappa)
    return 4.0 * nu / (1.0 - 24.0 * sigma * kappa) * (4.0 + 3.0 * sigma + root)


def tau_interval(op_spec, L, beta, sigma):
    """Open interval of tau values with C2 > 0 and 2*tau >= beta*||A||^2.

    Returns ``(lo, hi)``; ``lo >= hi`` when the interval is empty.
    """
    norm, lam, kappa = _spectrum(op_spec)
    nu = L * SQRT2 / lam
    disc = discriminant(nu, beta, sigma, kappa)
    if disc <= 0:
        return math.inf, -math.inf
    scale = beta * lam / (24.0 * sigma)
    centre = 1.0 - 16.0 * nu / beta
    root = math.sqrt(disc)
    return max(beta * norm**2 / 2.0, scale * (centre - root)), scale * (centre + root)


def mu_lower_bound(op_spec, L, beta, sigma):
    _, lam, _ = _spectrum(op_spec)
    ell = L * SQRT2
    return ell + 16.0 * ell**2 / (sigma * beta * lam)


def select_parameters(op_spec, L, safety=0.5) -> SolverParams:
    """Pick an interior point of the admissible parameter region.

    ``sigma`` sits at ``safety`` times its bound, ``beta`` and ``mu`` at
    ``1 + safety`` times theirs, and ``tau`` at the midpoint of its interval.
    """
    if not 0 < safety < 1:
        raise ValueError(f"safety must lie in (0, 1), got {safety}")
    if not L > 0:
        raise ValueError(f"Lipschitz constant must be positive, got {L}")
    spec = _spectrum(op_spec)
    norm, lam, kappa = spec
    if not lam > 0:
        raise ValueError("parameter selection needs lambda_min(AA^T) > 0")
    nu = L * SQRT2 / lam
    sigma = safety / (24.0 * kappa)
    beta = (1.0 + safety) * beta_lower_bound(nu, sigma, kappa)
    lo, hi = tau_interval(spec, L, beta, sigma)
    if not lo < hi:
        raise EmptyInterval(f"tau interval ({lo}, {hi}) is empty at sigma={sigma}, beta={beta}")
    tau = 0.5 * (lo + hi)
    mu = (1.0 + safety) * mu_lower_bound(spec, L, beta, sigma)
    return SolverParams(mu=mu, beta=beta, tau=tau, sigma=sigma)


@dataclass
class AdmissibilityReport:
    """Pass/fail per check.

    ``checks`` holds the assumption-level conditions the convergence theory
    uses; ``sufficient_region`` holds the closed-form parameter region that
    implies them.
    """

    checks: dict = field(default_factory=dict)
    sufficient_region: dict = field(default_factory=dict)
    boundedness: dict = field(default_factory=dict)

    @property
    def admissible(self) -> bool:
        return all(self.checks.values())

    @property
    def in_sufficient_region(self) -> bool:
        return all(self.sufficient_region.values())

    def failures(self):
        return [name for name, ok in self.checks.items() if not ok]

    def to_dict(self):
        return {
            "admissible": self.admissible,
            "checks": dict(self.checks),
            "in_sufficient_region": self.in_sufficient_region,
            "sufficient_region": dict(self.sufficient_region),
            "boundedness": dict(self.boundedness),
        }


def validate(params: SolverParams, constants: DerivedConstants, op_spec) -> AdmissibilityReport:
    norm, lam, kappa = _spectrum(op_spec)
    mu, beta, tau, sigma = params.mu, params.beta, params.tau, params.sigma
    L = constants.ell_plus / SQRT2
    report = AdmissibilityReport()
    report.checks = {
        "sigma_in_(0,1]": 0 < sigma <= 1,
        "2tau>=beta*normA^2": 2.0 * tau >= beta * norm**2,
        "c2>0": constants.c2 > 0,
        "c3>0": constants.c3 > 0,
        "c4>0": constants.c4 > 0,
    }
    region = {"sigma<1/(24kappa)": sigma < 1.0 / (24.0 * kappa)}
    if region["sigma<1/(24kappa)"]:
        region["beta>lower_bound"] = beta > beta_lower_bound(constants.nu, sigma, kappa)
        region["delta_tau_prime>0"] = constants.delta_tau_prime > 0
        lo, hi = tau_interval((norm, lam, kappa), L, beta, sigma)
        region["tau_in_interval"] = lo < tau < hi
    else:
        region["beta>lower_bound"] = False
        region["delta_tau_prime>0"] = constants.delta_tau_prime > 0
        region["tau_in_interval"] = False
    region["mu>lower_bound"] = mu > mu_lower_bound((norm, lam, kappa), L, beta, sigma)
    report.sufficient_region = region
    report.boundedness = {
        "gamma1_exists": constants.gamma1_exists,
        "gamma2_exists": constants.gamma2_exists,
    }
    return report
