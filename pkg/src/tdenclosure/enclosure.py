"""Enclosure-method analysis: distance, curvature and gamma recovery.

All operations work on sampled indicator curves (tau_i, I(tau_i)) and are
agnostic to which solver produced them.  The large-tau model behind the
fits is

    tau^4 * exp(2*tau*dist) * I(tau) -> C,
    C = (pi/2) (eta/d)^2 * sum_q hess_det(q)^{-1/2} * (1-gamma(q))/(1+gamma(q)),

with the probe-shape factor phi(tau*eta)^2 approaching (tau*eta*e^{tau*eta}/2)^2
at rate 1/tau.  When the probe is known that factor is divided out before
fitting, which removes a 1/tau coefficient of size 2/eta and greatly
accelerates the extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import phi
from .geometry import Probe


class AnalysisError(ValueError):
    pass


class WindowError(AnalysisError):
    """The requested tau window is unusable (sign change, too few samples)."""


class SingularSystemError(AnalysisError):
    """The three-ball linear system is numerically singular."""


@dataclass
class IndicatorCurve:
    """Ordered indicator samples with provenance metadata."""

    taus: np.ndarray
    values: np.ndarray
    provenance: str = "oracle"  # oracle | bem | tdwave
    probe: Probe | None = None
    known_dist: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.taus.ndim != 1 or self.taus.shape != self.values.shape:
            raise AnalysisError("taus and values must be matching 1-D arrays")
        if not np.all(np.diff(self.taus) > 0):
            raise AnalysisError("taus must be strictly increasing")

    def window(self, lo: float | None = None, hi: float | None = None):
        """Sample mask for a tau window; default = top half of the range."""
        if lo is None:
            lo = 0.5 * (self.taus[0] + self.taus[-1])
        if hi is None:
            hi = self.taus[-1]
        m = (self.taus >= lo) & (self.taus <= hi)
        return m


@dataclass
class RecoveryResult:
    dist: float | None = None
    sign: int | None = None
    coefficient: float | None = None
    coefficient_last_sample: float | None = None
    H: float | None = None
    K: float | None = None
    A: float | None = None
    gamma: float | None = None
    discriminant: float | None = None
    residual: float | None = None
    tau_window: tuple[float, float] | None = None
    warnings: list[str] = field(default_factory=list)


def _phi_hat_sq(taus, probe: Probe | None):
    """Known probe-shape factor (phi(s)/(s e^s/2))^2, or 1 when unknown."""
    if probe is None:
        return np.ones_like(np.asarray(taus, dtype=float))
    s = np.asarray(taus, dtype=float) * probe.radius
    return (phi(s) / (s * np.exp(s) / 2.0)) ** 2


def fit_distance(
    curve: IndicatorCurve,
    window: tuple[float | None, float | None] = (None, None),
) -> tuple[float, float, np.ndarray]:
    """dist(D,B) from the exponential decay rate of the indicator.

    Regresses log|I| + 4*log(tau) (minus the known probe factor when the
    curve carries its probe) against tau; returns (dist_hat, fit_residual,
    per-sample sequence -log|I|/(2 tau) for convergence display).
    """
    m = curve.window(*window)
    taus = curve.taus[m]
    vals = curve.values[m]
    if len(taus) < 4:
        raise WindowError("need at least 4 samples in the fit window")
    if np.any(vals == 0):
        raise WindowError("zero indicator sample inside the fit window")
    if not (np.all(vals > 0) or np.all(vals < 0)):
        raise WindowError("indicator changes sign inside the fit window")
    y = np.log(np.abs(vals)) + 4.0 * np.log(taus) - np.log(_phi_hat_sq(taus, curve.probe))
    A = np.column_stack([np.ones_like(taus), taus])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    display = -np.log(np.abs(curve.values)) / (2.0 * curve.taus)
    return float(-coef[1] / 2.0), resid, display


def classify_sign(curve: IndicatorCurve) -> int:
    """+1 for the gamma < 1 regime, -1 for gamma > 1, 0 when indeterminate.

    Uses the top quartile of the tau schedule; mixed signs (or a collapsed
    indicator) are reported as 0, never guessed.
    """
    n = len(curve.taus)
    top = curve.values[-max(1, n // 4):]
    if np.all(top > 0):
        return +1
    if np.all(top < 0):
        return -1
    return 0


def fit_leading_coefficient(
    curve: IndicatorCurve,
    dist: float,
    window: tuple[float | None, float | None] = (None, None),
    correction_order: int = 1,
) -> tuple[float, float, float]:
    """Limit of tau^4 exp(2 tau dist) I(tau) by 1/tau-corrected extrapolation.

    Fits y(tau) = C * (1 + c1/tau + ... ) as a linear LS problem in powers
    of 1/tau.  Returns (C, last_sample_value, fit_residual).  The pure-limit
    last-sample value is reported alongside since the correction model is an
    extrapolation device, not a proven expansion.
    """
    m = curve.window(*window)
    taus = curve.taus[m]
    vals = curve.values[m]
    if len(taus) < correction_order + 2:
        raise WindowError("too few samples for the requested correction order")
    if not (np.all(vals > 0) or np.all(vals < 0)):
        raise WindowError("indicator changes sign inside the fit window")
    y = taus**4 * np.exp(2.0 * taus * dist) * vals / _phi_hat_sq(taus, curve.probe)
    X = np.vander(1.0 / taus, correction_order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)) / np.abs(coef[0]))
    return float(coef[0]), float(y[-1]), resid


def gamma_from_curvature(C: float, d: float, eta: float, H: float, K: float):
    """Recover gamma at the (single) reflector from the fitted coefficient.

    A = C / [(pi/2) (eta/d)^2 hess_det^{-1/2}];  gamma = (1-A)/(1+A).
    Returns (gamma_hat, A).
    """
    hess = 1.0 / d**2 - 2.0 * H / d + K
    if not hess > 0:
        raise AnalysisError("degenerate reflector: hess_det <= 0")
    A = C / ((np.pi / 2.0) * (eta / d) ** 2 / np.sqrt(hess))
    if abs(A) >= 1.0:
        raise AnalysisError(
            f"|A| = {abs(A):.3g} >= 1 is inconsistent with gamma >= 0"
        )
    return (1.0 - A) / (1.0 + A), A


def calibrated_coefficient(C: float, d: float, eta: float) -> float:
    """F_j of the three-ball system: (2/pi)(d/eta)^2 times the fitted limit."""
    return (2.0 / np.pi) * (d / eta) ** 2 * C


def three_ball_recover(
    F: np.ndarray,
    lam: np.ndarray,
    sign: int,
    discriminant_floor: float = 1e-6,
) -> RecoveryResult:
    """Solve the three-probe system for (H, K) and then gamma.

    F are the calibrated coefficients, lam the inverse probe distances,
    sign the regime from classify_sign (+1: gamma < 1, -1: gamma > 1).
    """
    F = np.asarray(F, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if F.shape != (3,) or lam.shape != (3,):
        raise AnalysisError("need exactly three calibrated coefficients")
    if len(np.unique(lam)) != 3:
        raise SingularSystemError("probe distances must be distinct")
    if sign not in (-1, +1):
        raise AnalysisError("sign must be +1 or -1 (from classify_sign)")
    if not (np.all(F > 0) or np.all(F < 0)):
        raise AnalysisError("calibrated coefficients must share the given sign")
    F2 = F * F
    mat = np.array(
        [
            [-(lam[0] * F2[0] - lam[1] * F2[1]), F2[0] - F2[1]],
            [-(lam[1] * F2[1] - lam[2] * F2[2]), F2[1] - F2[2]],
        ]
    )
    M = (
        (lam[2] - lam[1]) * F2[2] * F2[1]
        + (lam[1] - lam[0]) * F2[1] * F2[0]
        + (lam[0] - lam[2]) * F2[0] * F2[2]
    )
    scale = float(np.max(np.abs(F2[:, None] * F2[None, :])) * np.max(np.abs(lam)))
    warnings = []
    if abs(M) < 1e-14 * scale:
        raise SingularSystemError(f"discriminant M = {M:.3g} below absolute floor")
    if abs(M) < discriminant_floor * scale:
        warnings.append(
            f"discriminant M = {M:.3g} is small relative to the system scale "
            f"{scale:.3g}; H/K estimates are ill-conditioned"
        )
    rhs = np.array(
        [F2[1] * lam[1] ** 2 - F2[0] * lam[0] ** 2,
         F2[2] * lam[2] ** 2 - F2[1] * lam[1] ** 2]
    )
    twoH, K = np.linalg.solve(mat, rhs)
    H = twoH / 2.0
    A2 = float(np.mean(F2 * (lam**2 - 2.0 * H * lam + K)))
    if A2 < 0:
        raise AnalysisError("A^2 < 0: inconsistent three-ball data")
    A = sign * np.sqrt(A2)
    gamma = (1.0 - A) / (1.0 + A)
    return RecoveryResult(
        H=float(H), K=float(K), A=float(A), gamma=float(gamma),
        discriminant=float(M), sign=sign, warnings=warnings,
    )


def ratio_indicator(
    curve1: IndicatorCurve,
    curve0: IndicatorCurve,
    window: tuple[float | None, float | None] = (None, None),
) -> tuple[float, float]:
    """Large-tau limit of I(tau; gamma1) / I(tau; gamma0).

    Fits rho * (1 + c/tau) over the window; returns (rho, fit_residual).
    """
    if len(curve1.taus) != len(curve0.taus) or not np.allclose(
        curve1.taus, curve0.taus
    ):
        raise AnalysisError("curves must share the same tau schedule")
    m = curve1.window(*window)
    taus = curve1.taus[m]
    den = curve0.values[m]
    num = curve1.values[m]
    if not (np.all(den > 0) or np.all(den < 0)):
        raise WindowError("denominator indicator changes sign inside the window")
    r = num / den
    X = np.column_stack([np.ones_like(taus), 1.0 / taus])
    coef, *_ = np.linalg.lstsq(X, r, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - r) ** 2)))
    return float(coef[0]), resid


def probe_direction_scan(
    indicator_runner,
    p,
    directions,
    s: float,
    d_full: float,
    eta: float,
    tol: float = 0.02,
):
    """Boundary membership test of p + d_full*omega for each direction omega.

    ``indicator_runner(probe)`` must return an IndicatorCurve for a probe
    ball placed at the offset point.  For each direction the probe moves to
    p + s*omega and the fitted distance is compared against d_full - s - eta.
    Returns a list of dicts with the per-direction decision.
    """
    if not 0.0 < s < d_full:
        raise AnalysisError("offset s must lie in (0, d_full)")
    p = np.asarray(p, dtype=float)
    out = []
    for omega in np.atleast_2d(np.asarray(directions, dtype=float)):
        omega = omega / np.linalg.norm(omega)
        probe = Probe(center=p + s * omega, radius=eta)
        curve = indicator_runner(probe)
        dist_hat, resid, _ = fit_distance(curve)
        member = abs((dist_hat + s + eta) - d_full) <= tol * d_full
        out.append(
            {
                "direction": omega,
                "dist_hat": dist_hat,
                "residual": resid,
                "member": bool(member),
            }
        )
    return out
