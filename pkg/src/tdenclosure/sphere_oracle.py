"""High-precision series solution of the exterior Robin problem on a sphere.

For a spherical obstacle with constant dissipation coefficient gamma the
probe field v separates in spherical coordinates centered on the sphere,
with axis along the probe direction:

    exp(-tau*|x-p|)/|x-p| = (2 tau / pi) * sum_n (2n+1)
        i_n(tau r_<) k_n(tau r_>) P_n(cos theta),

where i_n, k_n are the modified spherical Bessel functions of the first and
second kind.  The reflected field R = w - v is a pure k_n series whose
coefficients follow degree-by-degree from the Robin condition at r = a.
All radial factors are handled in exponentially scaled form
(e^{-z} i_n, e^{+z} k_n) so the solver stays finite up to tau*r of a few
hundred.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import phi
from .geometry import GeometryError, Probe


class ConvergenceError(RuntimeError):
    """The modal series failed to converge within the degree budget."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SphereScenario:
    """Sphere obstacle (center c, radius a), constant gamma, probe, tau."""

    a: float
    c: np.ndarray
    gamma: float
    probe: Probe
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        if not self.a > 0:
            raise GeometryError("sphere radius must be positive")
        if self.gamma < 0:
            raise GeometryError("gamma must be nonnegative")
        if not self.tau > 0:
            raise GeometryError("tau must be positive")
        if self.r_p <= self.a + self.probe.radius:
            raise GeometryError("probe closure must be disjoint from the obstacle")

    @property
    def r_p(self) -> float:
        return float(np.linalg.norm(self.probe.center - self.c))

    @property
    def dist(self) -> float:
        """dist(D, B) = d_{dD}(p) - eta."""
        return self.r_p - self.a - self.probe.radius

    @property
    def axis(self) -> np.ndarray:
        return (self.probe.center - self.c) / self.r_p


@dataclass
class ModalCoefficients:
    """Scaled modal data for the source and reflected fields.

    source_hat[n] = (2n+1) * khat_n(tau*r_p): degree-n source radial factor
    with its i_n(tau*r) part left out (applied at evaluation).
    reflected_hat[n] = scaled reflected coefficient; the physical
    coefficient is c_n = pref * reflected_hat[n] * exp(2*tau*a - tau*r_p).
    """

    scenario: SphereScenario
    degree: int
    source_hat: np.ndarray
    reflected_hat: np.ndarray
    tail_estimate: float


def bessel_i_k(n: int, z: float) -> tuple[float, float]:
    """Modified spherical Bessel i_n(z) and k_n(z) (k_0 = (pi/2) e^{-z}/z)."""
    ih, kh = bessel_i_k_scaled(n, z)
    return float(ih[n] * np.exp(z)), float(kh[n] * np.exp(-z))


def bessel_i_k_scaled(nmax: int, z: float) -> tuple[np.ndarray, np.ndarray]:
    """Scaled tables e^{-z} i_n(z) and e^{+z} k_n(z) for n = 0..nmax.

    i_n by downward (Miller) recurrence normalized at n = 0; k_n by upward
    recurrence.  Both directions are the numerically stable ones.
    """
    if not z > 0:
        raise ValueError("z must be positive")
    if nmax < 0:
        raise ValueError("nmax must be nonnegative")
    # Downward recurrence for i_n with headroom above nmax.
    start = nmax + 30 + int(2.0 * np.sqrt((nmax + 1) * max(z, 1.0)))
    fp = 0.0
    fc = 1e-280
    ih = np.zeros(nmax + 2)
    for n in range(start, -1, -1):
        fm = fp + (2 * n + 3) / z * fc
        if n <= nmax + 1:
            ih[n] = fm
        fp, fc = fc, fm
        if abs(fc) > 1e200:
            fp *= 1e-200
            fc *= 1e-200
            ih *= 1e-200
    # ihat_0 = e^{-z} sinh(z)/z = (1 - e^{-2z})/(2z).
    i0 = (1.0 - np.exp(-2.0 * z)) / (2.0 * z)
    ih *= i0 / ih[0]

    kh = np.zeros(nmax + 2)
    kh[0] = (np.pi / 2.0) / z
    if nmax + 1 >= 1:
        kh[1] = (np.pi / 2.0) * (z + 1.0) / z**2
    for n in range(1, nmax + 1):
        kh[n + 1] = kh[n - 1] + (2 * n + 1) / z * kh[n]
        if kh[n + 1] > 1e290:
            raise OverflowError("scaled k_n overflow; reduce degree or raise z")
    return ih[: nmax + 2], kh[: nmax + 2]


def wronskian_residual(nmax: int, z: float) -> np.ndarray:
    """Relative residual of i_n k_n' - i_n' k_n = -pi/(2 z^2) for n<=nmax."""
    ih, kh = bessel_i_k_scaled(nmax + 1, z)
    n = np.arange(nmax + 1)
    # Scaled derivative pieces: e^{-z} i_n' = (n/z) ih_n + ih_{n+1},
    # e^{+z} k_n' = (n/z) kh_n - kh_{n+1}.
    ipr = n / z * ih[:-1][: nmax + 1] + ih[1 : nmax + 2]
    kpr = n / z * kh[: nmax + 1] - kh[1 : nmax + 2]
    w = ih[: nmax + 1] * kpr - ipr * kh[: nmax + 1]
    target = -np.pi / (2.0 * z**2)
    return np.abs(w - target) / np.abs(target)


def default_degree(tau: float, a: float) -> int:
    return max(40, int(np.ceil(1.5 * tau * a)) + 20)


def expand_source(scenario: SphereScenario, degree: int | None = None) -> ModalCoefficients:
    """Modal expansion of v about the sphere center (axis toward the probe)."""
    tau, a, r_p = scenario.tau, scenario.a, scenario.r_p
    N = degree if degree is not None else default_degree(tau, a)
    _, kh_p = bessel_i_k_scaled(N, tau * r_p)
    n = np.arange(N + 1)
    source_hat = (2 * n + 1) * kh_p[: N + 1]
    return ModalCoefficients(
        scenario=scenario,
        degree=N,
        source_hat=source_hat,
        reflected_hat=np.array([]),
        tail_estimate=np.nan,
    )


def eval_source_series(coeffs: ModalCoefficients, r, cos_theta):
    """Evaluate the truncated modal series of v at (r, theta), r < r_p."""
    sc = coeffs.scenario
    tau, r_p = sc.tau, sc.r_p
    N = coeffs.degree
    r = np.atleast_1d(np.asarray(r, dtype=float))
    cos_theta = np.atleast_1d(np.asarray(cos_theta, dtype=float))
    pref = phi(tau * sc.probe.radius) / tau**3 * (2.0 * tau / np.pi)
    out = np.zeros(len(r))
    for i, (ri, ct) in enumerate(zip(r, cos_theta)):
        ih, _ = bessel_i_k_scaled(N, tau * ri)
        terms = coeffs.source_hat * ih[: N + 1]
        pn = _legendre_all(N, ct)
        out[i] = pref * np.exp(tau * ri - tau * r_p) * float(terms @ pn)
    return out if len(out) > 1 else float(out[0])


def solve_reflected(
    scenario: SphereScenario,
    degree: int | None = None,
    tail_tol: float = 1e-13,
    max_degree: int = 4000,
) -> ModalCoefficients:
    """Reflected-field coefficients from the Robin condition at r = a.

    Per degree (z = tau*a, gamma constant):
        c_n * tau*(k_n'(z) - gamma k_n(z)) = -beta_n * tau*(i_n'(z) - gamma i_n(z)),
    beta_n = pref * (2n+1) k_n(tau r_p).  Stored scaled (see ModalCoefficients).
    """
    sc = scenario
    tau, a, gamma, r_p = sc.tau, sc.a, sc.gamma, sc.r_p
    N = degree if degree is not None else default_degree(tau, a)
    while True:
        z = tau * a
        ih, kh_a = bessel_i_k_scaled(N + 1, z)
        _, kh_p = bessel_i_k_scaled(N, tau * r_p)
        n = np.arange(N + 1)
        num_hat = n / z * ih[: N + 1] + ih[1 : N + 2] - gamma * ih[: N + 1]
        den_hat = n / z * kh_a[: N + 1] - kh_a[1 : N + 2] - gamma * kh_a[: N + 1]
        if np.any(den_hat == 0):
            raise SolverError("vanishing Robin denominator")
        reflected_hat = -(2 * n + 1) * kh_p[: N + 1] * num_hat / den_hat
        # Tail monitor on the quantity the indicator needs: the series for
        # R(p), whose degree-n term is reflected_hat[n] * khat_n(tau r_p).
        rp_terms = np.abs(reflected_hat * kh_p[: N + 1])
        total = rp_terms.sum()
        tail = rp_terms[-5:].sum()
        if total == 0 or tail <= tail_tol * total:
            return ModalCoefficients(
                scenario=sc,
                degree=N,
                source_hat=(2 * n + 1) * kh_p[: N + 1],
                reflected_hat=reflected_hat,
                tail_estimate=float(tail / max(total, np.finfo(float).tiny)),
            )
        if N >= max_degree:
            raise ConvergenceError(
                f"modal tail {tail/total:.2e} above {tail_tol:.1e} at degree {N}"
            )
        N = min(max_degree, 2 * N)


def eval_reflected(coeffs: ModalCoefficients, r, cos_theta):
    """Evaluate R at (r, theta) with r >= a; exponent-safe."""
    sc = coeffs.scenario
    tau, a, r_p = sc.tau, sc.a, sc.r_p
    N = coeffs.degree
    pref = phi(tau * sc.probe.radius) / tau**3 * (2.0 * tau / np.pi)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    cos_theta = np.atleast_1d(np.asarray(cos_theta, dtype=float))
    out = np.zeros(len(r))
    for i, (ri, ct) in enumerate(zip(r, cos_theta)):
        _, kh_r = bessel_i_k_scaled(N, tau * ri)
        terms = coeffs.reflected_hat * kh_r[: N + 1]
        pn = _legendre_all(N, ct)
        out[i] = pref * np.exp(-tau * (ri + r_p - 2.0 * a)) * float(terms @ pn)
    return out if len(out) > 1 else float(out[0])


def reflected_at_probe(coeffs: ModalCoefficients) -> float:
    """R(p): all Legendre polynomials are 1 on the axis."""
    sc = coeffs.scenario
    tau, a, r_p = sc.tau, sc.a, sc.r_p
    _, kh_p = bessel_i_k_scaled(coeffs.degree, tau * r_p)
    pref = phi(tau * sc.probe.radius) / tau**3 * (2.0 * tau / np.pi)
    s = float(coeffs.reflected_hat @ kh_p[: coeffs.degree + 1])
    return pref * np.exp(-2.0 * tau * (r_p - a)) * s


def robin_residual(coeffs: ModalCoefficients, n_check: int = 64) -> float:
    """Max relative residual of d_r(v+R) - tau*gamma*(v+R) on r = a."""
    sc = coeffs.scenario
    tau, a, gamma = sc.tau, sc.a, sc.gamma
    N = coeffs.degree
    z = tau * a
    ih, kh = bessel_i_k_scaled(N + 1, z)
    _, kh_p = bessel_i_k_scaled(N, tau * sc.r_p)
    n = np.arange(N + 1)
    pref = phi(tau * sc.probe.radius) / tau**3 * (2.0 * tau / np.pi)
    # Degree-n pieces of (d_r - tau*gamma) applied to v and R at r = a,
    # with the common factor pref*exp(-tau*(r_p - a)) divided out.
    v_piece = (2 * n + 1) * kh_p[: N + 1] * tau * (
        n / z * ih[: N + 1] + ih[1 : N + 2] - gamma * ih[: N + 1]
    )
    r_piece = coeffs.reflected_hat * tau * (
        n / z * kh[: N + 1] - kh[1 : N + 2] - gamma * kh[: N + 1]
    )
    ct = np.cos(np.linspace(0.0, np.pi, n_check))
    worst = 0.0
    for c in ct:
        pn = _legendre_all(N, c)
        num = abs(float((v_piece + r_piece) @ pn))
        den = max(abs(float(v_piece @ pn)), abs(float(r_piece @ pn)))
        if den > 0:
            worst = max(worst, num / den)
    return worst


def indicator_oracle(scenario: SphereScenario, degree: int | None = None) -> float:
    """I_B(tau) = 4 pi phi(tau eta)/tau^3 * R(p) (ball-average identity)."""
    coeffs = solve_reflected(scenario, degree=degree)
    rp = reflected_at_probe(coeffs)
    tau = scenario.tau
    return 4.0 * np.pi * phi(tau * scenario.probe.radius) / tau**3 * rp


def indicator_curve_oracle(a, c, gamma, probe: Probe, taus) -> np.ndarray:
    """Oracle indicator values over a tau schedule."""
    return np.array(
        [
            indicator_oracle(SphereScenario(a=a, c=c, gamma=gamma, probe=probe, tau=t))
            for t in np.asarray(taus, dtype=float)
        ]
    )


def _legendre_all(N: int, x: float) -> np.ndarray:
    """P_0(x) .. P_N(x) by the three-term recurrence."""
    p = np.zeros(N + 1)
    p[0] = 1.0
    if N >= 1:
        p[1] = x
    for n in range(1, N):
        p[n + 1] = ((2 * n + 1) * x * p[n] - n * p[n - 1]) / (n + 1)
    return p
