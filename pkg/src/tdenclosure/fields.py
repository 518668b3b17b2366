"""Closed-form probe field for the damped potential equation.

The probe ball B (center p, radius eta) generates the field v solving
(lap - tau^2) v + chi_B = 0 on all of 3-space.  Outside B,

    v(x) = phi(tau*eta)/tau^3 * exp(-tau*|x-p|)/|x-p|,
    phi(xi) = xi*cosh(xi) - sinh(xi).

Inside B the radial solution matching value and flux at |x-p| = eta is

    v(r) = (1/tau^2) * [1 - (1+tau*eta)*exp(-tau*eta) * sinh(tau*r)/(tau*r)].
"""

from __future__ import annotations

import numpy as np

from .geometry import Probe

# Below this argument the direct formulas cancel; switch to series.
SERIES_CROSSOVER = 1e-2


def phi(xi):
    """xi*cosh(xi) - sinh(xi), cancellation-safe for small xi."""
    xi = np.asarray(xi, dtype=float)
    small = xi < SERIES_CROSSOVER
    out = np.where(small, _phi_series(xi), _phi_direct(np.where(small, 1.0, xi)))
    return out if out.ndim else float(out)


def _phi_direct(xi):
    return xi * np.cosh(xi) - np.sinh(xi)


def _phi_series(xi):
    # xi^3/3 + xi^5/30 + xi^7/840 + xi^9/45360
    x2 = xi * xi
    return xi * x2 * (1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 * (1.0 / 840.0 + x2 / 45360.0)))


def sinhc(z):
    """sinh(z)/z with series evaluation for small z."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SERIES_CROSSOVER
    z2 = z * z
    series = 1.0 + z2 * (1.0 / 6.0 + z2 * (1.0 / 120.0 + z2 / 5040.0))
    safe = np.where(small, 1.0, z)
    return np.where(small, series, np.sinh(safe) / safe)


def v_eval(x, tau: float, probe: Probe):
    """The probe field v at point(s) x; both branches, continuous at r = eta."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(x - probe.center, axis=1)
    eta = probe.radius
    s = tau * eta
    exterior = phi(s) / tau**3 * np.exp(-tau * np.maximum(r, eta)) / np.maximum(r, eta)
    interior = (1.0 - (1.0 + s) * np.exp(-s) * sinhc(tau * r)) / tau**2
    out = np.where(r >= eta, exterior, interior)
    return out if len(out) > 1 else float(out[0])


def v_gradient(x, tau: float, probe: Probe):
    """Gradient of the exterior branch of v (defined for |x-p| >= eta)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rel = x - probe.center
    r = np.linalg.norm(rel, axis=1)
    v = phi(tau * probe.radius) / tau**3 * np.exp(-tau * r) / r
    grad = -(tau + 1.0 / r)[:, None] * (rel / r[:, None]) * v[:, None]
    return grad if len(grad) > 1 else grad[0]


def v_normal_derivative(x, nu, tau: float, probe: Probe):
    """dv/dnu = (tau + 1/|x-p|) * ((p-x)/|x-p|) . nu * v, exterior branch."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    rel = probe.center - x
    r = np.linalg.norm(rel, axis=1)
    cosang = np.einsum("ij,ij->i", rel / r[:, None], nu)
    v = phi(tau * probe.radius) / tau**3 * np.exp(-tau * r) / r
    out = (tau + 1.0 / r) * cosang * v
    return out if len(out) > 1 else float(out[0])


def robin_trace(x, nu, tau: float, gamma, probe: Probe):
    """dv/dnu - tau * gamma * v at surface point(s) x with normal(s) nu."""
    return v_normal_derivative(x, nu, tau, probe) - tau * np.asarray(gamma) * v_eval(
        x, tau, probe
    )


def ball_average_identity(h, tau: float, probe: Probe) -> float:
    """integral over B of h, for h solving (lap - tau^2) h = 0 near closure(B).

    Mean-value identity: the integral equals 4*pi*phi(tau*eta)/tau^3 * h(p).
    ``h`` is a callable taking a 3-point.
    """
    return 4.0 * np.pi * phi(tau * probe.radius) / tau**3 * float(h(probe.center))


def v_ball_integral(tau: float, probe: Probe) -> float:
    """Closed form of integral over B of v.

    Radial integration of the interior branch:
        int_B v = (4 pi / tau^2) * [eta^3/3 - (1+s) e^{-s} phi(s)/tau^3],
    s = tau*eta.
    """
    eta = probe.radius
    s = tau * eta
    return (
        4.0
        * np.pi
        / tau**2
        * (eta**3 / 3.0 - (1.0 + s) * np.exp(-s) * phi(s) / tau**3)
    )
