"""Numerical verification of the surface-integral asymptotics.

The boundary term J(tau), the energy remainder E(tau) = I(tau) - J(tau),
the stationary-phase (Laplace) limit of concentrated surface integrals,
and the lower/upper indicator bounds are all evaluated here by direct
surface quadrature, independently of the solvers that produce I(tau).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import robin_trace, v_eval
from .geometry import Obstacle, Probe, ReflectorPoint


class QuadratureError(ValueError):
    pass


@dataclass
class SurfaceQuadrature:
    """Nodes, outward normals, weights and gamma samples on the surface."""

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        n = len(self.points)
        if not (len(self.normals) == len(self.weights) == len(self.gamma) == n):
            raise QuadratureError("inconsistent quadrature arrays")
        if np.any(self.weights <= 0):
            raise QuadratureError("weights must be positive")

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def from_sphere(cls, center, radius, gamma, axis=None, n_theta=400, n_phi=None):
        """Gauss-Legendre in cos(theta) x uniform in phi on a sphere.

        GL nodes cluster at the poles; when ``axis`` is given the theta=0
        pole is rotated to face it, which concentrates nodes near the first
        reflector (the region the integrands peak in at large tau).
        For axisymmetric integrands n_phi stays modest.
        """
        center = np.asarray(center, dtype=float)
        if n_phi is None:
            n_phi = 16
        u, wu = np.polynomial.legendre.leggauss(n_theta)
        phi_ang = (np.arange(n_phi) + 0.5) * 2.0 * np.pi / n_phi
        wphi = 2.0 * np.pi / n_phi
        st = np.sqrt(1.0 - u**2)
        x = np.outer(st, np.cos(phi_ang)).ravel()
        y = np.outer(st, np.sin(phi_ang)).ravel()
        z = np.repeat(u, n_phi)
        dirs = np.column_stack([x, y, z])
        if axis is not None:
            dirs = dirs @ _rotation_to(np.asarray(axis, dtype=float)).T
        pts = center + radius * dirs
        w = np.repeat(wu, n_phi) * wphi * radius**2
        g = _eval_gamma(gamma, pts)
        return cls(points=pts, normals=dirs, weights=w, gamma=g)

    @classmethod
    def from_mesh(cls, surface, gamma):
        """Panel-centroid quadrature from a TriangulatedSurface."""
        areas, normals = surface.face_areas_normals()
        pts = surface.vertices[surface.faces].mean(axis=1)
        return cls(
            points=pts,
            normals=normals,
            weights=areas,
            gamma=_eval_gamma(gamma, pts),
        )

    @classmethod
    def union(cls, quads):
        return cls(
            points=np.vstack([q.points for q in quads]),
            normals=np.vstack([q.normals for q in quads]),
            weights=np.concatenate([q.weights for q in quads]),
            gamma=np.concatenate([q.gamma for q in quads]),
        )


def _eval_gamma(gamma, pts):
    if callable(gamma):
        return np.array([float(gamma(p)) for p in pts])
    return np.full(len(pts), float(gamma))


def _rotation_to(axis):
    """Rotation matrix mapping e_z to the given unit direction."""
    a = axis / np.linalg.norm(axis)
    ez = np.array([0.0, 0.0, 1.0])
    v = np.cross(ez, a)
    c = float(ez @ a)
    if np.linalg.norm(v) < 1e-14:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def J_tau(quad: SurfaceQuadrature, tau: float, probe: Probe) -> float:
    """Boundary functional: integral of (dv/dnu - tau*gamma*v) * v dS."""
    rt = robin_trace(quad.points, quad.normals, tau, quad.gamma, probe)
    v = v_eval(quad.points, tau, probe)
    return float(np.sum(quad.weights * rt * v))


def theorem21_denominator(quad: SurfaceQuadrature, tau: float, probe: Probe) -> float:
    """integral of (dv/dnu - tau*gamma*v) * (1-gamma)/(1+gamma) * v dS."""
    rt = robin_trace(quad.points, quad.normals, tau, quad.gamma, probe)
    v = v_eval(quad.points, tau, probe)
    fac = (1.0 - quad.gamma) / (1.0 + quad.gamma)
    return float(np.sum(quad.weights * rt * fac * v))


def E_tau(indicator: float, J: float, tol: float = 0.0) -> float:
    """Energy remainder E = I - J under the infinite-horizon idealization.

    E is a sum of squares and must be nonnegative; a value below -tol flags
    an inconsistency between the solver and the quadrature.
    """
    E = indicator - J
    if E < -abs(tol):
        raise QuadratureError(
            f"E = I - J = {E:.3e} is negative beyond tolerance {tol:.1e}"
        )
    return E


def theorem21_ratio(
    E: float, quad: SurfaceQuadrature, tau: float, probe: Probe,
    noise_floor: float = 0.0,
) -> float:
    """E(tau) divided by the weighted boundary functional; tends to 1."""
    den = theorem21_denominator(quad, tau, probe)
    if abs(den) <= noise_floor:
        raise QuadratureError("denominator below noise floor")
    return E / den


def laplace_limit_check(
    quad: SurfaceQuadrature,
    amplitude,
    p,
    taus,
    reflectors: list[ReflectorPoint],
    node_spacing: float | None = None,
):
    """Concentrated surface integral vs its stationary-point limit.

    LHS(tau) = tau * e^{2 tau d} * integral A(x) e^{-2 tau |x-p|}/|x-p|^2 dS;
    RHS = pi/d^2 * sum_q A(q) / sqrt(hess_det(q)).
    Returns a list of rows (tau, lhs, rhs, ratio, warning).
    """
    p = np.asarray(p, dtype=float)
    r = np.linalg.norm(quad.points - p, axis=1)
    d = min(ref.d for ref in reflectors)
    A_vals = (
        np.array([float(amplitude(x)) for x in quad.points])
        if callable(amplitude)
        else np.full(len(quad.points), float(amplitude))
    )
    rhs = (np.pi / d**2) * sum(
        (float(amplitude(ref.q)) if callable(amplitude) else float(amplitude))
        / np.sqrt(ref.hess_det)
        for ref in reflectors
    )
    rows = []
    for tau in np.atleast_1d(np.asarray(taus, dtype=float)):
        lhs = tau * float(np.sum(quad.weights * A_vals * np.exp(-2.0 * tau * (r - d)) / r**2))
        warning = None
        if node_spacing is not None and node_spacing > 1.0 / (2.0 * tau):
            warning = "under-resolved boundary layer near the reflector set"
        rows.append(
            {"tau": float(tau), "lhs": lhs, "rhs": rhs,
             "ratio": lhs / rhs if rhs != 0 else np.inf, "warning": warning}
        )
    return rows


def bounds_check(
    indicator: float, quad: SurfaceQuadrature, tau: float, probe: Probe,
    slack: float,
):
    """Lower/upper indicator bounds with an explicit reported slack.

    Lower: I >= J - slack (any gamma >= 0).
    Upper: I <= J + (1/tau) * integral (1/gamma) |dv/dnu - tau gamma v|^2 dS
           + slack (requires gamma bounded below away from zero).
    """
    J = J_tau(quad, tau, probe)
    lower_ok = indicator >= J - slack
    report = {
        "tau": tau,
        "J": J,
        "slack": slack,
        "lower_ok": bool(lower_ok),
        "upper_ok": None,
        "upper_bound": None,
    }
    if np.all(quad.gamma > 0):
        rt = robin_trace(quad.points, quad.normals, tau, quad.gamma, probe)
        upper = J + np.sum(quad.weights * rt**2 / quad.gamma) / tau
        report["upper_bound"] = float(upper)
        report["upper_ok"] = bool(indicator <= upper + slack)
    return report
