"""Boundary-element solver for the exterior Robin problem on triangle meshes.

Single-layer representation R(x) = integral G(x,y) psi(y) dS with the
exponentially damped kernel G = exp(-tau*|x-y|)/(4*pi*|x-y|); centroid
collocation with piecewise-constant densities.  The exterior Robin
condition gives

    (-1/2 I + K' - tau*diag(gamma)*S) psi = -(dv/dnu - tau*gamma*v),

where K' is the adjoint double-layer operator; the -1/2 comes from the
exterior normal-derivative jump of the single layer.  The damped kernel
has no interior resonances, so the plain single-layer ansatz is safe at
every tau > 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .fields import phi, robin_trace
from .geometry import GeometryError, Probe, TriangulatedSurface


class MeshError(ValueError):
    pass


class ConditioningError(RuntimeError):
    pass


DENSE_PANEL_LIMIT = 30_000


@dataclass
class PanelSystem:
    """Flat-panel discretization of the obstacle surface at a fixed tau."""

    vertices: np.ndarray  # (nv, 3)
    faces: np.ndarray  # (np, 3)
    centroids: np.ndarray
    areas: np.ndarray
    normals: np.ndarray
    gamma: np.ndarray
    tau: float
    diameters: np.ndarray = field(init=False)

    def __post_init__(self):
        if np.any(self.areas <= 0):
            raise MeshError("degenerate (zero-area) panel")
        if np.any(self.gamma < 0):
            raise MeshError("gamma must be nonnegative on every panel")
        v = self.vertices[self.faces]
        e = np.stack(
            [v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], axis=1
        )
        self.diameters = np.linalg.norm(e, axis=2).max(axis=1)

    @classmethod
    def from_surfaces(cls, surfaces, gamma, tau: float):
        """Build from TriangulatedSurface(s); gamma is a constant, a list of
        per-component constants, or a callable of position."""
        if isinstance(surfaces, TriangulatedSurface):
            surfaces = [surfaces]
        verts, faces, gam, comp = [], [], [], []
        offset = 0
        for ci, s in enumerate(surfaces):
            verts.append(s.vertices)
            faces.append(s.faces + offset)
            offset += len(s.vertices)
            comp.append(np.full(len(s.faces), ci))
        vertices = np.vstack(verts)
        faces_arr = np.vstack(faces)
        comp = np.concatenate(comp)
        v = vertices[faces_arr]
        cross = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        normals = cross / (2.0 * areas[:, None])
        centroids = v.mean(axis=1)
        # Orient normals outward per component (away from its centroid).
        for ci in range(len(surfaces)):
            m = comp == ci
            ctr = centroids[m].mean(axis=0)
            s_dot = np.einsum("ij,ij->", normals[m], centroids[m] - ctr)
            if s_dot < 0:
                normals[m] = -normals[m]
        if callable(gamma):
            gam = np.array([float(gamma(c)) for c in centroids])
        elif np.ndim(gamma) == 0:
            gam = np.full(len(faces_arr), float(gamma))
        else:
            gam = np.asarray(gamma, dtype=float)[comp]
        return cls(
            vertices=vertices, faces=faces_arr, centroids=centroids,
            areas=areas, normals=normals, gamma=gam, tau=float(tau),
        )

    def resolution_warning(self, reflector_points=None) -> str | None:
        hmax = float(self.diameters.max())
        if hmax > 1.0 / self.tau:
            return (
                f"max panel diameter {hmax:.3g} exceeds 1/tau = {1.0/self.tau:.3g}; "
                "the kernel boundary layer is under-resolved"
            )
        return None


def _kernel(tau, r):
    return np.exp(-tau * r) / (4.0 * np.pi * r)


_TEMPLATE_CACHE: dict[int, np.ndarray] = {}


def _subdivision_template(levels: int) -> np.ndarray:
    """Barycentric centroid weights of a uniform 4^levels refinement."""
    if levels in _TEMPLATE_CACHE:
        return _TEMPLATE_CACHE[levels]
    tris = [np.eye(3)]
    for _ in range(levels):
        new = []
        for t in tris:
            a, b, c = t
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            new += [
                np.array([a, ab, ca]), np.array([ab, b, bc]),
                np.array([ca, bc, c]), np.array([ab, bc, ca]),
            ]
        tris = new
    w = np.array([t.mean(axis=0) for t in tris])
    _TEMPLATE_CACHE[levels] = w
    return w


def _tri_subdivide(v0, v1, v2, levels):
    """Uniform refinement of one triangle; returns (sub_centroids, sub_areas)."""
    w = _subdivision_template(levels)
    cents = w @ np.array([v0, v1, v2])
    area = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0))
    areas = np.full(len(w), area / len(w))
    return cents, areas


def _self_integral_inv_r(v0, v1, v2, x):
    """integral over the triangle of 1/|x-y| dS for x in the triangle plane.

    Exact edge-wise formula: split at x into three sub-triangles; for each,
    integrate sec in polar coordinates about x.
    """
    total = 0.0
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        u = a - x
        w = b - x
        lu = np.linalg.norm(u)
        lw = np.linalg.norm(w)
        if lu < 1e-15 or lw < 1e-15:
            continue
        e = b - a
        le = np.linalg.norm(e)
        # Perpendicular distance from x to the edge line.
        h = np.linalg.norm(np.cross(u, w)) / le
        if h < 1e-14:
            continue
        # Angles of the two endpoints relative to the foot of the
        # perpendicular; integral of h*sec over the wedge.
        t0 = float(u @ e) / le
        t1 = float(w @ e) / le
        total += h * (np.arcsinh(t1 / h) - np.arcsinh(t0 / h))
    return total


def assemble_operators(ps: PanelSystem, near_factor: float = 1.5, sub_levels: int = 2):
    """Dense single-layer S and adjoint double-layer K' collocation matrices.

    Far entries: one-point kernel * area.  Near entries (centroid gap below
    near_factor * source diameter): subdivided quadrature.  Self entries of
    S: exact polar integration of the 1/r part plus subdivided quadrature
    of the smooth remainder; self entries of K' vanish on flat panels.
    """
    tau = ps.tau
    c = ps.centroids
    n = len(c)
    diff = c[:, None, :] - c[None, :, :]
    r = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(r, 1.0)
    G = _kernel(tau, r)
    S = G * ps.areas[None, :]
    # dG/dnu_x = -(tau + 1/r) G * ((x - y) . nu_x) / r
    dot = np.einsum("ijk,ik->ij", diff, ps.normals)
    Kp = -(tau + 1.0 / r) * G * dot / r * ps.areas[None, :]
    np.fill_diagonal(S, 0.0)
    np.fill_diagonal(Kp, 0.0)

    # Near pairs (including self) redone with subdivision.
    near = r < near_factor * ps.diameters[None, :]
    np.fill_diagonal(near, False)
    ii, jj = np.nonzero(near)
    v = ps.vertices[ps.faces]
    for i, j in zip(ii, jj):
        cents, areas = _tri_subdivide(v[j, 0], v[j, 1], v[j, 2], sub_levels)
        d = c[i] - cents
        rr = np.linalg.norm(d, axis=1)
        g = _kernel(tau, rr)
        S[i, j] = float(np.sum(g * areas))
        Kp[i, j] = float(
            np.sum(-(tau + 1.0 / rr) * g * (d @ ps.normals[i]) / rr * areas)
        )

    # Self entries of S.
    for i in range(n):
        v0, v1, v2 = v[i]
        inv_r = _self_integral_inv_r(v0, v1, v2, c[i])
        cents, areas = _tri_subdivide(v0, v1, v2, sub_levels + 1)
        rr = np.linalg.norm(c[i] - cents, axis=1)
        # expm1 form; the r -> 0 limit of (e^{-tau r} - 1)/r is -tau.
        ker = np.where(rr > 1e-14, np.expm1(-tau * rr) / np.maximum(rr, 1e-14), -tau)
        smooth = float(np.sum(ker * areas))
        S[i, i] = (inv_r + smooth) / (4.0 * np.pi)
    return S, Kp


def solve_robin(ps: PanelSystem, probe: Probe, residual_tol: float = 1e-8):
    """Density psi of the single-layer representation of the reflected field.

    Returns (psi, diagnostics).  Raises ConditioningError when the linear
    solve residual exceeds residual_tol relative to the right-hand side.
    """
    if len(ps.centroids) > DENSE_PANEL_LIMIT:
        raise MeshError(
            f"panel count {len(ps.centroids)} above dense-solve limit "
            f"{DENSE_PANEL_LIMIT}"
        )
    S, Kp = assemble_operators(ps)
    tau = ps.tau
    A = -0.5 * np.eye(len(S)) + Kp - tau * ps.gamma[:, None] * S
    rhs = -robin_trace(ps.centroids, ps.normals, tau, ps.gamma, probe)
    rhs = np.atleast_1d(rhs)
    psi = np.linalg.solve(A, rhs)
    res = float(np.linalg.norm(A @ psi - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if res > residual_tol:
        raise ConditioningError(f"linear solve residual {res:.2e} > {residual_tol:.1e}")
    diag = {
        "residual": res,
        "n_panels": len(psi),
        "resolution_warning": ps.resolution_warning(),
    }
    return psi, diag, S


def eval_single_layer(ps: PanelSystem, psi: np.ndarray, x, solid_angle_cap: float = 0.02):
    """R(x) = (S psi)(x) at off-surface point(s), with panel subdivision for
    panels subtending a large solid angle at x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tau = ps.tau
    out = np.zeros(len(x))
    v = ps.vertices[ps.faces]
    for k, xk in enumerate(x):
        d = xk - ps.centroids
        r = np.linalg.norm(d, axis=1)
        omega = ps.areas / r**2
        big = omega > solid_angle_cap
        vals = _kernel(tau, r) * ps.areas * psi
        acc = float(vals[~big].sum())
        for j in np.nonzero(big)[0]:
            cents, areas = _tri_subdivide(v[j, 0], v[j, 1], v[j, 2], 1)
            rr = np.linalg.norm(xk - cents, axis=1)
            acc += float(np.sum(_kernel(tau, rr) * areas)) * psi[j]
        out[k] = acc
    return out if len(out) > 1 else float(out[0])


def indicator_bem(ps: PanelSystem, probe: Probe):
    """I_B(tau) via the ball-average identity applied to the BEM field.

    Returns (indicator, diagnostics).
    """
    gap = np.linalg.norm(ps.centroids - probe.center, axis=1).min()
    if gap < ps.diameters.max():
        raise GeometryError("probe too close to the surface for far evaluation")
    psi, diag, _ = solve_robin(ps, probe)
    rp = eval_single_layer(ps, psi, probe.center)
    tau = ps.tau
    ind = 4.0 * np.pi * phi(tau * probe.radius) / tau**3 * rp
    return ind, diag


def single_layer_constant_density_sphere(a: float, tau: float) -> float:
    """Analytic on-surface value of S[1] on a sphere of radius a.

    n = 0 mode only: (2 tau/pi) a^2 i_0(tau a) k_0(tau a)
    = (1 - exp(-2 tau a)) / (2 tau).  Used as an assembly oracle.
    """
    return (1.0 - np.exp(-2.0 * tau * a)) / (2.0 * tau)
