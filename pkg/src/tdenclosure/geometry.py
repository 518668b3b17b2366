"""Obstacle and probe geometry: distances, first reflectors, curvature data.

Conventions
-----------
Normals ``nu`` point outward, i.e. from the obstacle into the exterior
domain.  Mean curvature H and Gauss curvature K are taken with respect to
``nu``; a sphere of radius ``a`` has H = -1/a and K = 1/a**2.  With this
convention the Hessian determinant of the distance function at a nearest
boundary point q is

    hess_det = lam**2 - 2*H*lam + K,   lam = 1/d,

which equals (1/d + 1/a)**2 for the sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


class GeometryError(ValueError):
    """Invalid geometric configuration (probe inside obstacle, etc.)."""


class DegenerateReflectorError(GeometryError):
    """The first reflector set is not a finite set of points."""


@dataclass(frozen=True)
class Probe:
    """Open ball B with center p and (small) radius eta."""

    center: NDArray[np.float64]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (3,):
            raise GeometryError("probe center must be a 3-vector")
        if not self.radius > 0:
            raise GeometryError("probe radius must be positive")


@dataclass(frozen=True)
class ReflectorPoint:
    """A nearest boundary point q with its curvature data."""

    q: NDArray[np.float64]
    d: float
    H: float
    K: float
    hess_det: float
    component: int = 0


def hessian_det(d: float, H: float, K: float) -> float:
    """det(S_q(dB_d(p)) - S_q(dD)) = lam^2 - 2 H lam + K with lam = 1/d."""
    if not d > 0:
        raise GeometryError("distance must be positive")
    lam = 1.0 / d
    return lam * lam - 2.0 * H * lam + K


class Obstacle:
    """Base class: a closed C^2 surface bounding an open obstacle."""

    n_components = 1

    def contains(self, x) -> bool:
        raise NotImplementedError

    def distance(self, p) -> float:
        """Unsigned distance from an exterior point to the surface."""
        raise NotImplementedError

    def surface_samples(self) -> NDArray[np.float64]:
        """A dense sampling of the surface used by the reflector scan."""
        raise NotImplementedError

    def project(self, x) -> NDArray[np.float64]:
        """Nearest surface point to x (x exterior, near the surface)."""
        raise NotImplementedError

    def curvatures_at(self, q) -> tuple[float, float]:
        """(H, K) at a surface point q, outward-normal convention."""
        raise NotImplementedError

    def normal_at(self, q) -> NDArray[np.float64]:
        raise NotImplementedError

    def component_at(self, q) -> int:
        return 0


class Sphere(Obstacle):
    """Analytic sphere of radius a."""

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        if not radius > 0:
            raise GeometryError("sphere radius must be positive")
        self.radius = float(radius)

    def contains(self, x) -> bool:
        return np.linalg.norm(np.asarray(x, float) - self.center) < self.radius

    def distance(self, p) -> float:
        r = float(np.linalg.norm(np.asarray(p, float) - self.center))
        if r <= self.radius:
            raise GeometryError("point is inside or on the obstacle")
        return r - self.radius

    def surface_samples(self) -> NDArray[np.float64]:
        return self.center + self.radius * _fibonacci_sphere(2000)

    def project(self, x) -> NDArray[np.float64]:
        u = np.asarray(x, float) - self.center
        return self.center + self.radius * u / np.linalg.norm(u)

    def curvatures_at(self, q) -> tuple[float, float]:
        a = self.radius
        return -1.0 / a, 1.0 / (a * a)

    def normal_at(self, q) -> NDArray[np.float64]:
        u = np.asarray(q, float) - self.center
        return u / np.linalg.norm(u)


class Ellipsoid(Obstacle):
    """Analytic axis-aligned ellipsoid with semi-axes (a, b, c)."""

    def __init__(self, center, semi_axes):
        self.center = np.asarray(center, dtype=float)
        self.semi_axes = np.asarray(semi_axes, dtype=float)
        if not np.all(self.semi_axes > 0):
            raise GeometryError("semi-axes must be positive")

    def _local(self, x):
        return np.asarray(x, float) - self.center

    def contains(self, x) -> bool:
        y = self._local(x) / self.semi_axes
        return float(y @ y) < 1.0

    def project(self, x) -> NDArray[np.float64]:
        # Nearest point: y_i = a_i^2 x_i / (a_i^2 + t), t > 0 root of the
        # constraint sum(y_i^2 / a_i^2) = 1 (x exterior).  Newton on t.
        y = self._local(x)
        a2 = self.semi_axes**2
        if float((y / self.semi_axes) @ (y / self.semi_axes)) <= 1.0:
            raise GeometryError("point is inside or on the obstacle")
        t = max(self.semi_axes) * np.linalg.norm(y)
        for _ in range(100):
            g = np.sum(a2 * y**2 / (a2 + t) ** 2) - 1.0
            dg = -2.0 * np.sum(a2 * y**2 / (a2 + t) ** 3)
            step = g / dg
            t_new = t - step
            if t_new <= -np.min(a2):
                t_new = 0.5 * (t - np.min(a2))
            if abs(t_new - t) < 1e-14 * (1.0 + abs(t)):
                t = t_new
                break
            t = t_new
        q = a2 * y / (a2 + t)
        return self.center + q

    def distance(self, p) -> float:
        q = self.project(p)
        return float(np.linalg.norm(np.asarray(p, float) - q))

    def surface_samples(self) -> NDArray[np.float64]:
        return self.center + self.semi_axes * _fibonacci_sphere(4000)

    def normal_at(self, q) -> NDArray[np.float64]:
        g = self._local(q) / self.semi_axes**2
        return g / np.linalg.norm(g)

    def curvatures_at(self, q) -> tuple[float, float]:
        a, b, c = self.semi_axes
        x, y, z = self._local(q)
        w = np.sqrt(x**2 / a**4 + y**2 / b**4 + z**2 / c**4)
        # Standard closed forms, convex-positive sign; flip H for the
        # outward-normal convention used throughout.
        K = 1.0 / (a**2 * b**2 * c**2 * w**4)
        H_conv = (a**2 + b**2 + c**2 - x**2 - y**2 - z**2) / (
            2.0 * a**2 * b**2 * c**2 * w**3
        )
        return -H_conv, K


class TriangulatedSurface(Obstacle):
    """Closed triangle mesh with per-vertex outward normals and curvatures.

    Curvatures, when not supplied, are estimated by fitting a local quadric
    over the 2-ring vertex neighborhood in the frame of the vertex normal.
    """

    def __init__(self, vertices, faces, normals=None, H=None, K=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=int)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise GeometryError("vertices must be (n, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise GeometryError("faces must be (m, 3)")
        self._check_closed()
        self.vertex_normals = (
            np.asarray(normals, float) if normals is not None else self._vertex_normals()
        )
        if H is None or K is None:
            H_est, K_est = self._estimate_curvatures()
            self.H = H_est if H is None else np.asarray(H, float)
            self.K = K_est if K is None else np.asarray(K, float)
        else:
            self.H = np.asarray(H, float)
            self.K = np.asarray(K, float)
        bad = self.H**2 < self.K - 1e-9 * np.maximum(1.0, self.H**2)
        if np.any(bad):
            raise GeometryError("per-vertex curvatures violate H^2 >= K")

    # -- mesh plumbing ----------------------------------------------------

    def _check_closed(self):
        edges = np.vstack(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        und = np.sort(edges, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts != 2):
            raise GeometryError("mesh is not closed (boundary or nonmanifold edges)")

    def face_areas_normals(self):
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        with np.errstate(invalid="ignore"):
            normals = cross / (2.0 * areas[:, None])
        return areas, normals

    def _vertex_normals(self):
        areas, fnorm = self.face_areas_normals()
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.faces[:, k], areas[:, None] * fnorm)
        vn /= np.linalg.norm(vn, axis=1)[:, None]
        # Outward orientation: flip globally if normals point toward the
        # centroid on average.
        centroid = self.vertices.mean(axis=0)
        s = np.einsum("ij,ij->", vn, self.vertices - centroid)
        if s < 0:
            vn = -vn
        return vn

    def _vertex_rings(self):
        n = len(self.vertices)
        one_ring = [set() for _ in range(n)]
        for a, b, c in self.faces:
            one_ring[a].update((b, c))
            one_ring[b].update((a, c))
            one_ring[c].update((a, b))
        return one_ring

    def _estimate_curvatures(self):
        one_ring = self._vertex_rings()
        n = len(self.vertices)
        H = np.zeros(n)
        K = np.zeros(n)
        for i in range(n):
            nbrs = set(one_ring[i])
            for j in list(nbrs):
                nbrs |= one_ring[j]
            nbrs.discard(i)
            idx = np.fromiter(nbrs, dtype=int)
            nu = self.vertex_normals[i]
            # Local frame (t1, t2, nu).
            t1 = np.cross(nu, [1.0, 0.0, 0.0])
            if np.linalg.norm(t1) < 0.1:
                t1 = np.cross(nu, [0.0, 1.0, 0.0])
            t1 /= np.linalg.norm(t1)
            t2 = np.cross(nu, t1)
            rel = self.vertices[idx] - self.vertices[i]
            u = rel @ t1
            v = rel @ t2
            w = rel @ nu
            # Quadric w = 1/2 L u^2 + M u v + 1/2 N v^2 + a u + b v.
            A = np.column_stack([0.5 * u**2, u * v, 0.5 * v**2, u, v])
            coef, *_ = np.linalg.lstsq(A, w, rcond=None)
            L, M, N = coef[0], coef[1], coef[2]
            # Correct first-order tilt: divide second fundamental form by
            # sqrt(1 + a^2 + b^2) (first-order normal misalignment).
            scale = 1.0 / np.sqrt(1.0 + coef[3] ** 2 + coef[4] ** 2)
            L, M, N = L * scale, M * scale, N * scale
            H[i] = 0.5 * (L + N)
            K[i] = L * N - M * M
        return H, K

    # -- Obstacle interface ----------------------------------------------

    # Fixed slate of scattered ray directions; a cast that grazes a vertex
    # or edge (ambiguous parity) falls through to the next one.
    _RAY_DIRS = np.array([
        [0.577350, 0.579428, 0.575265],
        [0.262966, -0.801976, 0.536452],
        [-0.724042, 0.167884, 0.669097],
        [0.485071, 0.727607, -0.485071],
    ])

    def contains(self, x) -> bool:
        # Ray parity, robust enough for query points away from the surface
        # (all uses here).
        x = np.asarray(x, float)
        v = self.vertices
        f = self.faces
        p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        e1 = p1 - p0
        e2 = p2 - p0
        s = x - p0
        eps = 1e-9
        for d in self._RAY_DIRS:
            h = np.cross(d, e2)
            a = np.einsum("ij,ij->i", e1, h)
            mask = np.abs(a) > 1e-14
            denom = np.where(mask, a, 1.0)
            u = np.einsum("ij,ij->i", s, h) / denom
            q = np.cross(s, e1)
            vv = (q @ d) / denom
            t = np.einsum("ij,ij->i", e2, q) / denom
            hit = mask & (u >= 0) & (vv >= 0) & (u + vv <= 1) & (t > 0)
            grazing = mask & (t > 0) & (
                (np.abs(u) < eps) | (np.abs(vv) < eps)
                | (np.abs(u + vv - 1.0) < eps)
            ) & (u > -eps) & (vv > -eps) & (u + vv < 1 + eps)
            if not np.any(grazing):
                return bool(np.count_nonzero(hit) % 2 == 1)
        # Every direction grazed; accept the last parity as a best effort.
        return bool(np.count_nonzero(hit) % 2 == 1)

    def _point_triangle_distances(self, p):
        """Exact distances from p to every triangle, vectorized."""
        v = self.vertices
        f = self.faces
        a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        return _point_triangle_dist(np.asarray(p, float), a, b, c)

    def distance(self, p) -> float:
        if self.contains(p):
            raise GeometryError("point is inside or on the obstacle")
        dists, _ = self._point_triangle_distances(p)
        return float(dists.min())

    def project(self, x) -> NDArray[np.float64]:
        dists, closest = self._point_triangle_distances(x)
        return closest[int(np.argmin(dists))]

    def surface_samples(self) -> NDArray[np.float64]:
        areas, _ = self.face_areas_normals()
        centroids = self.vertices[self.faces].mean(axis=1)
        return np.vstack([self.vertices, centroids])

    def _interp(self, values, q):
        # Inverse-distance interpolation from the three vertices of the
        # face nearest to q (adequate: values vary smoothly).
        dists, closest = self._point_triangle_distances(q)
        face = self.faces[int(np.argmin(dists))]
        d = np.linalg.norm(self.vertices[face] - np.asarray(q, float), axis=1)
        w = 1.0 / np.maximum(d, 1e-12)
        w /= w.sum()
        return values[face].T @ w

    def curvatures_at(self, q) -> tuple[float, float]:
        return float(self._interp(self.H, q)), float(self._interp(self.K, q))

    def normal_at(self, q) -> NDArray[np.float64]:
        n = self._interp(self.vertex_normals, q)
        return n / np.linalg.norm(n)


class UnionObstacle(Obstacle):
    """Disjoint union of obstacles (multi-component boundary)."""

    def __init__(self, components):
        self.components = list(components)
        if not self.components:
            raise GeometryError("empty obstacle union")

    @property
    def n_components(self):
        return len(self.components)

    def contains(self, x) -> bool:
        return any(c.contains(x) for c in self.components)

    def distance(self, p) -> float:
        return min(c.distance(p) for c in self.components)

    def surface_samples(self) -> NDArray[np.float64]:
        return np.vstack([c.surface_samples() for c in self.components])

    def _owner(self, q):
        dists = [np.linalg.norm(np.asarray(q, float) - c.project(q)) for c in self.components]
        return int(np.argmin(dists))

    def project(self, x) -> NDArray[np.float64]:
        i = self._owner(x)
        return self.components[i].project(x)

    def curvatures_at(self, q) -> tuple[float, float]:
        return self.components[self._owner(q)].curvatures_at(q)

    def normal_at(self, q) -> NDArray[np.float64]:
        return self.components[self._owner(q)].normal_at(q)

    def component_at(self, q) -> int:
        return self._owner(q)


def distance_to_boundary(obstacle: Obstacle, p) -> float:
    """d_{dD}(p) = inf over the surface of |y - p|; p must be exterior."""
    return obstacle.distance(p)


def first_reflector(
    obstacle: Obstacle,
    p,
    tol: float = 1e-6,
    cluster_radius_factor: float = 1e-3,
    cluster_diameter_cap: float = 0.25,
) -> list[ReflectorPoint]:
    """All nearest boundary points, clustered into isolated minimizers.

    Raises DegenerateReflectorError when a cluster's diameter exceeds
    ``cluster_diameter_cap * d`` (a curve or patch of minimizers, which
    breaks the finite-reflector-set hypothesis).
    """
    p = np.asarray(p, float)
    d = obstacle.distance(p)
    samples = obstacle.surface_samples()
    dist = np.linalg.norm(samples - p, axis=1)
    # Generous scan cut before projection refinement: coarse samples of a
    # mesh-free surface sit above the true minimum.
    scan_cut = d * (1.0 + max(tol, 5e-2))
    cand = samples[dist <= scan_cut]
    refined = np.array([_descend_to_minimizer(obstacle, p, c) for c in cand])
    rdist = np.linalg.norm(refined - p, axis=1)
    # Keep near-ties with a floor above faceting noise: on smooth surfaces
    # the extras sit next to a true minimizer and are absorbed by the
    # clustering, while on a degenerate valley they reveal its extent.
    keep = rdist <= rdist.min() * (1.0 + max(tol, 1e-4))
    pts = refined[keep]
    if len(pts) == 0:
        pts = np.array([obstacle.project(p)])
    clusters = _cluster(pts, merge_radius=cluster_radius_factor * d * 10)
    # A curve of minimizers (degenerate reflector set) survives the base
    # clustering as many representatives spread at the sampling spacing;
    # isolated minimizers give a handful at most.  Re-chain a large
    # representative population at a few times its own spacing so the
    # diameter cap can see the curve's extent.
    if len(clusters) >= 8:
        reps = np.array([cl.mean(axis=0) for cl in clusters])
        gaps = np.linalg.norm(reps[:, None, :] - reps[None, :, :], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        spacing = float(np.median(gaps.min(axis=1)))
        clusters = _cluster(reps, merge_radius=3.0 * spacing)
    out = []
    for cl in clusters:
        diam = _cluster_diameter(cl)
        if diam > cluster_diameter_cap * d:
            raise DegenerateReflectorError(
                f"reflector cluster diameter {diam:.3g} exceeds cap; "
                "the first reflector set is not finite"
            )
        q = _descend_to_minimizer(obstacle, p, cl.mean(axis=0))
        dq = float(np.linalg.norm(q - p))
        H, K = obstacle.curvatures_at(q)
        out.append(
            ReflectorPoint(
                q=q,
                d=dq,
                H=H,
                K=K,
                hess_det=hessian_det(dq, H, K),
                component=obstacle.component_at(q),
            )
        )
    out.sort(key=lambda r: tuple(r.q))
    return out


def check_nondegeneracy(
    reflectors: list[ReflectorPoint], floor: float = 1e-8
) -> tuple[bool, list[ReflectorPoint]]:
    """True iff every reflector has hess_det above the floor.

    Returns (ok, offending_points).  An empty reflector list is rejected.
    """
    if not reflectors:
        raise GeometryError("empty reflector list")
    bad = [r for r in reflectors if not r.hess_det > floor]
    return (len(bad) == 0, bad)


# -- helpers --------------------------------------------------------------


def _descend_to_minimizer(obstacle: Obstacle, p, y0, shrink: float = 0.99,
                          max_iter: int = 200, tol: float = 1e-12):
    """Slide a surface point downhill in distance to p.

    Fixed-point iteration y <- project(p + shrink*(y - p)): pulling the
    point slightly toward p and reprojecting moves it along the surface
    toward a local minimizer of |y - p|, where the iteration stalls.

    Travel is capped at half the probe distance: inside a flat valley of
    minimizers (degenerate reflector set) facet tie-breaking would
    otherwise march every candidate around the valley to a single point,
    hiding the degeneracy from the cluster-diameter check.
    """
    y0 = np.asarray(y0, float)
    y = y0
    travel_cap = 0.5 * float(np.linalg.norm(p - y0))
    for _ in range(max_iter):
        y_new = obstacle.project(p + shrink * (y - p))
        if np.linalg.norm(y_new - y0) > travel_cap:
            return y
        if np.linalg.norm(y_new - y) < tol * max(1.0, np.linalg.norm(y)):
            return y_new
        y = y_new
    return y


def _fibonacci_sphere(n: int) -> NDArray[np.float64]:
    i = np.arange(n, dtype=float) + 0.5
    phi_angle = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.column_stack(
        [
            np.sin(phi_angle) * np.cos(theta),
            np.sin(phi_angle) * np.sin(theta),
            np.cos(phi_angle),
        ]
    )


def _cluster(points: NDArray[np.float64], merge_radius: float):
    """Greedy single-linkage clustering with the given merge radius."""
    remaining = list(range(len(points)))
    clusters = []
    while remaining:
        seed = remaining.pop(0)
        members = [seed]
        changed = True
        while changed:
            changed = False
            for j in list(remaining):
                dmin = min(
                    np.linalg.norm(points[j] - points[m]) for m in members
                )
                if dmin <= merge_radius:
                    members.append(j)
                    remaining.remove(j)
                    changed = True
        clusters.append(points[members])
    return clusters


def _cluster_diameter(cl: NDArray[np.float64]) -> float:
    if len(cl) == 1:
        return 0.0
    d = cl[:, None, :] - cl[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _point_triangle_dist(p, a, b, c):
    """Distance from point p to triangles (a, b, c); vectorized over rows.

    Returns (distances, closest_points).  Standard region classification
    (Eberly).
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    closest = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    # Vertex regions.
    m = (d1 <= 0) & (d2 <= 0)
    closest[m] = a[m]
    done |= m
    m = (~done) & (d3 >= 0) & (d4 <= d3)
    closest[m] = b[m]
    done |= m
    m = (~done) & (d6 >= 0) & (d5 <= d6)
    closest[m] = c[m]
    done |= m

    # Edge AB.
    vc = d1 * d4 - d3 * d2
    m = (~done) & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = np.where(np.abs(d1 - d3) > 0, d1 / np.where(d1 - d3 == 0, 1, d1 - d3), 0.0)
    closest[m] = a[m] + t[m, None] * ab[m]
    done |= m

    # Edge AC.
    vb = d5 * d2 - d1 * d6
    m = (~done) & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = np.where(np.abs(d2 - d6) > 0, d2 / np.where(d2 - d6 == 0, 1, d2 - d6), 0.0)
    closest[m] = a[m] + t[m, None] * ac[m]
    done |= m

    # Edge BC.
    va = d3 * d6 - d5 * d4
    m = (~done) & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    t = np.where(denom != 0, (d4 - d3) / np.where(denom == 0, 1, denom), 0.0)
    closest[m] = b[m] + t[m, None] * (c[m] - b[m])
    done |= m

    # Interior.
    m = ~done
    denom = va + vb + vc
    denom = np.where(denom == 0, 1, denom)
    v = vb / denom
    w = vc / denom
    closest[m] = a[m] + v[m, None] * ab[m] + w[m, None] * ac[m]

    dist = np.linalg.norm(closest - p, axis=1)
    return dist, closest
