"""Triangle-mesh I/O (ASCII OFF) and reference mesh generators."""

from __future__ import annotations

import numpy as np

from .geometry import GeometryError, TriangulatedSurface


def read_off(path) -> TriangulatedSurface:
    """Read a closed triangle mesh from an ASCII OFF file."""
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise GeometryError(f"{path}: not an OFF file")
    it = iter(tokens[1:])
    nv, nf, _ = int(next(it)), int(next(it)), int(next(it))
    verts = np.array([[float(next(it)) for _ in range(3)] for _ in range(nv)])
    faces = []
    for _ in range(nf):
        k = int(next(it))
        if k != 3:
            raise GeometryError(f"{path}: only triangle faces supported (got {k}-gon)")
        faces.append([int(next(it)) for _ in range(3)])
    return TriangulatedSurface(verts, np.array(faces, dtype=int))


def write_off(path, vertices, faces) -> None:
    vertices = np.asarray(vertices, float)
    faces = np.asarray(faces, int)
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(vertices)} {len(faces)} 0\n")
        for v in vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron projected onto a sphere.

    Returns (vertices, faces); 20 * 4**subdivisions triangles.
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=int,
    )
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
        verts /= np.linalg.norm(verts, axis=1)[:, None]
    return np.asarray(center, float) + radius * verts, faces


def icosphere_surface(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Icosphere as a TriangulatedSurface with analytic curvature data."""
    verts, faces = icosphere(subdivisions, radius, center)
    normals = (verts - np.asarray(center, float)) / radius
    n = len(verts)
    H = np.full(n, -1.0 / radius)
    K = np.full(n, 1.0 / radius**2)
    return TriangulatedSurface(verts, faces, normals=normals, H=H, K=K)


def ellipsoid_mesh(subdivisions=3, semi_axes=(1.0, 1.0, 0.5), center=(0.0, 0.0, 0.0)):
    """Icosphere scaled to an ellipsoid (curvatures estimated from the mesh)."""
    verts, faces = icosphere(subdivisions, 1.0, (0, 0, 0))
    verts = verts * np.asarray(semi_axes, float) + np.asarray(center, float)
    return TriangulatedSurface(verts, faces)


def _subdivide(verts, faces):
    verts = list(map(tuple, verts))
    index = {v: i for i, v in enumerate(verts)}
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key in cache:
            return cache[key]
        m = tuple((np.array(verts[i]) + np.array(verts[j])) / 2.0)
        if m not in index:
            index[m] = len(verts)
            verts.append(m)
        cache[key] = index[m]
        return cache[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(verts), np.array(new_faces, dtype=int)
