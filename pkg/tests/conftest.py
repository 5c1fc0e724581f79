import numpy as np
import pytest

from gmsurf.models.atoms import Atom, GaussianField
from gmsurf.models.mesh import TriangleMesh
from gmsurf.services.molmodel import build_grid

ONE_ATOM_PQR = "ATOM      1  N   GLY     1       0.000   0.000   0.000 -0.3000 2.0000\n"

TWO_ATOM_PQR = (
    "REMARK   two overlapping atoms\n"
    "ATOM      1  C   ALA A   1       0.000   0.000   0.000  0.1000 1.6000\n"
    "ATOM      2  O   ALA A   1       2.200   0.000   0.000 -0.1000 1.4000\n"
    "END\n"
)


def outward(vertices, faces) -> TriangleMesh:
    """Выпуклый многогранник с гранями, развёрнутыми наружу от центра масс"""
    vertices = np.asarray(vertices, dtype=float)
    center = vertices.mean(axis=0)
    oriented = []
    for a, b, c in faces:
        normal = np.cross(vertices[b] - vertices[a], vertices[c] - vertices[a])
        mid = (vertices[a] + vertices[b] + vertices[c]) / 3.0
        oriented.append((a, b, c) if normal @ (mid - center) > 0 else (a, c, b))
    return TriangleMesh(vertices, np.array(oriented))


@pytest.fixture
def tetrahedron() -> TriangleMesh:
    """Правильный тетраэдр с ребром 1"""
    v = np.array([(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)], dtype=float) / (2 * np.sqrt(2))
    return outward(v, [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])


@pytest.fixture
def cube_mesh() -> TriangleMesh:
    """Поверхность куба [-1, 1]^3"""
    v = [(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)]
    quads = [(0, 1, 3, 2), (4, 5, 7, 6), (0, 1, 5, 4), (2, 3, 7, 6), (0, 2, 6, 4), (1, 3, 7, 5)]
    faces = []
    for a, b, c, d in quads:
        faces.extend([(a, b, c), (a, c, d)])
    return outward(v, faces)


@pytest.fixture
def sphere_field() -> GaussianField:
    return GaussianField((Atom((0.0, 0.0, 0.0), 2.0),))


@pytest.fixture
def two_atom_field() -> GaussianField:
    return GaussianField((Atom((0.0, 0.0, 0.0), 1.6), Atom((2.2, 0.0, 0.0), 1.4)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def field_grid(two_atom_field):
    return two_atom_field, build_grid(two_atom_field)


def fragment_pqr(n: int, seed: int = 0, density: float = 1.0 / 11.0) -> str:
    """PQR-текст компактного кластера из n атомов с плотностью белка и зазором не меньше 1.3 Å"""
    rng = np.random.default_rng(seed)
    radius = (3.0 * n / (4.0 * np.pi * density)) ** (1.0 / 3.0)
    kinds = (("N", 1.55), ("C", 1.70), ("O", 1.52), ("S", 1.80), ("H", 1.20))
    positions = np.empty((0, 3))
    while len(positions) < n:
        candidate = rng.uniform(-radius, radius, 3)
        if np.linalg.norm(candidate) > radius:
            continue
        if len(positions) and np.linalg.norm(positions - candidate, axis=1).min() < 1.3:
            continue
        positions = np.vstack([positions, candidate])
    lines = []
    for i, (x, y, z) in enumerate(positions):
        name, r = kinds[i % len(kinds)]
        lines.append(f"ATOM  {i + 1:5d}  {name:<3s} GLY A{i // 10 + 1:4d}    {x:8.3f}{y:8.3f}{z:8.3f} {0.0:7.4f} {r:6.4f}")
    return "\n".join(lines) + "\nEND\n"
