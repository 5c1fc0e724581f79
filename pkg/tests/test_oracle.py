import math

import numpy as np
import pytest

from gmsurf.models.atoms import Atom, GaussianField
from gmsurf.models.mesh import TriangleMesh
from gmsurf.services.meshkit import check_manifold, icosphere, metrics
from gmsurf.services.molmodel import eval_field_many
from gmsurf.services.oracle import (
    coverage_distances,
    dense_grid,
    fibonacci_directions,
    mc_reference,
    point_triangle_distance,
    replicate_cluster,
    surface_samples,
)
from gmsurf.utils.errors import OracleMemoryError


def test_sphere_reference(sphere_field):
    mesh = mc_reference(sphere_field, 0.1)
    report = check_manifold(mesh)
    assert report.defects == 0
    m = metrics(mesh)
    assert m.area == pytest.approx(16.0 * math.pi, rel=2e-2)
    assert m.volume == pytest.approx(32.0 * math.pi / 3.0, rel=1e-2)
    assert m.euler_characteristic == 2
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    assert np.einsum("ij,ij->i", mesh.face_normals(), centroids).min() > 0


def test_dense_grid_limit(sphere_field):
    with pytest.raises(OracleMemoryError):
        dense_grid(sphere_field, 0.1, max_points=1000)
    with pytest.raises(ValueError):
        dense_grid(sphere_field, 0.0)


def test_dense_grid_values(sphere_field):
    dense = dense_grid(sphere_field, 0.5)
    assert dense.values.shape == dense.dims
    i, j, k = 12, 11, 13
    point = dense.origin + dense.spacing * np.array([i, j, k])
    expected = math.exp(-(point @ point - 4.0))
    assert dense.values[i, j, k] == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_fibonacci_directions_are_unit():
    d = fibonacci_directions(100)
    assert d.shape == (100, 3)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.allclose(d.mean(axis=0), 0.0, atol=2e-2)


def test_sphere_samples(sphere_field):
    points, skipped = surface_samples(sphere_field, 200)
    assert skipped == 0
    assert np.allclose(np.linalg.norm(points, axis=1), 2.0, atol=1e-9)


def test_two_atom_samples(field_grid):
    field, grid = field_grid
    points, _ = surface_samples(field, 100, grid)
    assert len(points) > 0
    values, _ = eval_field_many(field, grid, points)
    assert np.allclose(values, 1.0, atol=1e-8)


def test_replicate_cluster():
    atoms = [Atom((0.0, 0.0, 0.0), 1.5), Atom((2.0, 0.0, 0.0), 1.0)]
    copies = replicate_cluster(atoms, 5)
    assert len(copies) == 10
    centers = np.array([a.center for a in copies])
    assert np.allclose(centers[:2], [a.center for a in atoms])
    radii = np.array([a.radius for a in copies])
    lo = (centers - radii[:, None]).reshape(5, 2, 3).min(axis=1)
    hi = (centers + radii[:, None]).reshape(5, 2, 3).max(axis=1)
    # габариты копий разделены зазором хотя бы по одной оси
    for first in range(5):
        for second in range(first + 1, 5):
            separation = np.maximum(lo[second] - hi[first], lo[first] - hi[second])
            assert separation.max() >= 4.0 - 1e-9
    with pytest.raises(ValueError):
        replicate_cluster(atoms, 0)


def test_point_triangle_distance():
    a = np.array([[0.0, 0.0, 0.0]] * 3)
    b = np.array([[1.0, 0.0, 0.0]] * 3)
    c = np.array([[0.0, 1.0, 0.0]] * 3)
    p = np.array([[0.2, 0.2, 0.5], [2.0, 0.0, 0.0], [-1.0, -1.0, 0.0]])
    assert np.allclose(point_triangle_distance(p, a, b, c), [0.5, 1.0, math.sqrt(2.0)])


def test_coverage_distances():
    mesh = icosphere(2.0, 3)
    points = 2.0 * fibonacci_directions(50)
    assert coverage_distances(mesh, points).max() < 0.02
    assert np.allclose(coverage_distances(mesh, 3.0 * fibonacci_directions(10)), 1.0, atol=0.02)
    assert np.all(np.isinf(coverage_distances(TriangleMesh(), points)))


def test_field_below_isovalue():
    far = GaussianField((Atom((0.0, 0.0, 0.0), 0.5),), isovalue=5.0)
    assert mc_reference(far, 0.2).is_empty()
