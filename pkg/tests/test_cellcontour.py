from collections import defaultdict

import numpy as np
import pytest

from gmsurf.models.atoms import Atom, GaussianField
from gmsurf.models.contour import CRITICAL, EDGE, FacePoint, Facelet, Patch, Placement
from gmsurf.models.mesh import TriangleMesh
from gmsurf.models.tensors import TrilinearCell
from gmsurf.services.cellcontour import (
    contour_cell,
    critical_points,
    edge_intersections,
    facelet_arcs,
    facing,
    fold_segments,
    improve_by_flips,
    is_single_valued,
    make_job,
    split_patches,
    trace_face_loops,
    triangulate_patch,
)
from gmsurf.services.meshkit import check_manifold
from gmsurf.services.molmodel import build_grid, eval_field_direct
from gmsurf.services.partition import contour_jobs, initial_grid, refine
from gmsurf.utils.errors import CellTopologyError

PLANE = [0, 1, 0, 0, 0, 0, 0, 0]  # g = x
SADDLE = [0, 0, 0, 1, -0.5, 0, 0, 0]  # g = z - xy/2
_SPHERE = GaussianField((Atom((0.0, 0.0, 0.0), 2.0),))


def _mesh(cell_mesh) -> TriangleMesh:
    keys = list(cell_mesh.points)
    index = {key: i for i, key in enumerate(keys)}
    vertices = np.array([cell_mesh.points[key] for key in keys])
    triangles = np.array([[index[k] for k in tri] for tri in cell_mesh.triangles])
    return TriangleMesh(vertices, triangles)


def _assert_outward(cell, mesh):
    for tri in mesh.triangles:
        a, b, c = mesh.vertices[tri]
        normal = np.cross(b - a, c - a)
        centroid = cell.to_local((a + b + c) / 3.0)
        assert normal @ -cell.gradient(centroid) > 0


def test_plane_edge_points():
    cell = TrilinearCell.from_coeffs(PLANE)
    points = edge_intersections(cell, 0.0)
    assert len(points) == 4
    assert all(point.kind == EDGE for point in points)
    assert np.allclose([p.local[0] for p in points], 0.0)


def test_plane_contour():
    cell = TrilinearCell.from_coeffs(PLANE)
    job = make_job(cell, 0.0)
    assert len(trace_face_loops(job)) == 1
    mesh = _mesh(contour_cell(job))
    assert mesh.vertex_count == 4
    assert mesh.triangle_count == 2
    a, b, c = (mesh.vertices[mesh.triangles][:, k] for k in range(3))
    assert np.linalg.norm(np.cross(b - a, c - a), axis=1).sum() / 2.0 == pytest.approx(4.0)
    _assert_outward(cell, mesh)


def test_hyperbolic_cell_edge_point():
    cell = TrilinearCell.from_coeffs([0, 0, 0, 1, -1, 0, 0, 0])
    points = edge_intersections(cell, 1.0)
    assert any(np.allclose(point.local, (0.0, 1.0, 1.0)) for point in points)
    for point in points:
        assert cell.value(point.local) == pytest.approx(1.0, abs=1e-12)


def test_random_cells_edge_points(rng):
    edges = [(i, j) for i in range(8) for j in range(i + 1, 8) if bin(i ^ j).count("1") == 1]
    for _ in range(200):
        corners = rng.uniform(-1.0, 1.0, (2, 2, 2))
        cell = TrilinearCell.from_corners(corners)
        flat = corners.reshape(-1)
        changes = sum(1 for i, j in edges if (flat[i] >= 0.0) != (flat[j] >= 0.0))
        points = edge_intersections(cell, 0.0)
        assert len(points) == changes
        for point in points:
            assert abs(cell.value(point.local)) <= 1e-12


def test_saddle_folds_and_critical_point():
    cell = TrilinearCell.from_coeffs(SADDLE)
    fx = fold_segments(cell, 0, 0.0)
    fy = fold_segments(cell, 1, 0.0)
    assert len(fx) == 1 and len(fy) == 1
    assert fold_segments(cell, 2, 0.0) == []
    assert np.allclose([e.local for e in fx[0].endpoints], [(-1, 0, 0), (1, 0, 0)])
    assert np.allclose([e.local for e in fy[0].endpoints], [(0, -1, 0), (0, 1, 0)])
    found = critical_points(cell, 0.0, {0: fx, 1: fy, 2: []})
    assert len(found) == 1
    assert found[0].kind == CRITICAL
    assert np.allclose(found[0].local, 0.0)
    assert fx[0].criticals and fy[0].criticals


def test_plane_has_no_folds():
    cell = TrilinearCell.from_coeffs(PLANE)
    assert all(fold_segments(cell, axis, 0.0) == [] for axis in range(3))


def test_saddle_splits_into_single_valued_patches():
    cell = TrilinearCell.from_coeffs(SADDLE)
    job = make_job(cell, 0.0)
    folds = {axis: fold_segments(cell, axis, 0.0) for axis in range(3)}
    critical_points(cell, 0.0, folds)
    loops = trace_face_loops(job)
    assert len(loops) == 1 and len(loops[0]) == 8
    patches = split_patches(job, loops, folds)
    assert len(patches) == 4
    for patch in patches:
        assert len(patch) == 4
        for axis in range(3):
            assert is_single_valued(cell, 0.0, patch, axis)


def test_saddle_contour_is_a_disc():
    cell = TrilinearCell.from_coeffs(SADDLE)
    mesh = _mesh(contour_cell(make_job(cell, 0.0)))
    assert mesh.vertex_count == 9
    assert mesh.triangle_count == 8
    report = check_manifold(mesh)
    # края диска - рёбра степени 1
    assert report.non_manifold_edges == 8
    assert report.non_manifold_vertices == 0
    assert report.boundary_edges == 8
    _assert_outward(cell, mesh)
    for vertex in mesh.vertices:
        assert abs(cell.value(cell.to_local(vertex))) <= 1e-10


def test_sphere_cell_residuals():
    bounds = np.array([[1.5, 2.5], [-0.5, 0.5], [-0.5, 0.5]])
    values = np.empty((2, 2, 2))
    for ix in (0, 1):
        for iy in (0, 1):
            for iz in (0, 1):
                point = (bounds[0, ix], bounds[1, iy], bounds[2, iz])
                values[ix, iy, iz] = eval_field_direct(_SPHERE, point)[0]
    cell = TrilinearCell.from_corners(values, bounds)
    result = contour_cell(make_job(cell, 1.0, Placement((0, 0, 0), 2), key=(0, 0, 0, 0)))
    assert result.triangles
    assert result.fallback_patches == 0
    mesh = _mesh(result)
    for vertex in mesh.vertices:
        assert cell.value(cell.to_local(vertex)) == pytest.approx(1.0, abs=1e-10)
    _assert_outward(cell, mesh)


def test_triangulate_triangle_and_square():
    def point(n, xyz):
        return FacePoint(n, np.asarray(xyz, dtype=float), np.asarray(xyz, dtype=float))

    triangle = Patch([point(0, (0, 0, 0)), point(1, (1, 0, 0)), point(2, (0, 1, 0))])
    assert triangulate_patch(triangle) == [(0, 1, 2)]
    square = Patch([point(n, xyz) for n, xyz in enumerate([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)])], axis=2)
    tris = triangulate_patch(square)
    assert len(tris) == 2
    local = np.array([p.local for p in square.points])
    for i, j, k in tris:
        assert np.cross(local[j] - local[i], local[k] - local[i])[2] > 0


def test_branch_with_one_side_point_is_rejected():
    values = np.array([[-1.0, -1.0], [1.0, 1.0]])
    facelet = Facelet((0, (0, 0, 0), 2), 0, values, ())
    lone = FacePoint(("e", (0, 1, 0), (0, 1, 2)), np.array([0.0, 1.0, 0.0]), np.array([-1.0, 0.0, -1.0]))
    with pytest.raises(CellTopologyError) as info:
        facelet_arcs(facelet, 0.0, [lone], Placement(), cell_key=(0, 0, 0, 0))
    assert info.value.cell_id == (0, 0, 0, 0)


def _random_cells(count, seed):
    rng = np.random.default_rng(seed)
    return [TrilinearCell.from_corners(rng.uniform(-1.0, 1.0, (2, 2, 2))) for _ in range(count)]


def _fold_system(cell, axis, beta, gamma):
    """(A - c, B) при c = 0 и якобиан по (beta, gamma); A = g и B = dg/d(axis) при axis = 0"""
    b, g = [k for k in range(3) if k != axis]

    def at(x, y):
        p = np.zeros(3)
        p[b], p[g] = x, y
        return np.array([cell.value(p), cell.gradient(p)[axis]])

    h = 1e-4
    jac = np.stack([(at(beta + h, gamma) - at(beta - h, gamma)) / (2 * h),
                    (at(beta, gamma + h) - at(beta, gamma - h)) / (2 * h)], axis=1)
    return at(beta, gamma), jac


def _bracketed_roots(cell, axis, grid):
    """Корни {A = c, B = 0}, найденные Ньютоном из клеток сетки, где меняют знак обе функции"""
    step = grid[1] - grid[0]
    roots = []
    for i in range(len(grid) - 1):
        for j in range(len(grid) - 1):
            corners = [_fold_system(cell, axis, grid[i + di], grid[j + dj])[0] for di in (0, 1) for dj in (0, 1)]
            signs = np.sign(np.array(corners))
            if len(set(signs[:, 0])) < 2 or len(set(signs[:, 1])) < 2:
                continue
            x = np.array([grid[i] + step / 2, grid[j] + step / 2])
            for _ in range(30):
                value, jac = _fold_system(cell, axis, *x)
                if abs(np.linalg.det(jac)) < 1e-14:
                    break
                x = x - np.linalg.solve(jac, value)
            value, _ = _fold_system(cell, axis, *x)
            near = abs(x[0] - grid[i] - step / 2) <= 2 * step and abs(x[1] - grid[j] - step / 2) <= 2 * step
            if np.abs(value).max() < 1e-12 and near and np.abs(x).max() < 1.0 - 1e-6:
                roots.append(x)
    return roots


def test_fold_segments_match_grid_bracketing():
    grid = np.linspace(-1.0, 1.0, 41)
    for cell in _random_cells(150, seed=11):
        for axis in range(3):
            folds = fold_segments(cell, axis, 0.0)
            for fold in folds:
                for alpha in (-1.0, 0.0, 1.0):
                    p = fold.point(alpha)
                    assert abs(cell.value(p)) <= 1e-10
                    assert abs(cell.gradient(p)[axis]) <= 1e-10
            for root in _bracketed_roots(cell, axis, grid):
                assert any(np.hypot(root[0] - f.fixed[0], root[1] - f.fixed[1]) <= 1e-7 for f in folds)


def test_critical_points_residuals():
    for cell in _random_cells(400, seed=5) + [TrilinearCell.from_coeffs(SADDLE)]:
        for point in critical_points(cell, 0.0):
            _, _, first, _, second, _ = point.key
            grad = cell.gradient(point.local)
            assert abs(cell.value(point.local)) <= 1e-10
            assert abs(grad[first]) <= 1e-10
            assert abs(grad[second]) <= 1e-10


def test_face_loops_close_on_random_cells():
    for cell in _random_cells(300, seed=3):
        job = make_job(cell, 0.0)
        loops = trace_face_loops(job)
        seen = defaultdict(int)
        for loop in loops:
            assert len(loop) >= 3
            for point in loop:
                seen[point.key] += 1
        # каждая точка контура - ровно в одной петле и ровно один раз
        assert all(n == 1 for n in seen.values())
        assert {point.key for point in edge_intersections(cell, 0.0)} <= set(seen)
        for facelet in job.facelets:
            crossings = sum(1 for side in facelet.sides if (side.v0 >= 0.0) != (side.v1 >= 0.0))
            assert crossings % 2 == 0


def test_patches_are_single_valued_on_random_cells():
    for cell in _random_cells(200, seed=7):
        job = make_job(cell, 0.0)
        folds = {axis: fold_segments(cell, axis, 0.0) for axis in range(3)}
        critical_points(cell, 0.0, folds)
        for patch in split_patches(job, trace_face_loops(job), folds):
            for axis in range(3):
                assert is_single_valued(cell, 0.0, patch, axis)


def test_random_cells_face_outward():
    for cell in _random_cells(300, seed=7):
        result = contour_cell(make_job(cell, 0.0))
        assert result.fallback_patches == 0
        if result.triangles:
            _assert_outward(cell, _mesh(result))


def test_random_patch_triangles_face_outward():
    for cell in _random_cells(100, seed=13):
        job = make_job(cell, 0.0)
        folds = {axis: fold_segments(cell, axis, 0.0) for axis in range(3)}
        critical_points(cell, 0.0, folds)
        for patch in split_patches(job, trace_face_loops(job), folds):
            if len(patch) < 3:
                continue
            tris = triangulate_patch(patch, cell)
            assert len(tris) == len(patch) - 2
            local = np.array([point.local for point in patch.points])
            for tri in tris:
                assert facing(cell, local, tri) > 0.0
                a, b, c = local[list(tri)]
                assert np.linalg.norm(np.cross(b - a, c - a)) > 0.0


def test_flip_repairs_inward_diagonal():
    cell = TrilinearCell.from_coeffs([0, -1, 0, -1, 0, 0, 0, 0])  # -grad g = (1, 0, 1)
    local = np.array([(0, 0, 0), (2, 0, 0), (2, 2, 0), (0, 1, -1.5)], dtype=float)
    bad = [(0, 1, 2), (0, 2, 3)]
    assert facing(cell, local, bad[1]) < 0.0
    fixed = improve_by_flips(cell, local, bad, local[:, :2].copy(), 1.0)
    assert sorted(fixed) == [(0, 1, 3), (1, 2, 3)]
    assert all(facing(cell, local, tri) > 0.0 for tri in fixed)


def test_transition_cells_face_outward(sphere_field):
    grid = build_grid(sphere_field)
    leafset = refine(initial_grid(sphere_field, grid, 2.0, 6), sphere_field, grid, 0.1, 6)
    jobs = [job for job in contour_jobs(leafset) if any(f.size < job.placement.size for f in job.facelets)]
    assert jobs
    for job in jobs:
        result = contour_cell(job)
        assert result.fallback_patches == 0
        if result.triangles:
            _assert_outward(job.cell, _mesh(result))
