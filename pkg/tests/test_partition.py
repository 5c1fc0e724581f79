import logging
import math
from collections import defaultdict

import numpy as np
import pytest

from gmsurf.models.atoms import Atom, GaussianField
from gmsurf.models.octree import DISCARD
from gmsurf.models.tensors import CoeffTensor
from gmsurf.services.bounds import high_order_norm
from gmsurf.services.molmodel import build_grid
from gmsurf.services.oracle import surface_samples
from gmsurf.services.partition import (
    RefineContext,
    cell_facelets,
    child_coefficient_ranges,
    contour_jobs,
    estimate_cube,
    initial_grid,
    nudge,
    refine,
    subdivide_tensor,
)
from gmsurf.services.polyfit import assemble_tensor, eval_tensor_many
from gmsurf.utils.lattice import corners

UNIT = np.array([[-1.0, 1.0]] * 3)
TAU = 0.2


@pytest.fixture(scope="module")
def sphere():
    field = GaussianField((Atom((0.0, 0.0, 0.0), 2.0),))
    grid = build_grid(field)
    cubes = initial_grid(field, grid, 2.0, 6)
    return field, grid, refine(cubes, field, grid, TAU, 6)


def test_subdivide_constant():
    data = np.zeros((4, 4, 4))
    data[0, 0, 0] = 3.0
    for octant in range(8):
        child = subdivide_tensor(CoeffTensor(data, UNIT), octant)
        assert child.data[0, 0, 0] == pytest.approx(3.0)
        assert np.abs(child.data).sum() == pytest.approx(3.0)


def test_subdivide_identity_on_upper_half():
    data = np.zeros((4, 4, 4))
    data[1, 0, 0] = 1.0
    child = subdivide_tensor(CoeffTensor(data, UNIT), 1)
    assert child.data[0, 0, 0] == pytest.approx(0.5)
    assert child.data[1, 0, 0] == pytest.approx(0.5)
    assert np.allclose(child.bounds[0], [0.0, 1.0])
    assert np.allclose(child.bounds[1], [-1.0, 0.0])


def test_subdivide_preserves_values(rng):
    parent = CoeffTensor(rng.normal(size=(4, 4, 4)), UNIT)
    for octant in range(8):
        child = subdivide_tensor(parent, octant)
        local = rng.uniform(-1.0, 1.0, (50, 3))
        bits = np.array([octant & 1, (octant >> 1) & 1, (octant >> 2) & 1])
        mapped = (local + np.where(bits == 1, 1.0, -1.0)) / 2.0
        assert np.allclose(eval_tensor_many(child, local), eval_tensor_many(parent, mapped), atol=1e-12)


def test_child_ranges_match_subdivision(rng):
    parent = CoeffTensor(rng.normal(size=(4, 4, 4)), UNIT)
    ranges = child_coefficient_ranges(parent)
    assert ranges.shape == (8, 2)
    local = rng.uniform(-1.0, 1.0, (200, 3))
    for octant in range(8):
        child = subdivide_tensor(parent, octant)
        assert ranges[octant, 0] == pytest.approx(child.data[0, 0, 0] - np.abs(child.data).sum() + abs(child.data[0, 0, 0]))
        values = eval_tensor_many(child, local)
        assert ranges[octant, 0] <= values.min() + 1e-12
        assert values.max() <= ranges[octant, 1] + 1e-12


def test_initial_grid_covers_influence_ball(sphere_field):
    grid = build_grid(sphere_field)
    cubes = initial_grid(sphere_field, grid, 4.0)
    rho = math.sqrt(4.0 + math.log(1e9))
    bounds = np.array([cube.bounds for cube in cubes])
    assert np.all(bounds[:, :, 0].min(axis=0) <= -rho)
    assert np.all(bounds[:, :, 1].max(axis=0) >= rho)
    assert np.allclose(bounds[:, :, 1] - bounds[:, :, 0], 4.0)
    frame = cubes[0].frame
    assert len(cubes) == math.prod(frame.counts)


def test_initial_grid_two_far_atoms():
    field = GaussianField((Atom((0.0, 0.0, 0.0), 1.5), Atom((10.0, 0.0, 0.0), 1.5)))
    cubes = initial_grid(field, build_grid(field), 4.0)
    bounds = np.array([cube.bounds for cube in cubes])
    rho = field.influence_radii
    assert bounds[:, 0, 0].min() <= -rho[0]
    assert bounds[:, 0, 1].max() >= 10.0 + rho[1]


def test_initial_grid_rejects_empty():
    field = GaussianField(())
    with pytest.raises(ValueError):
        initial_grid(field, build_grid(field), 4.0)


def test_far_cube_discarded(sphere_field):
    grid = build_grid(sphere_field)
    cubes = initial_grid(sphere_field, grid, 4.0)
    context = RefineContext(sphere_field, grid, cubes[0].frame, 1e-2, 8)
    assert estimate_cube(context, (0, 0, 0, 0)).status == DISCARD


def test_leaves_meet_tolerance(sphere):
    field, grid, leafset = sphere
    checked = 0
    for key in leafset.keys():
        if key in leafset.closure or key in leafset.forced:
            continue
        tensor = assemble_tensor(field, grid, leafset.frame.bounds(key))
        assert high_order_norm(tensor) <= TAU * field.isovalue * 1.0001
        checked += 1
    assert checked > 0


def test_leaves_straddle_sphere(sphere):
    _, _, leafset = sphere
    for key in leafset.keys():
        bounds = leafset.frame.bounds(key)
        center = bounds.mean(axis=1)
        diagonal = math.sqrt(3.0) * (bounds[0, 1] - bounds[0, 0])
        assert abs(np.linalg.norm(center) - 2.0) <= 1.5 * diagonal


def test_two_to_one_balance(sphere):
    _, _, leafset = sphere
    for key, neighbors in leafset.adjacency.items():
        for other in neighbors:
            assert abs(key[0] - other[0]) <= 1


def test_corner_values_are_shared(sphere):
    _, _, leafset = sphere
    for key in leafset.keys():
        cell = leafset.cells[key]
        for idx, p in corners(leafset.frame, key):
            assert cell.corners[idx] == leafset.corner_values[p]


def test_surface_samples_are_covered(sphere):
    field, grid, leafset = sphere
    points, skipped = surface_samples(field, 60, grid)
    assert skipped == 0
    frame = leafset.frame
    for p in points:
        lattice = tuple(int(v) for v in np.floor((p - np.array(frame.origin)) / frame.unit))
        assert leafset.leaf_at(lattice) is not None


def test_refine_is_deterministic(sphere):
    field, grid, leafset = sphere
    again = refine(initial_grid(field, grid, 2.0, 6), field, grid, TAU, 6)
    assert again.keys() == leafset.keys()
    assert again.corner_values == leafset.corner_values


def test_same_face_values_agree(sphere):
    _, _, leafset = sphere
    S = set(leafset.corner_values)
    seen = {}
    shared = 0
    for key in leafset.keys():
        for facelet in cell_facelets(leafset.frame, key, S, leafset.corner_values):
            if facelet.key in seen:
                assert np.array_equal(seen[facelet.key], facelet.values)
                shared += 1
            else:
                seen[facelet.key] = facelet.values
    assert shared > 0


def test_contour_jobs_registry_uses_face_keys(sphere):
    _, _, leafset = sphere
    jobs = contour_jobs(leafset)
    assert [job.key for job in jobs] == leafset.keys()
    counts = defaultdict(int)
    for job in jobs:
        keys = {f.key for f in job.facelets}
        assert set(job.registry) <= keys
        for points in job.registry.values():
            for point in points:
                counts[point.key] += 1
    # конец складки на целой грани виден обеим ячейкам
    assert all(n in (1, 2) for n in counts.values())


def test_forced_leaves_are_reported(sphere_field, caplog):
    grid = build_grid(sphere_field)
    cubes = initial_grid(sphere_field, grid, 4.0, 1)
    with caplog.at_level(logging.WARNING):
        leafset = refine(cubes, sphere_field, grid, 1e-6, 1)
    assert leafset.forced
    assert any("max_depth" in record.getMessage() for record in caplog.records)


def test_refine_rejects_non_positive_tau(sphere_field):
    grid = build_grid(sphere_field)
    with pytest.raises(ValueError):
        refine(initial_grid(sphere_field, grid, 4.0), sphere_field, grid, 0.0, 4)


def test_nudge():
    assert nudge(1.0, 1.0) < 1.0
    assert nudge(1.0 + 1e-14, 1.0) < 1.0
    assert nudge(1.5, 1.0) == 1.5


def test_two_atom_samples_are_covered(field_grid):
    field, grid = field_grid
    leafset = refine(initial_grid(field, grid, 2.0, 6), field, grid, TAU, 6)
    points, _ = surface_samples(field, 80, grid)
    frame = leafset.frame
    for p in points:
        lattice = tuple(int(v) for v in np.floor((p - np.array(frame.origin)) / frame.unit))
        assert leafset.leaf_at(lattice) is not None
