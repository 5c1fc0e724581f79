import asyncio
import math
import time

import numpy as np
import pytest

from gmsurf.models.atoms import Atom, GaussianField
from gmsurf.services.meshkit import metrics
from gmsurf.services.molmodel import build_grid, eval_field_many, parse_pqr
from gmsurf.services.oracle import coverage_distances, mc_reference, replicate_cluster, surface_samples
from gmsurf.services.pipeline import mesh_field, run_mesh
from gmsurf.utils.config import Config
from gmsurf.utils.errors import EmptyInputError
from tests.conftest import fragment_pqr

FAST = dict(tau=0.1, cell=2.0, max_depth=6)


@pytest.fixture(scope="module")
def sphere_run():
    field = GaussianField((Atom((0.0, 0.0, 0.0), 2.0),))
    return field, asyncio.run(mesh_field(field, **FAST))


def test_sphere_is_closed_manifold(sphere_run):
    _, run = sphere_run
    report = run.report
    assert report.is_clean
    assert report.euler_characteristic == 2
    assert report.components == 1
    assert report.fallback_patches == 0
    assert run.forced_leaves == 0
    assert run.leaves > 0
    assert set(run.timings) == {"grid", "refine", "contour", "weld", "analyze"}


def test_sphere_geometry(sphere_run):
    _, run = sphere_run
    assert run.report.area == pytest.approx(16.0 * math.pi, rel=5e-2)
    assert run.report.volume == pytest.approx(32.0 * math.pi / 3.0, rel=5e-2)
    radii = np.linalg.norm(run.mesh.vertices, axis=1)
    assert np.all(np.abs(radii - 2.0) < 0.15)
    centroids = run.mesh.vertices[run.mesh.triangles].mean(axis=1)
    assert np.einsum("ij,ij->i", run.mesh.face_normals(), centroids).min() > 0


def test_sphere_covers_surface_samples(sphere_run):
    field, run = sphere_run
    points, _ = surface_samples(field, 200)
    assert coverage_distances(run.mesh, points).max() < 0.15


async def test_workers_do_not_change_the_mesh(sphere_run):
    field, run = sphere_run
    parallel = await mesh_field(field, workers=2, **FAST)
    assert np.array_equal(parallel.mesh.vertices, run.mesh.vertices)
    assert np.array_equal(parallel.mesh.triangles, run.mesh.triangles)


async def test_decay_rescaling():
    field = GaussianField((Atom((1.0, 0.0, 0.0), 2.0),), decay=2.0)
    run = await mesh_field(field, **FAST)
    assert run.report.is_clean
    radii = np.linalg.norm(run.mesh.vertices - np.array([1.0, 0.0, 0.0]), axis=1)
    assert np.all(np.abs(radii - 2.0) < 0.15)


async def test_two_atoms():
    field = GaussianField((Atom((0.0, 0.0, 0.0), 1.6), Atom((2.2, 0.0, 0.0), 1.4)))
    run = await mesh_field(field, **FAST)
    assert run.report.is_clean
    assert run.report.euler_characteristic == 2
    assert run.report.components == 1


async def test_run_mesh_requires_atoms():
    with pytest.raises(EmptyInputError):
        await run_mesh(Config(), [])


@pytest.mark.slow
async def test_default_tolerance_matches_reference():
    field = GaussianField((Atom((0.0, 0.0, 0.0), 1.6), Atom((2.2, 0.0, 0.0), 1.4), Atom((1.0, 2.0, 0.5), 1.5)))
    run = await mesh_field(field, workers=2)
    assert run.report.is_clean
    reference = mc_reference(field, 0.1)
    expected = metrics(reference)
    assert run.report.area == pytest.approx(expected.area, rel=3e-2)
    assert run.report.volume == pytest.approx(expected.volume, rel=3e-2)
    points, _ = surface_samples(field, 500)
    assert coverage_distances(run.mesh, points).max() < 0.05


@pytest.mark.slow
async def test_separate_copies_stay_separate():
    base = [Atom((0.0, 0.0, 0.0), 1.6), Atom((2.2, 0.0, 0.0), 1.4)]
    field = GaussianField(tuple(replicate_cluster(base, 8)))
    run = await mesh_field(field, workers=2, **FAST)
    assert run.report.is_clean
    assert run.report.components == 8
    assert run.report.euler_characteristic == 16


def _residuals(field, mesh):
    values, grad = eval_field_many(field, build_grid(field), mesh.vertices)
    return np.abs(values - field.isovalue) / np.linalg.norm(grad, axis=1)


@pytest.mark.slow
async def test_sphere_at_default_tolerance():
    field = GaussianField((Atom((0.0, 0.0, 0.0), 2.0),))
    run = await mesh_field(field, workers=2)
    assert run.report.is_clean
    assert run.report.euler_characteristic == 2
    assert run.report.area == pytest.approx(16.0 * math.pi, rel=2e-2)
    assert run.report.volume == pytest.approx(32.0 * math.pi / 3.0, rel=2e-2)


@pytest.mark.slow
async def test_residual_shrinks_with_tau():
    field = GaussianField((Atom((0.0, 0.0, 0.0), 1.6), Atom((2.2, 0.0, 0.0), 1.4)))
    medians = []
    for tau in (0.2, 0.1, 0.05, 0.025):
        run = await mesh_field(field, tau=tau, cell=2.0, max_depth=7, workers=2)
        assert run.report.is_clean
        medians.append(float(np.median(_residuals(field, run.mesh))))
    assert all(b < a for a, b in zip(medians, medians[1:]))


def _fragment(n: int) -> GaussianField:
    return GaussianField(tuple(parse_pqr(fragment_pqr(n, seed=n))))


@pytest.mark.slow
@pytest.mark.parametrize("atoms", [10, 39, 400, 906], ids=["gly", "adp", "2lwc", "fas2"])
async def test_molecule_scale_inputs_have_no_defects(atoms):
    run = await mesh_field(_fragment(atoms), tau=0.05, cell=2.0, max_depth=7, workers=4)
    report = run.report
    assert report.non_manifold_edges == 0
    assert report.non_manifold_vertices == 0
    assert report.intersecting_pairs == 0
    assert report.fallback_patches == 0


@pytest.mark.slow
@pytest.mark.parametrize("atoms", [
    (Atom((0.0, 0.0, 0.0), 2.0),),
    (Atom((0.0, 0.0, 0.0), 1.6), Atom((2.2, 0.0, 0.0), 1.4)),
], ids=["sphere", "two-atoms"])
async def test_matches_reference_mesh(atoms):
    field = GaussianField(atoms)
    run = await mesh_field(field, tau=1e-2, cell=2.0, max_depth=7, workers=2)
    assert run.report.is_clean
    expected = metrics(mc_reference(field, 0.1))
    assert run.report.area == pytest.approx(expected.area, rel=3e-2)
    assert run.report.volume == pytest.approx(expected.volume, rel=3e-2)


@pytest.mark.slow
async def test_tau_sweep_converges():
    field = _fragment(10)
    areas, volumes = [], []
    for tau in (4e-2, 1e-2, 2.5e-3, 6e-4):
        run = await mesh_field(field, tau=tau, workers=4)
        assert run.report.is_clean
        areas.append(run.report.area)
        volumes.append(run.report.volume)
    area_steps = np.abs(np.diff(areas))
    volume_steps = np.abs(np.diff(volumes))
    assert np.all(np.diff(area_steps) < 0)
    assert np.all(np.diff(volume_steps) < 0)
    expected = metrics(mc_reference(field, 0.1))
    assert areas[-1] == pytest.approx(expected.area, rel=3e-2)
    assert volumes[-1] == pytest.approx(expected.volume, rel=3e-2)


@pytest.mark.slow
async def test_work_grows_linearly_with_atoms():
    base = parse_pqr(fragment_pqr(20, seed=3))
    sizes, leaves, seconds, components = [], [], [], []
    for k in (1, 2, 4, 8, 16):
        field = GaussianField(tuple(replicate_cluster(base, k)))
        start = time.perf_counter()
        run = await mesh_field(field, intersections=False, **FAST)
        seconds.append(time.perf_counter() - start)
        sizes.append(len(field))
        leaves.append(run.leaves)
        components.append(run.report.components)
    leaf_slope = np.polyfit(np.log(sizes), np.log(leaves), 1)[0]
    time_slope = np.polyfit(np.log(sizes), np.log(seconds), 1)[0]
    assert components == [k * components[0] for k in (1, 2, 4, 8, 16)]
    assert 0.9 <= leaf_slope <= 1.1
    assert 0.8 <= time_slope <= 1.2
