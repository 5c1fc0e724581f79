"""Независимый эталон: marching cubes на плотной сетке и точки поверхности по лучам"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree
from skimage.measure import marching_cubes

from gmsurf.models.atoms import Atom, GaussianField, NeighborGrid
from gmsurf.models.mesh import TriangleMesh
from gmsurf.services.meshkit import orient_outward
from gmsurf.services.molmodel import build_grid, eval_field_many, influence_box, sample_grid
from gmsurf.utils.config import ORACLE_MAX_POINTS
from gmsurf.utils.constants import NUDGE_TOL, NUDGE_SHIFT, RAY_STEP, RAY_XTOL
from gmsurf.utils.errors import OracleMemoryError

logger = logging.getLogger(__name__)


def grid_dims(field: GaussianField, spacing: float) -> Tuple[np.ndarray, Tuple[int, int, int]]:
    """Начало и размеры равномерной сетки над шарами влияния с запасом в два шага"""
    lo, hi = influence_box(field)
    origin = lo - 2.0 * spacing
    dims = tuple(int(d) for d in np.ceil((hi - lo + 4.0 * spacing) / spacing).astype(int) + 1)
    return origin, dims


@dataclass
class DenseGrid:
    """Значения phi на равномерной сетке: values[i, j, k] в точке origin + spacing * (i, j, k)"""
    origin: np.ndarray
    spacing: float
    dims: Tuple[int, int, int]
    values: np.ndarray


def dense_grid(field: GaussianField, spacing: float, max_points: Optional[int] = None) -> DenseGrid:
    """Значения phi на равномерной сетке поверх шаров влияния"""
    if not spacing > 0:
        raise ValueError(f"шаг сетки должен быть положительным: {spacing}")
    max_points = ORACLE_MAX_POINTS if max_points is None else max_points
    origin, dims = grid_dims(field, spacing)
    total = math.prod(dims)
    if total > max_points:
        raise OracleMemoryError(
            f"плотная сетка {dims[0]}x{dims[1]}x{dims[2]} ({total} точек) больше лимита {max_points}; "
            f"увеличьте шаг --spacing"
        )
    logger.info(f"Оракул: сетка {dims[0]}x{dims[1]}x{dims[2]}, шаг {spacing} Å")
    return DenseGrid(origin, spacing, dims, sample_grid(field, origin, spacing, dims))


def mc_reference(field: GaussianField, spacing: float, max_points: Optional[int] = None) -> TriangleMesh:
    """Сетка marching cubes по phi = c с нормалями наружу"""
    dense = dense_grid(field, spacing, max_points)
    c = field.isovalue
    values = dense.values.copy()
    values[np.abs(values - c) <= NUDGE_TOL * c] = c * (1.0 - NUDGE_SHIFT)
    if values.max() <= c:
        return TriangleMesh()
    verts, faces, _, _ = marching_cubes(values, level=c, spacing=(spacing,) * 3, allow_degenerate=False)
    mesh = TriangleMesh(verts + dense.origin, faces)
    logger.info(f"Оракул: {mesh.vertex_count} вершин, {mesh.triangle_count} треугольников")
    return orient_outward(mesh, field)


def fibonacci_directions(n: int) -> np.ndarray:
    """n почти равномерных единичных направлений"""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    theta = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def surface_samples(field: GaussianField, n: int, grid: Optional[NeighborGrid] = None) -> Tuple[np.ndarray, int]:
    """Точки phi = c на лучах из центров атомов; возвращает (точки, число пропущенных лучей)"""
    if n <= 0:
        raise ValueError(f"число точек должно быть положительным: {n}")
    grid = grid or build_grid(field)
    c = field.isovalue
    reach = float(field.influence_radii.max()) * 2.0
    steps = np.arange(0.0, reach + RAY_STEP, RAY_STEP)
    directions = fibonacci_directions(n)
    points: List[np.ndarray] = []
    skipped = 0
    for i, direction in enumerate(directions):
        center = field.centers[i % len(field)]
        ray = center[None, :] + steps[:, None] * direction[None, :]
        values, _ = eval_field_many(field, grid, ray)
        below = np.flatnonzero(values < c)
        if values[0] < c or below.size == 0:
            skipped += 1
            continue
        k = int(below[0])

        def residual(t: float) -> float:
            phi, _ = eval_field_many(field, grid, center + t * direction)
            return float(phi[0]) - c

        t = brentq(residual, steps[k - 1], steps[k], xtol=RAY_XTOL)
        points.append(center + t * direction)
    if skipped:
        logger.warning(f"⚠️ Лучей без пересечения с поверхностью: {skipped} из {n}")
    return np.array(points).reshape(-1, 3), skipped


def replicate_cluster(atoms: Sequence[Atom], k: int, gap: float = 4.0) -> List[Atom]:
    """k копий кластера в узлах кубической решётки с зазором gap между габаритами"""
    if k < 1:
        raise ValueError(f"число копий должно быть не меньше 1: {k}")
    centers = np.array([a.center for a in atoms], dtype=float)
    radii = np.array([a.radius for a in atoms], dtype=float)
    extent = (centers + radii[:, None]).max(axis=0) - (centers - radii[:, None]).min(axis=0)
    step = extent + gap
    side = 1
    while side ** 3 < k:
        side += 1
    copies: List[Atom] = []
    for n in range(k):
        i, j, l = n // (side * side), (n // side) % side, n % side
        shift = step * np.array([i, j, l], dtype=float)
        copies.extend(
            Atom(tuple(float(v) for v in np.asarray(a.center) + shift), a.radius, a.charge) for a in atoms
        )
    return copies


def _segment_distance(p, a, b) -> np.ndarray:
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def point_triangle_distance(p, a, b, c) -> np.ndarray:
    """Расстояния от точки до треугольников (векторизовано по треугольникам)"""
    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    safe = np.where(nn > 0, nn, 1.0)
    height = np.einsum("ij,ij->i", p - a, n) / safe
    proj = p - height[:, None] * n
    u = np.einsum("ij,ij->i", np.cross(c - b, proj - b), n) / safe
    v = np.einsum("ij,ij->i", np.cross(a - c, proj - c), n) / safe
    inside = (nn > 0) & (u >= 0) & (v >= 0) & (u + v <= 1)
    plane = np.abs(height) * np.sqrt(nn)
    edges = np.minimum(np.minimum(_segment_distance(p, a, b), _segment_distance(p, b, c)), _segment_distance(p, c, a))
    return np.where(inside, plane, edges)


def coverage_distances(mesh: TriangleMesh, points, candidates: int = 16) -> np.ndarray:
    """Расстояние от каждой точки до ближайшего треугольника (поиск среди ближайших по центрам)"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if mesh.is_empty():
        return np.full(len(points), np.inf)
    tri = mesh.vertices[mesh.triangles]
    tree = cKDTree(tri.mean(axis=1))
    k = min(candidates, len(tri))
    _, idx = tree.query(points, k=k)
    idx = np.asarray(idx).reshape(len(points), k)
    best = np.full(len(points), np.inf)
    for column in range(k):
        t = tri[idx[:, column]]
        best = np.minimum(best, point_triangle_distance(points, t[:, 0], t[:, 1], t[:, 2]))
    return best
