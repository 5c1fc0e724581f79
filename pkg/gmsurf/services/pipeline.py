"""Стадии мешинга от атомов до проверенной сетки"""
import asyncio
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field as dc_field
from typing import Dict, Iterator, Sequence

from gmsurf.models.atoms import Atom, GaussianField
from gmsurf.models.mesh import MeshReport, TriangleMesh
from gmsurf.services.cellcontour import contour_cell
from gmsurf.services.meshkit import analyze, weld
from gmsurf.services.molmodel import build_grid
from gmsurf.services.partition import RefineContext, contour_jobs, initial_grid, refine
from gmsurf.utils.config import Config
from gmsurf.utils.constants import DEFAULT_CELL_TARGET, DEFAULT_MAX_DEPTH, DEFAULT_TAU
from gmsurf.utils.errors import EmptyInputError
from gmsurf.utils.workers import WorkerPool

logger = logging.getLogger(__name__)


@dataclass
class MeshRun:
    """Результат одного прогона: сетка, отчёт и счётчики стадий"""
    mesh: TriangleMesh
    report: MeshReport
    atoms: int
    leaves: int
    forced_leaves: int
    timings: Dict[str, float] = dc_field(default_factory=dict)


@contextmanager
def _stage(timings: Dict[str, float], name: str) -> Iterator[None]:
    start = time.perf_counter()
    yield
    timings[name] = time.perf_counter() - start
    logger.info(f"Стадия {name}: {timings[name]:.2f} с")


async def mesh_field(
    field: GaussianField,
    tau: float = DEFAULT_TAU,
    cell: float = DEFAULT_CELL_TARGET,
    max_depth: int = DEFAULT_MAX_DEPTH,
    workers: int = 1,
    intersections: bool = True,
) -> MeshRun:
    """Сетка поверхности phi = c.

    Всё считается для поля с D = 1 (координаты умножены на sqrt(D)), вершины
    в конце делятся обратно. Целевое ребро куба масштабируется так же.
    """
    if len(field) == 0:
        raise EmptyInputError("нет атомов для построения поверхности")
    loop = asyncio.get_running_loop()
    timings: Dict[str, float] = {}
    k = math.sqrt(field.decay)
    scaled = field.scaled()

    with _stage(timings, "grid"):
        grid = build_grid(scaled)
        cubes = initial_grid(scaled, grid, cell * k, max_depth)

    with _stage(timings, "refine"):
        context = RefineContext(scaled, grid, cubes[0].frame, tau, max_depth)
        with WorkerPool(workers, context) as pool:
            leafset = await loop.run_in_executor(None, lambda: refine(cubes, scaled, grid, tau, max_depth, run=pool.map))

    with _stage(timings, "contour"):
        jobs = contour_jobs(leafset)
        with WorkerPool(workers) as pool:
            cells = await pool.amap(contour_cell, jobs)

    with _stage(timings, "weld"):
        mesh = weld(cells)
        mesh = TriangleMesh(mesh.vertices / k, mesh.triangles)

    with _stage(timings, "analyze"):
        fallback = sum(cell_mesh.fallback_patches for cell_mesh in cells)
        report = analyze(mesh, intersections=intersections, fallback_patches=fallback)

    if fallback:
        logger.warning(f"⚠️ Патчей, триангулированных веером: {fallback}")
    logger.info(
        f"✅ Сетка готова: {mesh.vertex_count} вершин, {mesh.triangle_count} треугольников, "
        f"дефектов {report.defects}"
    )
    return MeshRun(mesh, report, len(field), len(leafset), len(leafset.forced), timings)


async def run_mesh(config: Config, atoms: Sequence[Atom]) -> MeshRun:
    """Прогон с параметрами из конфигурации"""
    if not atoms:
        raise EmptyInputError("во входных данных нет атомов")
    field = GaussianField(tuple(atoms), config.decay, config.isovalue, config.cutoff_eps)
    logger.info(
        f"Мешинг {len(field)} атомов: D={config.decay}, c={config.isovalue}, tau={config.tau}, "
        f"ребро {config.cell} Å, max_depth={config.max_depth}, процессов {config.workers}"
    )
    return await mesh_field(field, config.tau, config.cell, config.max_depth, config.workers)
