"""Обработчики подкоманд: mesh, check, stats, oracle"""
import asyncio
import functools
import logging
from typing import Awaitable, Callable

from gmsurf.models.atoms import GaussianField
from gmsurf.services.formatter import format_key_values, format_report, report_values
from gmsurf.services.meshkit import analyze
from gmsurf.services.oracle import mc_reference
from gmsurf.services.pipeline import run_mesh
from gmsurf.services.storage import load_off, load_pqr, save_off, save_report
from gmsurf.utils.config import Config
from gmsurf.utils.constants import EXIT_DEFECTS, EXIT_ERROR, EXIT_OK
from gmsurf.utils.errors import ConfigError, GmsurfError

logger = logging.getLogger(__name__)

Handler = Callable[[Config], Awaitable[int]]


def guarded(handler: Handler) -> Handler:
    """Ошибки мешера превращаются в лог и код выхода 1"""

    @functools.wraps(handler)
    async def wrapper(config: Config) -> int:
        try:
            return await handler(config)
        except GmsurfError as e:
            logger.error(f"Ошибка {handler.__name__}: {e}")
            return EXIT_ERROR

    return wrapper


def _require_input(config: Config) -> None:
    if config.input_path is None:
        raise ConfigError("не указан входной файл (--in)")


async def _emit(config: Config, text: str, values: dict) -> None:
    print(text, end="")
    if config.report_path is not None:
        await save_report(format_key_values(values), config.report_path)


@guarded
async def cmd_mesh(config: Config) -> int:
    """PQR -> OFF с проверкой сетки"""
    _require_input(config)
    atoms = await load_pqr(config.input_path)
    run = await run_mesh(config, atoms)
    if config.output_path is not None:
        await save_off(run.mesh, config.output_path)
    extra = {"atoms": run.atoms, "leaves": run.leaves, "forced_leaves": run.forced_leaves}
    text = format_report("Поверхность построена", run.report, extra, run.timings)
    await _emit(config, text, report_values(run.report, extra, run.timings))
    return EXIT_OK if run.report.is_clean else EXIT_DEFECTS


@guarded
async def cmd_check(config: Config) -> int:
    """Многообразность, самопересечения и метрики OFF-файла"""
    _require_input(config)
    mesh = await load_off(config.input_path)
    loop = asyncio.get_running_loop()
    report = await loop.run_in_executor(None, analyze, mesh)
    await _emit(config, format_report(f"Проверка {config.input_path}", report), report_values(report))
    return EXIT_OK if report.is_clean else EXIT_DEFECTS


@guarded
async def cmd_stats(config: Config) -> int:
    """Метрики OFF-файла без поиска пересечений"""
    _require_input(config)
    mesh = await load_off(config.input_path)
    report = analyze(mesh, intersections=False)
    await _emit(config, format_report(f"Метрики {config.input_path}", report), report_values(report))
    return EXIT_OK if report.is_clean else EXIT_DEFECTS


@guarded
async def cmd_oracle(config: Config) -> int:
    """Эталонная сетка marching cubes"""
    _require_input(config)
    atoms = await load_pqr(config.input_path)
    field = GaussianField(tuple(atoms), config.decay, config.isovalue, config.cutoff_eps)
    loop = asyncio.get_running_loop()
    mesh = await loop.run_in_executor(None, mc_reference, field, config.spacing, config.oracle_max_points)
    if config.output_path is not None:
        await save_off(mesh, config.output_path)
    report = analyze(mesh, intersections=False)
    extra = {"atoms": len(atoms), "spacing": config.spacing}
    await _emit(config, format_report("Эталон marching cubes", report, extra), report_values(report, extra))
    return EXIT_OK if report.is_clean else EXIT_DEFECTS
