"""Асинхронное чтение и запись файлов"""
import logging
from pathlib import Path
from typing import List, Union

import aiofiles

from gmsurf.models.atoms import Atom
from gmsurf.models.mesh import TriangleMesh
from gmsurf.services.meshkit import format_off, read_off
from gmsurf.services.molmodel import parse_pqr
from gmsurf.utils.errors import GmsurfError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


async def _read_text(path: PathLike) -> str:
    try:
        async with aiofiles.open(path, "r", encoding="utf-8", errors="replace") as f:
            return await f.read()
    except OSError as e:
        raise GmsurfError(f"не удалось прочитать {path}: {e}") from e


async def _write_text(path: PathLike, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(path, "w", encoding="utf-8") as f:
            await f.write(text)
    except OSError as e:
        raise GmsurfError(f"не удалось записать {path}: {e}") from e


async def load_pqr(path: PathLike) -> List[Atom]:
    atoms = parse_pqr(await _read_text(path))
    logger.info(f"Загружено {len(atoms)} атомов из {path}")
    return atoms


async def load_off(path: PathLike) -> TriangleMesh:
    mesh = read_off(await _read_text(path))
    logger.info(f"Загружена сетка {path}: {mesh.vertex_count} вершин, {mesh.triangle_count} треугольников")
    return mesh


async def save_off(mesh: TriangleMesh, path: PathLike) -> None:
    await _write_text(path, format_off(mesh))
    logger.info(f"Сетка сохранена в {path}")


async def save_report(text: str, path: PathLike) -> None:
    await _write_text(path, text)
    logger.info(f"Отчёт сохранён в {path}")
