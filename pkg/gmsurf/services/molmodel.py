"""Атомная модель: разбор PQR, гауссово поле и его градиент"""
import io
import logging
from collections import defaultdict
from typing import Iterable, List, Tuple, Union

import numpy as np

from gmsurf.models.atoms import Atom, GaussianField, NeighborGrid
from gmsurf.utils.errors import PqrParseError, EmptyInputError

logger = logging.getLogger(__name__)

ATOM_RECORDS = ("ATOM", "HETATM")


def _lines(text: Union[str, bytes, Iterable[str]]) -> Iterable[str]:
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    if isinstance(text, str):
        return io.StringIO(text)
    return text


def parse_pqr(text: Union[str, bytes, Iterable[str]]) -> List[Atom]:
    """Разбирает PQR: последние два поля записи - заряд и радиус, три перед ними - x, y, z

    Колонки считаются по пробелам, поэтому необязательный chain ID не мешает.
    """
    atoms: List[Atom] = []
    for lineno, line in enumerate(_lines(text), start=1):
        tokens = line.split()
        if not tokens or tokens[0].upper() not in ATOM_RECORDS:
            continue
        if len(tokens) < 6:
            raise PqrParseError(f"слишком мало полей в записи {tokens[0]}", lineno)
        try:
            x, y, z, charge, radius = (float(t) for t in tokens[-5:])
        except ValueError as e:
            raise PqrParseError(f"некорректное числовое поле ({e})", lineno) from None
        if not radius > 0:
            raise PqrParseError(f"запись отклонена: радиус {radius} не положителен", lineno)
        try:
            atoms.append(Atom((x, y, z), radius, charge))
        except ValueError as e:
            raise PqrParseError(str(e), lineno) from None
    if not atoms:
        raise EmptyInputError("во входных данных нет записей ATOM/HETATM")
    logger.debug(f"Прочитано атомов: {len(atoms)}")
    return atoms


def build_grid(field: GaussianField) -> NeighborGrid:
    """Раскладывает атомы по ячейкам решётки со стороной max(rho_i)"""
    rho = field.influence_radii
    if len(field) == 0:
        return NeighborGrid(np.zeros(3), 1.0, {}, rho)
    cell_size = float(rho.max())
    lo = (field.centers - rho[:, None]).min(axis=0)
    origin = lo - cell_size
    buckets = defaultdict(list)
    for index, (center, radius) in enumerate(zip(field.centers, rho)):
        a = np.floor((center - radius - origin) / cell_size).astype(int)
        b = np.floor((center + radius - origin) / cell_size).astype(int)
        for i in range(a[0], b[0] + 1):
            for j in range(a[1], b[1] + 1):
                for k in range(a[2], b[2] + 1):
                    buckets[(i, j, k)].append(index)
    cells = {key: np.array(indices, dtype=int) for key, indices in buckets.items()}
    return NeighborGrid(origin, cell_size, cells, rho)


def atoms_near_box(field: GaussianField, grid: NeighborGrid, lo, hi) -> np.ndarray:
    """Атомы, шары влияния которых пересекают бокс [lo, hi]"""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    idx = grid.candidates(lo, hi)
    if idx.size == 0:
        return idx
    centers = field.centers[idx]
    nearest = np.clip(centers, lo, hi)
    d2 = ((centers - nearest) ** 2).sum(axis=1)
    return idx[d2 <= grid.rho[idx] ** 2]


def eval_field(field: GaussianField, grid: NeighborGrid, p) -> Tuple[float, np.ndarray]:
    """phi и grad phi в точке p по атомам, в шар влияния которых она попадает"""
    p = np.asarray(p, dtype=float)
    idx = grid.cells.get(grid.cell_of(p))
    if idx is None or idx.size == 0:
        return 0.0, np.zeros(3)
    diff = p - field.centers[idx]
    d2 = (diff ** 2).sum(axis=1)
    inside = d2 <= grid.rho[idx] ** 2
    if not inside.any():
        return 0.0, np.zeros(3)
    diff, d2 = diff[inside], d2[inside]
    r2 = field.radii[idx[inside]] ** 2
    terms = np.exp(-field.decay * (d2 - r2))
    phi = float(terms.sum())
    grad = -2.0 * field.decay * (terms[:, None] * diff).sum(axis=0)
    return phi, grad


def eval_field_many(field: GaussianField, grid: NeighborGrid, points) -> Tuple[np.ndarray, np.ndarray]:
    """Векторная версия eval_field: точки группируются по ячейкам решётки"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    phi = np.zeros(len(points))
    grad = np.zeros((len(points), 3))
    if len(points) == 0 or not grid.cells:
        return phi, grad
    cell_idx = np.floor((points - grid.origin) / grid.cell_size).astype(int)
    groups = defaultdict(list)
    for n, key in enumerate(map(tuple, cell_idx)):
        groups[key].append(n)
    for key, members in groups.items():
        idx = grid.cells.get(key)
        if idx is None:
            continue
        members = np.array(members)
        diff = points[members][:, None, :] - field.centers[idx][None, :, :]
        d2 = (diff ** 2).sum(axis=2)
        terms = np.exp(-field.decay * (d2 - field.radii[idx] ** 2))
        terms[d2 > grid.rho[idx] ** 2] = 0.0
        phi[members] = terms.sum(axis=1)
        grad[members] = -2.0 * field.decay * (terms[:, :, None] * diff).sum(axis=1)
    return phi, grad


def eval_field_direct(field: GaussianField, p) -> Tuple[float, np.ndarray]:
    """Полная сумма по всем атомам без обрезки (эталон для проверок)"""
    p = np.asarray(p, dtype=float)
    diff = p - field.centers
    terms = np.exp(-field.decay * ((diff ** 2).sum(axis=1) - field.radii ** 2))
    return float(terms.sum()), -2.0 * field.decay * (terms[:, None] * diff).sum(axis=0)


def influence_box(field: GaussianField) -> Tuple[np.ndarray, np.ndarray]:
    """Габариты объединения шаров влияния"""
    rho = field.influence_radii
    return (field.centers - rho[:, None]).min(axis=0), (field.centers + rho[:, None]).max(axis=0)


def sample_grid(field: GaussianField, origin, spacing: float, dims) -> np.ndarray:
    """Значения phi на равномерной сетке, атом за атомом по его окрестности"""
    origin = np.asarray(origin, dtype=float)
    dims = tuple(int(d) for d in dims)
    values = np.zeros(dims)
    rho = field.influence_radii
    axes = [origin[k] + spacing * np.arange(dims[k]) for k in range(3)]
    for center, radius, reach in zip(field.centers, field.radii, rho):
        lo = np.maximum(np.floor((center - reach - origin) / spacing).astype(int), 0)
        hi = np.minimum(np.ceil((center + reach - origin) / spacing).astype(int) + 1, dims)
        if np.any(hi <= lo):
            continue
        gx = np.exp(-field.decay * (axes[0][lo[0]:hi[0]] - center[0]) ** 2)
        gy = np.exp(-field.decay * (axes[1][lo[1]:hi[1]] - center[1]) ** 2)
        gz = np.exp(-field.decay * (axes[2][lo[2]:hi[2]] - center[2]) ** 2)
        block = np.exp(field.decay * radius ** 2) * gx[:, None, None] * gy[None, :, None] * gz[None, None, :]
        values[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] += block
    return values
