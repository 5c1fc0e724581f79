"""Кубическая аппроксимация поля на кубе в базисе Лежандра

Поле раскладывается в произведение одномерных множителей по осям;
каждый множитель проецируется на L0..L3 и поправляется так, чтобы
значения на концах отрезка совпадали точно (C0 между соседними кубами).
"""
import logging
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial import legendre

from gmsurf.models.atoms import GaussianField, NeighborGrid
from gmsurf.models.tensors import AxisCoeffs, CoeffTensor, TrilinearCell, CORNER_SIGNS
from gmsurf.services.molmodel import atoms_near_box
from gmsurf.utils.constants import POLY_DEGREE, QUADRATURE_POINTS, MIN_INTERVAL_WIDTH
from gmsurf.utils.errors import DegenerateIntervalError

logger = logging.getLogger(__name__)

NORMALIZATION = (2 * np.arange(POLY_DEGREE + 1) + 1) / 2.0
ENDPOINT_LEFT = (-1.0) ** np.arange(POLY_DEGREE + 1)


@lru_cache(maxsize=1)
def _quadrature() -> Tuple[np.ndarray, np.ndarray]:
    """Узлы и веса Гаусса-Лежандра с уже домноженными L_j(узел)"""
    nodes, weights = legendre.leggauss(QUADRATURE_POINTS)
    return nodes, weights[:, None] * legendre.legvander(nodes, POLY_DEGREE)


def _check_interval(a: float, b: float) -> None:
    if not b - a >= MIN_INTERVAL_WIDTH:
        raise DegenerateIntervalError(f"вырожденный отрезок [{a}, {b}]")


def _correct(raw: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Добавляет eps0*L2 + eps1*L3, чтобы полином совпал с left/right в -1 и +1"""
    at_left = raw @ ENDPOINT_LEFT
    at_right = raw.sum(axis=-1)
    du, dl = right - at_right, left - at_left
    corrected = raw.copy()
    corrected[..., POLY_DEGREE - 1] += (du + dl) / 2.0
    corrected[..., POLY_DEGREE] += (du - dl) / 2.0
    return corrected


def project_many(coords: np.ndarray, decay: float, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Проекции exp(-D(t - x_i)^2) для массива координат атомов: (raw, corrected), форма (n, 4)"""
    _check_interval(a, b)
    coords = np.asarray(coords, dtype=float).reshape(-1)
    nodes, weighted = _quadrature()
    t = (a + b) / 2.0 + nodes * (b - a) / 2.0
    samples = np.exp(-decay * (t[None, :] - coords[:, None]) ** 2)
    raw = samples @ weighted * NORMALIZATION
    left = np.exp(-decay * (a - coords) ** 2)
    right = np.exp(-decay * (b - coords) ** 2)
    return raw, _correct(raw, left, right)


def project_axis(
    atom_coord: float,
    decay: float,
    interval: Tuple[float, float],
    target: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> AxisCoeffs:
    """Проекция одной оси одного атома; target подменяет экспоненту (для проверок)"""
    a, b = float(interval[0]), float(interval[1])
    if target is None:
        raw, corrected = project_many(np.array([atom_coord]), decay, a, b)
        return AxisCoeffs(raw[0], corrected[0], (a, b))
    _check_interval(a, b)
    nodes, weighted = _quadrature()
    t = (a + b) / 2.0 + nodes * (b - a) / 2.0
    raw = np.asarray(target(t), dtype=float) @ weighted * NORMALIZATION
    ends = np.asarray(target(np.array([a, b])), dtype=float)
    return AxisCoeffs(raw, _correct(raw, ends[0], ends[1]), (a, b))


def assemble_tensor(field: GaussianField, grid: NeighborGrid, bounds, atoms: Optional[np.ndarray] = None) -> CoeffTensor:
    """A = sum_i exp(D r_i^2) b_i(1) (x) b_i(2) (x) b_i(3) по атомам вблизи куба"""
    bounds = np.asarray(bounds, dtype=float)
    if atoms is None:
        atoms = atoms_near_box(field, grid, bounds[:, 0], bounds[:, 1])
    if len(atoms) == 0:
        for a, b in bounds:
            _check_interval(a, b)
        return CoeffTensor(np.zeros((POLY_DEGREE + 1,) * 3), bounds)
    centers = field.centers[atoms]
    factors = [project_many(centers[:, k], field.decay, *bounds[k])[1] for k in range(3)]
    weights = np.exp(field.decay * field.radii[atoms] ** 2)
    data = np.einsum("n,ni,nj,nk->ijk", weights, *factors)
    return CoeffTensor(data, bounds)


def legendre_vector(t: float) -> np.ndarray:
    """Значения L0..L3 в точке t"""
    return legendre.legvander(np.asarray([t], dtype=float), POLY_DEGREE)[0]


def eval_tensor(t: CoeffTensor, p_local) -> float:
    """sum_ijk A_ijk L_i(x) L_j(y) L_k(z) в локальных координатах [-1,1]^3"""
    x, y, z = p_local
    return float(np.einsum("ijk,i,j,k->", t.data, legendre_vector(x), legendre_vector(y), legendre_vector(z)))


def eval_tensor_many(t: CoeffTensor, points_local) -> np.ndarray:
    """Значения полинома тензора в точках, заданных в локальных координатах [-1,1]^3"""
    pts = np.asarray(points_local, dtype=float).reshape(-1, 3)
    lx, ly, lz = (legendre.legvander(pts[:, k], POLY_DEGREE) for k in range(3))
    return np.einsum("ijk,ni,nj,nk->n", t.data, lx, ly, lz)


def collapse_trilinear(t: CoeffTensor) -> TrilinearCell:
    """Трилинейная интерполяция по значениям тензора в восьми углах"""
    values = eval_tensor_many(t, CORNER_SIGNS)
    return TrilinearCell.from_corners(values.reshape(2, 2, 2), t.bounds)
