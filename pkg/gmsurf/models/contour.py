"""Элементы контура ячейки: грани, точки на гранях, складки, патчи"""
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Tuple

import numpy as np

from gmsurf.models.tensors import TrilinearCell
from gmsurf.utils.lattice import CubeKey, Point

# Виды точек контура
EDGE = "edge"
FOLD = "fold"
MIDPOINT = "mid"
CRITICAL = "critical"
FAN = "fan"

FaceletKey = Tuple[int, Point, int]  # (ось нормали, начало на решётке, размер)


@dataclass(frozen=True)
class Placement:
    """Положение ячейки на решётке: начало и ребро в единицах решётки"""
    origin: Point = (0, 0, 0)
    size: int = 2

    def to_lattice(self, local) -> np.ndarray:
        return np.asarray(self.origin, dtype=float) + (np.asarray(local, dtype=float) + 1.0) * self.size / 2.0

    def to_local(self, lattice) -> np.ndarray:
        return (np.asarray(lattice, dtype=float) - np.asarray(self.origin, dtype=float)) * 2.0 / self.size - 1.0


@dataclass(frozen=True)
class Segment:
    """Отрезок ребра, на котором g линейна; p0 < p1 лексикографически"""
    p0: Point
    p1: Point
    v0: float
    v1: float


@dataclass
class Facelet:
    """Квадратный кусок грани ячейки с билинейным g

    values[iu, iv] - значения в углах (u, v = -1 / +1), оси u и v - две
    оставшиеся оси по возрастанию. sides - отрезки рёбер, содержащие
    стороны v=-1, v=+1, u=-1, u=+1 (для нерасщеплённого ребра куба это
    всё ребро целиком).
    """
    key: FaceletKey
    side: int
    values: np.ndarray
    sides: Tuple[Segment, ...]

    @property
    def axis(self) -> int:
        return self.key[0]

    @property
    def origin(self) -> Point:
        return self.key[1]

    @property
    def size(self) -> int:
        return self.key[2]

    @property
    def plane_axes(self) -> Tuple[int, int]:
        b, g = [k for k in range(3) if k != self.axis]
        return b, g

    @property
    def normal(self) -> np.ndarray:
        """Внешняя нормаль грани относительно ячейки-владельца"""
        n = np.zeros(3)
        n[self.axis] = 1.0 if self.side == 1 else -1.0
        return n

    def coefficients(self) -> Tuple[float, float, float, float]:
        """p + q u + r v + s uv"""
        f = self.values
        p = (f[0, 0] + f[1, 0] + f[0, 1] + f[1, 1]) / 4.0
        q = (-f[0, 0] + f[1, 0] - f[0, 1] + f[1, 1]) / 4.0
        r = (-f[0, 0] - f[1, 0] + f[0, 1] + f[1, 1]) / 4.0
        s = (f[0, 0] - f[1, 0] - f[0, 1] + f[1, 1]) / 4.0
        return p, q, r, s

    def to_uv(self, lattice) -> Tuple[float, float]:
        b, g = self.plane_axes
        lattice = np.asarray(lattice, dtype=float)
        u = 2.0 * (lattice[b] - self.origin[b]) / self.size - 1.0
        v = 2.0 * (lattice[g] - self.origin[g]) / self.size - 1.0
        return float(u), float(v)

    def from_uv(self, u: float, v: float) -> np.ndarray:
        b, g = self.plane_axes
        p = np.asarray(self.origin, dtype=float)
        p[b] += (u + 1.0) * self.size / 2.0
        p[g] += (v + 1.0) * self.size / 2.0
        return p

    def value(self, u: float, v: float) -> float:
        p, q, r, s = self.coefficients()
        return p + q * u + r * v + s * u * v


@dataclass
class FacePoint:
    """Точка контура; key - происхождение, по нему склеиваются вершины соседних ячеек"""
    key: Hashable
    lattice: np.ndarray
    local: np.ndarray
    kind: str = EDGE


@dataclass
class FoldSegment:
    """Отрезок складки {g = c, dg/d(axis) = 0}, параллельный оси axis"""
    axis: int
    fixed: Tuple[float, float]  # локальные координаты по двум другим осям
    endpoints: Tuple[FacePoint, FacePoint]  # axis = -1 и axis = +1
    index: int = 0
    criticals: List[FacePoint] = field(default_factory=list)

    def point(self, alpha: float) -> np.ndarray:
        p = np.empty(3)
        b, g = [k for k in range(3) if k != self.axis]
        p[self.axis] = alpha
        p[b], p[g] = self.fixed
        return p

    def chain(self) -> List[FacePoint]:
        """Концы и критические точки по возрастанию координаты axis"""
        inner = sorted(self.criticals, key=lambda point: point.local[self.axis])
        return [self.endpoints[0], *inner, self.endpoints[1]]


@dataclass
class Patch:
    """Однозначный кусок поверхности: замкнутая граница и ось проекции"""
    points: List[FacePoint]
    axis: int = 2
    flipped: bool = False

    @property
    def keys(self) -> List[Hashable]:
        return [point.key for point in self.points]

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class CellJob:
    """Всё, что нужно для контурирования одной ячейки независимо от остальных"""
    key: Optional[CubeKey]
    cell: TrilinearCell
    isovalue: float
    placement: Placement
    facelets: List[Facelet]
    registry: Dict[FaceletKey, List[FacePoint]] = field(default_factory=dict)


@dataclass
class CellMesh:
    """Треугольники одной ячейки на ключах вершин"""
    key: Optional[CubeKey]
    points: Dict[Hashable, np.ndarray]
    triangles: List[Tuple[Hashable, Hashable, Hashable]]
    fallback_patches: int = 0
