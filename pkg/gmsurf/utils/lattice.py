"""Целочисленная решётка октодерева

Единица решётки - половина ребра самого мелкого куба, поэтому углы,
середины рёбер и центры граней любого листа лежат в целых точках.
"""
from dataclasses import dataclass
from typing import Tuple, Iterator

import numpy as np

Point = Tuple[int, int, int]
CubeKey = Tuple[int, int, int, int]  # (depth, ox, oy, oz), начало в единицах решётки


@dataclass(frozen=True)
class LatticeFrame:
    """Привязка решётки к мировым координатам"""
    origin: Tuple[float, float, float]
    unit: float
    max_depth: int
    counts: Tuple[int, int, int]  # число начальных кубов по осям

    def size(self, depth: int) -> int:
        """Ребро куба глубины depth в единицах решётки"""
        return 2 << (self.max_depth - depth)

    def world(self, p) -> np.ndarray:
        return np.asarray(self.origin, dtype=float) + np.asarray(p, dtype=float) * self.unit

    def bounds(self, key: CubeKey) -> np.ndarray:
        """Границы куба [[a,b],[c,d],[e,f]] в Å"""
        depth, *o = key
        lo = self.world(o)
        edge = self.size(depth) * self.unit
        return np.stack([lo, lo + edge], axis=1)

    def contains_lattice(self, p: Point) -> bool:
        root = self.size(0)
        return all(0 <= p[k] < self.counts[k] * root for k in range(3))

    def enclosing(self, p: Point, depth: int) -> CubeKey:
        """Ключ куба глубины depth, содержащего единичную ячейку с началом p"""
        s = self.size(depth)
        return (depth, p[0] - p[0] % s, p[1] - p[1] % s, p[2] - p[2] % s)


def children(frame: LatticeFrame, key: CubeKey) -> Iterator[Tuple[int, CubeKey]]:
    """Восемь дочерних кубов; номер октанта = bx + 2*by + 4*bz"""
    depth, ox, oy, oz = key
    half = frame.size(depth + 1)
    for octant in range(8):
        bx, by, bz = octant & 1, (octant >> 1) & 1, (octant >> 2) & 1
        yield octant, (depth + 1, ox + bx * half, oy + by * half, oz + bz * half)


def corners(frame: LatticeFrame, key: CubeKey) -> Iterator[Tuple[Tuple[int, int, int], Point]]:
    """Углы куба: ((ix, iy, iz), точка решётки), i=0 - нижняя сторона"""
    depth, ox, oy, oz = key
    s = frame.size(depth)
    for ix in (0, 1):
        for iy in (0, 1):
            for iz in (0, 1):
                yield (ix, iy, iz), (ox + ix * s, oy + iy * s, oz + iz * s)
