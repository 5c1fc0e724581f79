"""Кубы октодерева и итоговый набор листьев"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from gmsurf.models.tensors import TrilinearCell
from gmsurf.utils.lattice import LatticeFrame, CubeKey, Point

# Итог оценки куба
DISCARD = "discard"
LEAF = "leaf"
FORCED = "forced"
SPLIT = "split"


@dataclass
class Cube:
    """Куб октодерева; key задаёт положение на решётке, bounds - в Å"""
    key: CubeKey
    frame: LatticeFrame
    atoms: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def depth(self) -> int:
        return self.key[0]

    @property
    def bounds(self) -> np.ndarray:
        return self.frame.bounds(self.key)


@dataclass
class CubeEstimate:
    """Результат шага оценки одного куба (считается в воркере)"""
    key: CubeKey
    status: str
    norm: float = 0.0
    children: Tuple[CubeKey, ...] = ()


@dataclass
class LeafSet:
    """Листья, пересекающие поверхность, с трилинейными ячейками

    corner_values - кэш phi во всех углах листьев (после сдвига значений,
    совпадающих с c). forced/closure - листья, оставленные по max_depth и
    добавленные проходом замыкания; cascaded - число дроблений из-за складок.
    """
    frame: LatticeFrame
    isovalue: float
    cells: Dict[CubeKey, TrilinearCell]
    corner_values: Dict[Point, float]
    forced: Set[CubeKey] = field(default_factory=set)
    closure: Set[CubeKey] = field(default_factory=set)
    balanced: int = 0
    cascaded: int = 0

    def __len__(self) -> int:
        return len(self.cells)

    def __contains__(self, key) -> bool:
        return key in self.cells

    def keys(self) -> List[CubeKey]:
        return sorted(self.cells)

    def leaf_at(self, p: Point, max_depth: Optional[int] = None) -> Optional[CubeKey]:
        """Лист, содержащий единичную ячейку решётки с началом p, если он не мельче max_depth"""
        if not self.frame.contains_lattice(p):
            return None
        top = self.frame.max_depth if max_depth is None else max_depth
        for depth in range(top + 1):
            key = self.frame.enclosing(p, depth)
            if key in self.cells:
                return key
        return None

    @property
    def adjacency(self) -> Dict[CubeKey, List[CubeKey]]:
        """Листья, делящие с данным часть грани"""
        neighbors: Dict[CubeKey, Set[CubeKey]] = {key: set() for key in self.cells}
        for key in self.cells:
            depth, *o = key
            s = self.frame.size(depth)
            for axis in range(3):
                for side in (0, 1):
                    q = list(o)
                    q[axis] = o[axis] - 1 if side == 0 else o[axis] + s
                    b, g = [k for k in range(3) if k != axis]
                    # по грани могут оказаться соседи на уровень мельче
                    for db in (0, s // 2):
                        for dg in (0, s // 2):
                            p = list(q)
                            p[b] += db
                            p[g] += dg
                            other = self.leaf_at(tuple(p))
                            if other is not None:
                                neighbors[key].add(other)
                                neighbors[other].add(key)
        return {key: sorted(found) for key, found in sorted(neighbors.items())}
