"""Атомы и гауссово поле"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from gmsurf.utils.constants import MAX_KERNEL_CUTOFF_EPS


@dataclass(frozen=True)
class Atom:
    """Атом из PQR: центр и радиус в Å, заряд в e (для мешинга не нужен)"""
    center: Tuple[float, float, float]
    radius: float
    charge: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"радиус атома должен быть положительным: {self.radius}")
        if not all(math.isfinite(v) for v in self.center):
            raise ValueError(f"координаты атома должны быть конечными: {self.center}")


@dataclass(frozen=True)
class GaussianField:
    """phi(x) = sum_i exp(-D(|x-x_i|^2 - r_i^2)), поверхность phi = c

    Неизменяем после создания, поэтому его можно отдавать воркерам.
    """
    atoms: Tuple[Atom, ...]
    decay: float = 1.0
    isovalue: float = 1.0
    kernel_cutoff_eps: float = 1e-9
    centers: np.ndarray = field(init=False, repr=False, compare=False)
    radii: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.decay > 0:
            raise ValueError(f"decay должен быть положительным: {self.decay}")
        if not self.isovalue > 0:
            raise ValueError(f"isovalue должен быть положительным: {self.isovalue}")
        if not 0 < self.kernel_cutoff_eps <= MAX_KERNEL_CUTOFF_EPS:
            raise ValueError(f"kernel_cutoff_eps вне (0, {MAX_KERNEL_CUTOFF_EPS}]: {self.kernel_cutoff_eps}")
        object.__setattr__(self, "atoms", tuple(self.atoms))
        centers = np.array([a.center for a in self.atoms], dtype=float).reshape(-1, 3)
        radii = np.array([a.radius for a in self.atoms], dtype=float)
        centers.flags.writeable = False
        radii.flags.writeable = False
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def influence_radii(self) -> np.ndarray:
        """rho_i: exp(D(r_i^2 - rho_i^2)) = eps*c"""
        log_term = max(0.0, math.log(1.0 / (self.kernel_cutoff_eps * self.isovalue)))
        return np.sqrt(self.radii ** 2 + log_term / self.decay)

    def scaled(self) -> "GaussianField":
        """То же поле при D=1: координаты и радиусы умножены на sqrt(D)"""
        k = math.sqrt(self.decay)
        atoms = tuple(
            Atom(tuple(float(v) * k for v in a.center), a.radius * k, a.charge) for a in self.atoms
        )
        return GaussianField(atoms, 1.0, self.isovalue, self.kernel_cutoff_eps)


@dataclass(frozen=True)
class NeighborGrid:
    """Решётка для поиска атомов, чьи шары влияния задевают точку или куб"""
    origin: np.ndarray
    cell_size: float
    cells: Dict[Tuple[int, int, int], np.ndarray]
    rho: np.ndarray

    def cell_of(self, p) -> Tuple[int, int, int]:
        idx = np.floor((np.asarray(p, dtype=float) - self.origin) / self.cell_size).astype(int)
        return int(idx[0]), int(idx[1]), int(idx[2])

    def candidates(self, lo, hi) -> np.ndarray:
        """Индексы атомов из всех ячеек решётки, пересекающих бокс [lo, hi]"""
        a = self.cell_of(lo)
        b = self.cell_of(hi)
        found: List[np.ndarray] = []
        for i in range(a[0], b[0] + 1):
            for j in range(a[1], b[1] + 1):
                for k in range(a[2], b[2] + 1):
                    bucket = self.cells.get((i, j, k))
                    if bucket is not None:
                        found.append(bucket)
        if not found:
            return np.empty(0, dtype=int)
        return np.unique(np.concatenate(found))
