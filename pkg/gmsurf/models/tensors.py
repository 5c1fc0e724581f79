"""Коэффициентные тензоры, трилинейные ячейки и интервалы"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

# Знаки углов куба [-1,1]^3 в порядке индексов (ix, iy, iz)
CORNER_SIGNS = np.array(
    [[2 * ix - 1, 2 * iy - 1, 2 * iz - 1] for ix in (0, 1) for iy in (0, 1) for iz in (0, 1)],
    dtype=float,
)


@dataclass
class AxisCoeffs:
    """Коэффициенты Лежандра одного атома по одной оси на отрезке [a, b]

    raw - проекция МНК, coeffs - после поправки на концах (L2, L3).
    """
    raw: np.ndarray
    coeffs: np.ndarray
    interval: tuple


@dataclass
class CoeffTensor:
    """Тензор A (4x4x4) полинома на кубе bounds = [[a,b],[c,d],[e,f]]"""
    data: np.ndarray
    bounds: np.ndarray

    @property
    def center(self) -> np.ndarray:
        return self.bounds.mean(axis=1)

    @property
    def half(self) -> np.ndarray:
        return (self.bounds[:, 1] - self.bounds[:, 0]) / 2.0

    def to_local(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.center) / self.half


@dataclass
class TrilinearCell:
    """g = a0 + a1 x + a2 y + a3 z + a4 xy + a5 xz + a6 yz + a7 xyz на [-1,1]^3

    corners[ix, iy, iz] - значения в углах, индекс 0 соответствует -1.
    """
    corners: np.ndarray
    coeffs: np.ndarray
    bounds: np.ndarray

    @classmethod
    def from_corners(cls, corners, bounds=None) -> "TrilinearCell":
        corners = np.asarray(corners, dtype=float).reshape(2, 2, 2)
        if bounds is None:
            bounds = np.array([[-1.0, 1.0]] * 3)
        v = corners.reshape(-1)
        sx, sy, sz = CORNER_SIGNS.T
        basis = np.stack([np.ones(8), sx, sy, sz, sx * sy, sx * sz, sy * sz, sx * sy * sz])
        coeffs = basis @ v / 8.0
        return cls(corners, coeffs, np.asarray(bounds, dtype=float))

    @classmethod
    def from_coeffs(cls, coeffs, bounds=None) -> "TrilinearCell":
        """Ячейка по мономиальным коэффициентам (удобно для синтетических проверок)"""
        coeffs = np.asarray(coeffs, dtype=float)
        cell = cls(np.zeros((2, 2, 2)), coeffs, np.array([[-1.0, 1.0]] * 3) if bounds is None else np.asarray(bounds, dtype=float))
        cell.corners = np.array([cell.value(s) for s in CORNER_SIGNS]).reshape(2, 2, 2)
        return cell

    def value(self, p) -> float:
        x, y, z = p
        a = self.coeffs
        return float(a[0] + a[1] * x + a[2] * y + a[3] * z + a[4] * x * y + a[5] * x * z + a[6] * y * z + a[7] * x * y * z)

    def gradient(self, p) -> np.ndarray:
        x, y, z = p
        a = self.coeffs
        return np.array([
            a[1] + a[4] * y + a[5] * z + a[7] * y * z,
            a[2] + a[4] * x + a[6] * z + a[7] * x * z,
            a[3] + a[5] * x + a[6] * y + a[7] * x * y,
        ])

    @property
    def center(self) -> np.ndarray:
        return self.bounds.mean(axis=1)

    @property
    def half(self) -> np.ndarray:
        return (self.bounds[:, 1] - self.bounds[:, 0]) / 2.0

    def to_world(self, local) -> np.ndarray:
        return self.center + np.asarray(local, dtype=float) * self.half

    def to_local(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.center) / self.half


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"пустой интервал [{self.lo}, {self.hi}]")

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __mul__(self, other: "Interval") -> "Interval":
        products = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
        return Interval(min(products), max(products))

    def scale(self, k: float) -> "Interval":
        return Interval(k * self.lo, k * self.hi) if k >= 0 else Interval(k * self.hi, k * self.lo)

    def widen(self, margin: float) -> "Interval":
        return Interval(self.lo - margin, self.hi + margin)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass
class SubTerm:
    d: float
    w: np.ndarray  # мода 1 (x)
    z: np.ndarray  # мода 2 (y)


@dataclass
class RankTerm:
    sigma: float
    u: np.ndarray  # мода 3 (z) - строки развёртки
    subterms: List[SubTerm] = field(default_factory=list)


@dataclass
class SvdSplit:
    """A = sum sigma u (x) (sum d w (x) z) + R в развёртке по третьей моде"""
    terms: List[RankTerm]
    residue: np.ndarray

    def main_part(self) -> np.ndarray:
        main = np.zeros_like(self.residue)
        for term in self.terms:
            for sub in term.subterms:
                main += term.sigma * sub.d * np.einsum("i,j,k->ijk", sub.w, sub.z, term.u)
        return main

    def reconstruct(self) -> np.ndarray:
        return self.main_part() + self.residue
