"""Гарантированные оценки L <= P <= U полинома на кубе

Тензор раскладывается двухуровневым SVD на главную часть и остаток;
главная часть оценивается интервальной арифметикой по одномерным
множителям, остаток - суммой модулей его элементов.
"""
import logging

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import svd

from gmsurf.models.tensors import CoeffTensor, SvdSplit, RankTerm, SubTerm, Interval
from gmsurf.utils.constants import FIRST_LEVEL_ENERGY, SECOND_LEVEL_ENERGY, POLY_DEGREE

logger = logging.getLogger(__name__)

_n = POLY_DEGREE + 1
HIGH_ORDER_MASK = np.maximum.outer(np.maximum.outer(np.arange(_n), np.arange(_n)), np.arange(_n)) >= 2


def _data(A) -> np.ndarray:
    return A.data if isinstance(A, CoeffTensor) else np.asarray(A, dtype=float)


def unfold(A: np.ndarray) -> np.ndarray:
    """Развёртка 4x16: строка - третий индекс, столбец - i*4 + j"""
    return A.transpose(2, 0, 1).reshape(_n, _n * _n)


def _retained(values: np.ndarray, energy: float) -> int:
    """Наименьшее j, при котором сумма первых j сингулярных чисел >= energy * сумма всех"""
    total = values.sum()
    if total <= 0.0:
        return 0
    j = int(np.searchsorted(np.cumsum(values), energy * total)) + 1
    return min(j, len(values))


def svd_split(A, first_energy: float = FIRST_LEVEL_ENERGY, second_energy: float = SECOND_LEVEL_ENERGY) -> SvdSplit:
    """Двухуровневое SVD: развёртка 4x16, затем каждая строка Vh как матрица 4x4"""
    data = _data(A)
    U, sigma, Vh = svd(unfold(data), full_matrices=False)
    rank = _retained(sigma, first_energy)
    terms = []
    if rank:
        # второй уровень одним пакетным вызовом
        W, d, Zh = np.linalg.svd(Vh[:rank].reshape(rank, _n, _n))
        for i in range(rank):
            subterms = [SubTerm(float(d[i, k]), W[i, :, k].copy(), Zh[i, k, :].copy()) for k in range(_retained(d[i], second_energy))]
            terms.append(RankTerm(float(sigma[i]), U[:, i].copy(), subterms))
    split = SvdSplit(terms, np.zeros_like(data))
    split.residue = data - split.main_part()
    return split


def cubic_ranges(coeffs) -> np.ndarray:
    """Точные min/max строк (m, 4) кубик Лежандра на [-1,1], результат (m, 2)"""
    a = np.atleast_2d(np.asarray(coeffs, dtype=float))
    # мономы: P2 = (3x^2 - 1)/2, P3 = (5x^3 - 3x)/2
    c0 = a[:, 0] - 0.5 * a[:, 2]
    c1 = a[:, 1] - 1.5 * a[:, 3]
    c2 = 1.5 * a[:, 2]
    c3 = 2.5 * a[:, 3]
    # p'(x) = qa x^2 + qb x + qc
    qa, qb, qc = 3.0 * c3, 2.0 * c2, c1
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = qb * qb - 4.0 * qa * qc
        root = np.sqrt(np.where(disc >= 0.0, disc, np.nan))
        q = -0.5 * (qb + np.where(qb >= 0.0, root, -root))
        quadratic = qa != 0.0
        r1 = np.where(quadratic, q / qa, -qc / qb)
        r2 = np.where(quadratic, qc / q, np.nan)
    # корни вне отрезка прижимаются к концам, NaN заменяется концом
    candidates = np.stack([-np.ones_like(c0), np.ones_like(c0), r1, r2], axis=1)
    candidates = np.clip(np.nan_to_num(candidates, nan=-1.0, posinf=1.0, neginf=-1.0), -1.0, 1.0)
    values = legendre.legval(candidates.T, a.T, tensor=False).T
    # запас на погрешность корней
    margin = 1e-14 * (1.0 + np.abs(a).sum(axis=1) * 3.0)
    return np.stack([values.min(axis=1) - margin, values.max(axis=1) + margin], axis=1)


def bound_poly1d(coeffs) -> Interval:
    """Точные min/max кубики в базисе Лежандра на [-1,1]: концы и нули производной"""
    lo, hi = cubic_ranges(coeffs)[0]
    return Interval(float(lo), float(hi))


def bound_tensor(s: SvdSplit) -> Interval:
    """U = M + sum|R|, L = m - sum|R|"""
    residue = float(np.abs(s.residue).sum())
    if not s.terms:
        return Interval(-residue, residue)
    vectors = []
    for term in s.terms:
        vectors.append(term.u)
        for sub in term.subterms:
            vectors.append(sub.w)
            vectors.append(sub.z)
    ranges = iter(cubic_ranges(np.array(vectors)).tolist())
    main = Interval(0.0, 0.0)
    for term in s.terms:
        u = Interval(*next(ranges))
        yz = Interval(0.0, 0.0)
        for sub in term.subterms:
            w, z = Interval(*next(ranges)), Interval(*next(ranges))
            yz = yz + (w * z).scale(sub.d)
        main = main + (u * yz).scale(term.sigma)
    return main.widen(residue)


def cube_may_intersect(s: SvdSplit, c: float) -> bool:
    """Может ли куб содержать точку уровня c: L <= c <= U"""
    return bound_tensor(s).contains(c)


def high_order_norm(A) -> float:
    """l1-норма коэффициентов, отбрасываемых трилинейным сжатием (max(i,j,k) >= 2)"""
    return float(np.abs(_data(A)[HIGH_ORDER_MASK]).sum())
