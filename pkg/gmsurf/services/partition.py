"""Адаптивное разбиение: оценка и деление кубов, согласование листьев

Цикл оценки: проекция phi на куб, SVD-оценка, отбрасывание кубов без
поверхности, лист при малых старших коэффициентах, иначе деление на 8.
После цикла набор листьев приводится к согласованному виду: баланс 2:1
по 26 соседям, замыкание (грань с пересечением получает соседа) и
дробление листьев, у которых конец складки лежит на расщеплённой грани.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple

import numpy as np
from numpy.polynomial import legendre

from gmsurf.models.atoms import GaussianField, NeighborGrid
from gmsurf.models.contour import CellJob, Facelet, Placement, Segment, FacePoint
from gmsurf.models.octree import Cube, CubeEstimate, LeafSet, DISCARD, LEAF, FORCED, SPLIT
from gmsurf.models.tensors import CoeffTensor, TrilinearCell
from gmsurf.services.bounds import svd_split, cube_may_intersect, high_order_norm
from gmsurf.services.cellcontour import fold_segments
from gmsurf.services.molmodel import atoms_near_box, eval_field_many, influence_box
from gmsurf.services.polyfit import assemble_tensor
from gmsurf.utils.constants import DEFAULT_MAX_DEPTH, NUDGE_TOL, NUDGE_SHIFT, POLY_DEGREE
from gmsurf.utils.lattice import LatticeFrame, CubeKey, Point, children, corners

logger = logging.getLogger(__name__)

MAX_CONFORM_ROUNDS = 256


@dataclass(frozen=True)
class RefineContext:
    """Неизменяемые входные данные для воркеров"""
    field: GaussianField
    grid: NeighborGrid
    frame: LatticeFrame
    tau: float
    max_depth: int


def initial_grid(field: GaussianField, grid: NeighborGrid, cell_target: float, max_depth: int = DEFAULT_MAX_DEPTH) -> List[Cube]:
    """Равномерная сетка кубов с ребром cell_target поверх шаров влияния, с полями по полкуба"""
    if len(field) == 0:
        raise ValueError("список атомов пуст")
    lo, hi = influence_box(field)
    extent = hi - lo + cell_target
    counts = tuple(int(n) for n in np.maximum(np.ceil(extent / cell_target), 1))
    origin = (lo + hi) / 2.0 - np.array(counts) * cell_target / 2.0
    frame = LatticeFrame(tuple(float(v) for v in origin), cell_target / float(2 << max_depth), max_depth, counts)
    root = frame.size(0)
    cubes = []
    for i in range(counts[0]):
        for j in range(counts[1]):
            for k in range(counts[2]):
                key = (0, i * root, j * root, k * root)
                bounds = frame.bounds(key)
                cubes.append(Cube(key, frame, atoms_near_box(field, grid, bounds[:, 0], bounds[:, 1])))
    logger.info(f"Начальная сетка {counts[0]}x{counts[1]}x{counts[2]}, ребро {cell_target:.3f} Å")
    return cubes


def _half_interval_matrix(upper: int) -> np.ndarray:
    """M[a, i]: коэффициент L_a(t) у L_i на половине отрезка"""
    domain = [0.0, 1.0] if upper else [-1.0, 0.0]
    n = POLY_DEGREE + 1
    matrix = np.zeros((n, n))
    for i in range(n):
        coef = legendre.Legendre.basis(i).convert(domain=domain).coef
        matrix[:len(coef), i] = coef[:n]
    return matrix


_HALVES = (_half_interval_matrix(0), _half_interval_matrix(1))


def subdivide_tensor(parent: CoeffTensor, octant: int) -> CoeffTensor:
    """Точный пересчёт кубического полинома родителя в базис дочернего куба"""
    bits = (octant & 1, (octant >> 1) & 1, (octant >> 2) & 1)
    mx, my, mz = (_HALVES[b] for b in bits)
    data = np.einsum("ai,bj,ck,ijk->abc", mx, my, mz, parent.data)
    bounds = parent.bounds.copy()
    for axis, bit in enumerate(bits):
        mid = bounds[axis].mean()
        bounds[axis] = (mid, bounds[axis, 1]) if bit else (bounds[axis, 0], mid)
    return CoeffTensor(data, bounds)


_STACKED_HALVES = np.stack(_HALVES)


def child_coefficient_ranges(parent: CoeffTensor) -> np.ndarray:
    """Грубые интервалы (8, 2) значений полинома родителя в октантах: A000 -+ sum|A_rest|"""
    data = np.einsum("xai,ybj,zck,ijk->zyxabc", _STACKED_HALVES, _STACKED_HALVES, _STACKED_HALVES, parent.data)
    data = data.reshape(8, -1)
    center = data[:, 0]
    spread = np.abs(data[:, 1:]).sum(axis=1)
    return np.stack([center - spread, center + spread], axis=1)


def estimate_cube(context: RefineContext, key: CubeKey) -> CubeEstimate:
    """Проекция, SVD-оценка и решение по одному кубу: DISCARD, LEAF, FORCED или SPLIT"""
    field, frame = context.field, context.frame
    c = field.isovalue
    bounds = frame.bounds(key)
    atoms = atoms_near_box(field, context.grid, bounds[:, 0], bounds[:, 1])
    if atoms.size == 0:
        return CubeEstimate(key, DISCARD)
    tensor = assemble_tensor(field, context.grid, bounds, atoms)
    if not cube_may_intersect(svd_split(tensor), c):
        return CubeEstimate(key, DISCARD)
    norm = high_order_norm(tensor)
    if norm <= context.tau * c:
        return CubeEstimate(key, LEAF, norm)
    if key[0] >= context.max_depth:
        return CubeEstimate(key, FORCED, norm)
    # дешёвая предварительная оценка детей по полиному родителя
    ranges = child_coefficient_ranges(tensor)
    kept = tuple(child for octant, child in children(frame, key)
                 if ranges[octant, 0] - norm <= c <= ranges[octant, 1] + norm)
    return CubeEstimate(key, SPLIT, norm, kept)


def classify_cube(context: RefineContext, key: CubeKey) -> bool:
    """Проходит ли куб проверку L <= c <= U при свежей проекции"""
    bounds = context.frame.bounds(key)
    atoms = atoms_near_box(context.field, context.grid, bounds[:, 0], bounds[:, 1])
    if atoms.size == 0:
        return False
    tensor = assemble_tensor(context.field, context.grid, bounds, atoms)
    return cube_may_intersect(svd_split(tensor), context.field.isovalue)


def nudge(value: float, c: float) -> float:
    """Значение, совпавшее с c, сдвигается чуть ниже c (детерминированное возмущение)"""
    if abs(value - c) <= NUDGE_TOL * c:
        return c * (1.0 - NUDGE_SHIFT)
    return value


Runner = Callable[[Callable, List], List]


def _inline_runner(context: RefineContext) -> Runner:
    def run(fn, items):
        return [fn(context, item) for item in items]
    return run


class _Conformer:
    """Состояние согласования листьев: ключи, кэш углов, счётчики"""

    def __init__(self, context: RefineContext, run: Runner, leaves: Set[CubeKey], forced: Set[CubeKey]):
        self.context = context
        self.frame = context.frame
        self.c = context.field.isovalue
        self.run = run
        self.leaves = set(leaves)
        self.forced = set(forced)
        self.closure: Set[CubeKey] = set()
        self.balanced = 0
        self.cascaded = 0
        self.cache: Dict[Point, float] = {}
        self.fill_cache(self.leaves)

    # кэш значений phi в точках решётки

    def fill_cache(self, keys: Iterable[CubeKey]) -> None:
        missing = sorted({p for key in keys for _, p in corners(self.frame, key) if p not in self.cache})
        if not missing:
            return
        world = np.array([self.frame.world(p) for p in missing])
        values, _ = eval_field_many(self.context.field, self.context.grid, world)
        for p, value in zip(missing, values):
            self.cache[p] = nudge(float(value), self.c)

    def corner_set(self) -> Set[Point]:
        return {p for key in self.leaves for _, p in corners(self.frame, key)}

    def corner_values(self, key: CubeKey) -> np.ndarray:
        values = np.empty((2, 2, 2))
        for idx, p in corners(self.frame, key):
            values[idx] = self.cache[p]
        return values

    def leaf_at(self, p: Point, max_depth: int) -> Optional[CubeKey]:
        if not self.frame.contains_lattice(p):
            return None
        for depth in range(max_depth + 1):
            key = self.frame.enclosing(p, depth)
            if key in self.leaves:
                return key
        return None

    def ancestors(self) -> Set[CubeKey]:
        found = set()
        for depth, *o in self.leaves:
            for d in range(depth):
                found.add(self.frame.enclosing(tuple(o), d))
        return found

    # проходы

    def split(self, keys: Iterable[CubeKey]) -> None:
        """Заменяет листья детьми, оставляя детей с пересечением по углам или по оценке"""
        keys = sorted(set(keys))
        candidates = [child for key in keys for _, child in children(self.frame, key)]
        self.leaves.difference_update(keys)
        self.fill_cache(candidates)
        kept, unsure = [], []
        for child in candidates:
            values = self.corner_values(child)
            if values.max() >= self.c > values.min():
                kept.append(child)
            else:
                unsure.append(child)
        if unsure:
            kept.extend(child for child, ok in zip(unsure, self.run(classify_cube, unsure)) if ok)
        self.leaves.update(kept)

    def balance_pass(self) -> Set[CubeKey]:
        """Грубые листья, у которых среди 26 соседей есть лист мельче больше чем на уровень"""
        coarse = set()
        for depth, *o in self.leaves:
            if depth < 2:
                continue
            s = self.frame.size(depth)
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        if dx == dy == dz == 0:
                            continue
                        q = tuple(o[k] - 1 if d < 0 else o[k] + (s if d > 0 else 0) for k, d in enumerate((dx, dy, dz)))
                        other = self.leaf_at(q, depth - 2)
                        if other is not None:
                            coarse.add(other)
        return coarse

    def closure_pass(self) -> Set[CubeKey]:
        """Листья, которых не хватает напротив граней с пересечением"""
        S = self.corner_set()
        ancestors = self.ancestors()
        additions: Set[CubeKey] = set()
        for key in sorted(self.leaves):
            for facelet in cell_facelets(self.frame, key, S, self.cache):
                if not (facelet.values.max() >= self.c > facelet.values.min()):
                    continue
                q = list(facelet.origin)
                if facelet.side == 0:
                    q[facelet.axis] -= 1
                q = tuple(q)
                if not self.frame.contains_lattice(q):
                    logger.warning(f"⚠️ Поверхность выходит на границу сетки у листа {key}")
                    continue
                fdepth = self.frame.max_depth + 1 - (facelet.size.bit_length() - 1)
                if self.leaf_at(q, fdepth) is not None:
                    continue
                self._fill_across(self.frame.enclosing(q, fdepth), facelet, ancestors, additions)
        return additions

    def _fill_across(self, candidate: CubeKey, facelet: Facelet, ancestors: Set[CubeKey], additions: Set[CubeKey]) -> None:
        if candidate in self.leaves:
            return
        if candidate not in ancestors:
            additions.add(candidate)
            return
        if candidate[0] >= self.frame.max_depth:
            return
        touching = 1 if facelet.side == 0 else 0
        for octant, child in children(self.frame, candidate):
            if (octant >> facelet.axis) & 1 == touching:
                self._fill_across(child, facelet, ancestors, additions)

    def cascade_pass(self) -> Set[CubeKey]:
        """Листья, у которых конец собственной складки лежит на расщеплённой грани"""
        S = self.corner_set()
        refine = set()
        for key in sorted(self.leaves):
            if key[0] >= self.frame.max_depth:
                continue
            split_faces = {(f.axis, f.side) for f in cell_facelets(self.frame, key, S, self.cache) if f.size < self.frame.size(key[0])}
            if not split_faces:
                continue
            cell = TrilinearCell.from_corners(self.corner_values(key), self.frame.bounds(key))
            for axis in range(3):
                if (axis, 0) in split_faces or (axis, 1) in split_faces:
                    if fold_segments(cell, axis, self.c):
                        refine.add(key)
                        break
        return refine

    def run_passes(self) -> None:
        for _ in range(MAX_CONFORM_ROUNDS):
            coarse = self.balance_pass()
            if coarse:
                self.balanced += len(coarse)
                self.split(coarse)
                continue
            additions = self.closure_pass()
            if additions:
                self.closure.update(additions)
                self.leaves.update(additions)
                self.fill_cache(additions)
                continue
            folds = self.cascade_pass()
            if folds:
                self.cascaded += len(folds)
                self.split(folds)
                continue
            return
        logger.warning(f"⚠️ Согласование листьев не сошлось за {MAX_CONFORM_ROUNDS} проходов")

    def leafset(self) -> LeafSet:
        S = self.corner_set()
        cells = {
            key: TrilinearCell.from_corners(self.corner_values(key), self.frame.bounds(key))
            for key in sorted(self.leaves)
        }
        return LeafSet(
            frame=self.frame,
            isovalue=self.c,
            cells=cells,
            corner_values={p: self.cache[p] for p in sorted(S)},
            forced=self.forced & self.leaves,
            closure=self.closure & self.leaves,
            balanced=self.balanced,
            cascaded=self.cascaded,
        )


def refine(
    cubes: List[Cube],
    field: GaussianField,
    grid: NeighborGrid,
    tau: float,
    max_depth: int,
    run: Optional[Runner] = None,
) -> LeafSet:
    """Цикл оценки/деления и согласование; run(fn, items) - упорядоченный map по воркерам"""
    if not tau > 0:
        raise ValueError(f"tau должен быть положительным: {tau}")
    if not cubes:
        raise ValueError("нет начальных кубов")
    frame = cubes[0].frame
    context = RefineContext(field, grid, frame, tau, max_depth)
    run = run or _inline_runner(context)

    leaves: Set[CubeKey] = set()
    forced: Set[CubeKey] = set()
    frontier = sorted(cube.key for cube in cubes if cube.atoms.size)
    while frontier:
        next_frontier: List[CubeKey] = []
        for estimate in run(estimate_cube, frontier):
            if estimate.status == LEAF:
                leaves.add(estimate.key)
            elif estimate.status == FORCED:
                leaves.add(estimate.key)
                forced.add(estimate.key)
                logger.warning(
                    f"⚠️ Куб {estimate.key} оставлен листом на max_depth={max_depth}: "
                    f"норма {estimate.norm:.3e} > tau*c"
                )
            elif estimate.status == SPLIT:
                next_frontier.extend(estimate.children)
        frontier = sorted(next_frontier)
        logger.debug(f"Фронт разбиения: {len(frontier)} кубов, листьев {len(leaves)}")

    conformer = _Conformer(context, run, leaves, forced)
    conformer.run_passes()
    result = conformer.leafset()
    logger.info(
        f"Листьев: {len(result)} (на max_depth: {len(result.forced)}, замыкание: {len(result.closure)}, "
        f"баланс: {result.balanced}, складки: {result.cascaded})"
    )
    return result


# Грани листа в согласованном наборе

def _face_lattice(frame: LatticeFrame, key: CubeKey, axis: int, side: int):
    depth, *o = key
    s = frame.size(depth)
    h = s // 2
    base = list(o)
    base[axis] += side * s
    b, g = [k for k in range(3) if k != axis]

    def at(i: int, j: int) -> Point:
        p = list(base)
        p[b] += i * h
        p[g] += j * h
        return tuple(p)

    return at, s


def cell_facelets(frame: LatticeFrame, key: CubeKey, S: Set[Point], cache: Dict[Point, float]) -> List[Facelet]:
    """Грани листа как куски: целая грань или четыре четверти, если грань расщеплена

    Ребро расщеплено, если его середина - угол какого-то листа; грань -
    если её центр или середина любого ребра - угол листа. В точках
    расщеплённой грани, не являющихся углами листьев, значение берётся
    линейной (для рёбер) или билинейной (для центра) интерполяцией.
    """
    facelets = []
    for axis in range(3):
        for side in (0, 1):
            at, s = _face_lattice(frame, key, axis, side)
            mids = {(1, 0): ((0, 0), (2, 0)), (1, 2): ((0, 2), (2, 2)), (0, 1): ((0, 0), (0, 2)), (2, 1): ((2, 0), (2, 2))}
            is_split = at(1, 1) in S or any(at(*m) in S for m in mids)
            face_corners = [(0, 0), (2, 0), (0, 2), (2, 2)]

            def value(ij) -> float:
                p = at(*ij)
                if p in S:
                    return cache[p]
                if ij in mids:
                    a, b = mids[ij]
                    return (value(a) + value(b)) / 2.0
                return sum(value(corner) for corner in face_corners) / 4.0

            def segment(a, b) -> Segment:
                pa, pb = at(*a), at(*b)
                if pa > pb:
                    a, b, pa, pb = b, a, pb, pa
                return Segment(pa, pb, value(a), value(b))

            def side_segment(a, b) -> Segment:
                """Сторона куска; на нерасщеплённом ребре куба - всё ребро"""
                on_edge = (a[0] == b[0] and a[0] in (0, 2)) or (a[1] == b[1] and a[1] in (0, 2))
                if on_edge and is_split:
                    if a[0] == b[0]:
                        mid, ends = (a[0], 1), ((a[0], 0), (a[0], 2))
                    else:
                        mid, ends = (1, a[1]), ((0, a[1]), (2, a[1]))
                    if at(*mid) not in S:
                        return segment(*ends)
                return segment(a, b)

            step = 1 if is_split else 2
            for i in range(0, 2, step):
                for j in range(0, 2, step):
                    i1, j1 = i + step, j + step
                    values = np.array([[value((i, j)), value((i, j1))], [value((i1, j)), value((i1, j1))]])
                    sides = (
                        side_segment((i, j), (i1, j)),
                        side_segment((i, j1), (i1, j1)),
                        side_segment((i, j), (i, j1)),
                        side_segment((i1, j), (i1, j1)),
                    )
                    size = s // 2 if is_split else s
                    facelets.append(Facelet((axis, at(i, j), size), side, values, sides))
    return facelets


def _facelet_for(facelets: List[Facelet], axis: int, side: int, lattice) -> Optional[Facelet]:
    """Кусок грани (axis, side), содержащий точку; на расщеплённой грани - одна из четвертей"""
    for facelet in facelets:
        if facelet.axis != axis or facelet.side != side:
            continue
        u, v = facelet.to_uv(lattice)
        if max(abs(u), abs(v)) <= 1.0:
            return facelet
    return None


def contour_jobs(leafset: LeafSet) -> List[CellJob]:
    """Задания на контурирование с общим реестром концов складок на кусках граней

    Конец складки на расщеплённой грани регистрируется на той четверти, где
    он лежит, если кривая g = c проходит через эту четверть; иначе хорда
    складки в ячейке не строится.
    """
    frame, c = leafset.frame, leafset.isovalue
    S = set(leafset.corner_values)
    registry: Dict[tuple, List[FacePoint]] = defaultdict(list)
    prepared = []
    for key in leafset.keys():
        cell = leafset.cells[key]
        placement = Placement(tuple(key[1:]), frame.size(key[0]))
        facelets = cell_facelets(frame, key, S, leafset.corner_values)
        for axis in range(3):
            for fold in fold_segments(cell, axis, c, placement=placement, cell_key=key):
                for side, endpoint in enumerate(fold.endpoints):
                    facelet = _facelet_for(facelets, axis, side, endpoint.lattice)
                    if facelet is None:
                        continue
                    if facelet.size < placement.size and not (facelet.values.max() >= c > facelet.values.min()):
                        continue
                    registry[facelet.key].append(endpoint)
        prepared.append((key, cell, placement, facelets))
    jobs = []
    for key, cell, placement, facelets in prepared:
        shared = {f.key: list(registry[f.key]) for f in facelets if f.key in registry}
        jobs.append(CellJob(key, cell, c, placement, facelets, shared))
    return jobs
