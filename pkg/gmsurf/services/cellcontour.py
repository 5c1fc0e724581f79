"""Контурирование одной трилинейной ячейки

Порядок работы: точки на рёбрах, отрезки складок и критические точки,
кривые на гранях (ветви гипербол), замкнутые петли на поверхности куба,
разрезание петель складками на однозначные патчи и триангуляция патчей
отсечением ушей.
"""
import logging
import math
from collections import defaultdict
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import mapbox_earcut as earcut
import numpy as np

from gmsurf.models.contour import (
    CellJob,
    CellMesh,
    Facelet,
    FacePoint,
    FoldSegment,
    Patch,
    Placement,
    Segment,
    EDGE,
    FOLD,
    MIDPOINT,
    CRITICAL,
    FAN,
)
from gmsurf.models.tensors import TrilinearCell
from gmsurf.utils.constants import ARC_REFINE_DEPTH, SAGITTA_LIMIT, LINE_FACE_RATIO, BORDER_TOL, CRITICAL_TOL
from gmsurf.utils.errors import CellTopologyError

logger = logging.getLogger(__name__)

# g = A(b, g) + alpha * B(b, g): индексы мономов a0..a7 для A и B по каждой оси
_SPLIT_TERMS = {
    0: ((0, 2, 3, 6), (1, 4, 5, 7)),
    1: ((0, 1, 3, 5), (2, 4, 6, 7)),
    2: ((0, 1, 2, 4), (3, 5, 6, 7)),
}
_FOLD_TOL = 1e-9
_NEWTON_STEPS = 8


def _other_axes(axis: int) -> Tuple[int, int]:
    b, g = [k for k in range(3) if k != axis]
    return b, g


# Грани ячейки без соседей

def whole_facelets(cell: TrilinearCell, placement: Placement = Placement()) -> List[Facelet]:
    """Шесть целых граней ячейки со значениями из её углов"""
    o, s = placement.origin, placement.size

    def lattice(idx) -> Tuple[int, int, int]:
        return tuple(o[k] + idx[k] * s for k in range(3))

    def segment(i0, i1) -> Segment:
        p0, p1 = lattice(i0), lattice(i1)
        v0, v1 = float(cell.corners[i0]), float(cell.corners[i1])
        if p0 > p1:
            p0, p1, v0, v1 = p1, p0, v1, v0
        return Segment(p0, p1, v0, v1)

    facelets = []
    for axis in range(3):
        b, g = _other_axes(axis)
        for side in (0, 1):
            def idx(iu, iv):
                i = [0, 0, 0]
                i[axis], i[b], i[g] = side, iu, iv
                return tuple(i)

            values = np.array([[cell.corners[idx(iu, iv)] for iv in (0, 1)] for iu in (0, 1)], dtype=float)
            sides = (
                segment(idx(0, 0), idx(1, 0)),
                segment(idx(0, 1), idx(1, 1)),
                segment(idx(0, 0), idx(0, 1)),
                segment(idx(1, 0), idx(1, 1)),
            )
            facelets.append(Facelet((axis, lattice(idx(0, 0)), s), side, values, sides))
    return facelets


def make_job(cell: TrilinearCell, isovalue: float, placement: Placement = Placement(), key=None) -> CellJob:
    """Задание для отдельной ячейки: целые грани, концы собственных складок на них"""
    facelets = whole_facelets(cell, placement)
    by_face = {(f.axis, f.side): f.key for f in facelets}
    registry: Dict[tuple, List[FacePoint]] = defaultdict(list)
    for axis in range(3):
        for fold in fold_segments(cell, axis, isovalue, placement=placement, cell_key=key):
            for side, endpoint in enumerate(fold.endpoints):
                registry[by_face[(axis, side)]].append(endpoint)
    return CellJob(key, cell, isovalue, placement, facelets, dict(registry))


# Точки на рёбрах

def _crossing(segment: Segment, c: float) -> Optional[np.ndarray]:
    """Пересечение g = c на отрезке; значение, равное c, считается выше c"""
    if (segment.v0 >= c) == (segment.v1 >= c):
        return None
    t = (c - segment.v0) / (segment.v1 - segment.v0)
    t = min(max(t, 0.0), 1.0)
    p0 = np.asarray(segment.p0, dtype=float)
    return p0 + t * (np.asarray(segment.p1, dtype=float) - p0)


def _side_points(facelet: Facelet, c: float, placement: Placement) -> List[FacePoint]:
    points = []
    for segment in facelet.sides:
        lattice = _crossing(segment, c)
        if lattice is None:
            continue
        u, v = facelet.to_uv(lattice)
        if max(abs(u), abs(v)) > 1.0 + BORDER_TOL:
            continue
        points.append(FacePoint(("e", segment.p0, segment.p1), lattice, placement.to_local(lattice), EDGE))
    return points


def edge_intersections(
    cell: TrilinearCell,
    isovalue: float,
    facelets: Optional[Sequence[Facelet]] = None,
    placement: Placement = Placement(),
) -> List[FacePoint]:
    """Точки g = c на рёбрах (не более одной на отрезок, где g линейна)"""
    if facelets is None:
        facelets = whole_facelets(cell, placement)
    found: Dict[Hashable, FacePoint] = {}
    for facelet in facelets:
        for point in _side_points(facelet, isovalue, placement):
            found.setdefault(point.key, point)
    return [found[key] for key in sorted(found)]


# Складки и критические точки

def fold_segments(
    cell: TrilinearCell,
    axis: int,
    isovalue: float,
    placement: Placement = Placement(),
    cell_key=None,
) -> List[FoldSegment]:
    """Решения {A = c, B = 0} внутри грани [-1,1]^2, каждое - отрезок вдоль axis"""
    a = cell.coeffs
    e = [a[i] for i in _SPLIT_TERMS[axis][0]]
    h = [a[i] for i in _SPLIT_TERMS[axis][1]]
    scale = float(np.abs(a).sum()) + abs(isovalue)
    if max(abs(x) for x in h) <= _FOLD_TOL * scale:
        return []
    e0 = e[0] - isovalue
    # (e0 + e2 g + (e1 + e3 g) b = 0) и (h0 + h2 g + (h1 + h3 g) b = 0)
    quad = e[2] * h[3] - h[2] * e[3]
    lin = e0 * h[3] + e[2] * h[1] - h[0] * e[3] - h[2] * e[1]
    const = e0 * h[1] - h[0] * e[1]
    if abs(quad) > _FOLD_TOL * scale:
        roots = np.roots([quad, lin, const])
        roots = [r.real for r in roots if abs(r.imag) <= 1e-12 * (1.0 + abs(r.real))]
    elif abs(lin) > _FOLD_TOL * scale:
        roots = [-const / lin]
    else:
        return []

    solutions = []
    for gamma in roots:
        if not -1.0 + BORDER_TOL < gamma < 1.0 - BORDER_TOL:
            continue
        denom_b = h[1] + h[3] * gamma
        denom_a = e[1] + e[3] * gamma
        if abs(denom_b) >= abs(denom_a) and abs(denom_b) > _FOLD_TOL * scale:
            beta = -(h[0] + h[2] * gamma) / denom_b
        elif abs(denom_a) > _FOLD_TOL * scale:
            beta = -(e0 + e[2] * gamma) / denom_a
        else:
            continue
        if not -1.0 + BORDER_TOL < beta < 1.0 - BORDER_TOL:
            continue
        residual_a = e0 + e[1] * beta + e[2] * gamma + e[3] * beta * gamma
        residual_b = h[0] + h[1] * beta + h[2] * gamma + h[3] * beta * gamma
        if abs(residual_a) > _FOLD_TOL * scale or abs(residual_b) > _FOLD_TOL * scale:
            continue
        solutions.append((float(beta), float(gamma)))

    folds = []
    for index, fixed in enumerate(sorted(set(solutions), key=lambda bg: (bg[1], bg[0]))):
        ends = []
        for side, alpha in enumerate((-1.0, 1.0)):
            local = np.empty(3)
            b, g = _other_axes(axis)
            local[axis], local[b], local[g] = alpha, fixed[0], fixed[1]
            ends.append(FacePoint(("x", cell_key, axis, index, side), placement.to_lattice(local), local, FOLD))
        folds.append(FoldSegment(axis, fixed, (ends[0], ends[1]), index))
    return folds


def critical_points(
    cell: TrilinearCell,
    isovalue: float,
    folds: Optional[Dict[int, List[FoldSegment]]] = None,
    placement: Placement = Placement(),
    cell_key=None,
) -> List[FacePoint]:
    """Пересечения складок разных осей; точки дописываются в criticals обеих складок"""
    if folds is None:
        folds = {axis: fold_segments(cell, axis, isovalue, placement, cell_key) for axis in range(3)}
    found = []
    for first in range(3):
        for second in range(first + 1, 3):
            shared = 3 - first - second
            for fa in folds.get(first, []):
                for fb in folds.get(second, []):
                    pa = fa.point(0.0)
                    pb = fb.point(0.0)
                    if abs(pa[shared] - pb[shared]) > CRITICAL_TOL:
                        continue
                    local = np.empty(3)
                    local[first] = pb[first]
                    local[second] = pa[second]
                    local[shared] = (pa[shared] + pb[shared]) / 2.0
                    point = FacePoint(
                        ("c", cell_key, first, fa.index, second, fb.index),
                        placement.to_lattice(local),
                        local,
                        CRITICAL,
                    )
                    fa.criticals.append(point)
                    fb.criticals.append(point)
                    found.append(point)
    return found


# Кривые на гранях и петли

def _branch_point(t: float, branch: float, u0: float, v0: float, K: float) -> Tuple[float, float]:
    """Точка ветви (u-u0)(v-v0) = K с параметром t (u - v при K > 0, u + v при K < 0)"""
    if K > 0:
        T = t - u0 + v0
        U = (T + branch * math.sqrt(T * T + 4.0 * K)) / 2.0
        V = U - T
    else:
        T = t - u0 - v0
        U = (T + branch * math.sqrt(T * T - 4.0 * K)) / 2.0
        V = T - U
    return U + u0, V + v0


def facelet_arcs(
    facelet: Facelet,
    c: float,
    points: List[FacePoint],
    placement: Placement,
    cell_key=None,
) -> List[List[FacePoint]]:
    """Дуги кривой g = c на куске грани: цепочки точек, идущих подряд по ветви"""
    if not points:
        return []
    p, q, r, s = facelet.coefficients()
    scale = abs(p - c) + abs(q) + abs(r) + abs(s)
    uv = {id(point): facelet.to_uv(point.lattice) for point in points}
    groups: Dict[float, List[Tuple[float, FacePoint]]] = defaultdict(list)
    hyperbola = abs(s) > LINE_FACE_RATIO * scale
    if hyperbola:
        u0, v0 = -r / s, -q / s
        K = (c - p + q * r / s) / s
        for point in points:
            u, v = uv[id(point)]
            branch = 1.0 if (u - u0 if u != u0 else (v - v0) * K) > 0 else -1.0
            t = u - v if K > 0 else u + v
            groups[branch].append((t, point))
    else:
        for point in points:
            u, v = uv[id(point)]
            groups[0.0].append((-r * u + q * v, point))

    arcs = []
    curve = (u0, v0, K) if hyperbola and K != 0.0 else None
    for branch in sorted(groups):
        members = sorted(groups[branch], key=lambda item: (item[0], repr(item[1].key)))
        ends = sum(1 for _, point in members if point.kind == EDGE)
        if ends != 2:
            raise CellTopologyError(f"на ветви грани {facelet.key} {ends} точек на сторонах вместо 2", cell_key)
        samples = [(t, point, uv[id(point)]) for t, point in members]
        chain = [members[0][1]]
        for first, second in zip(samples, samples[1:]):
            if curve is not None:
                chain.extend(_refine_arc(facelet, first, second, branch, curve, placement))
            chain.append(second[1])
        arcs.append(chain)
    return arcs


def _refine_arc(facelet, first, second, branch, curve, placement, depth: int = 0) -> List[FacePoint]:
    """Точки дуги строго между first и second: делим по параметру, пока стрелка прогиба больше SAGITTA_LIMIT"""
    (ta, a, (ua, va)), (tb, b, (ub, vb)) = first, second
    length = math.hypot(ub - ua, vb - va)
    if length <= 0.0 or depth >= ARC_REFINE_DEPTH:
        return []
    tm = (ta + tb) / 2.0
    um, vm = _branch_point(tm, branch, *curve)
    sagitta = abs((ub - ua) * (vm - va) - (vb - va) * (um - ua)) / length
    if sagitta <= SAGITTA_LIMIT:
        return []
    lattice = facelet.from_uv(um, vm)
    key = ("m", facelet.key, tuple(sorted((a.key, b.key), key=repr)))
    mid = (tm, FacePoint(key, lattice, placement.to_local(lattice), MIDPOINT), (um, vm))
    left = _refine_arc(facelet, first, mid, branch, curve, placement, depth + 1)
    right = _refine_arc(facelet, mid, second, branch, curve, placement, depth + 1)
    return left + [mid[1]] + right


def _registry_points(job: CellJob, facelet: Facelet) -> List[FacePoint]:
    points = []
    for point in job.registry.get(facelet.key, []):
        points.append(FacePoint(point.key, point.lattice, job.placement.to_local(point.lattice), point.kind))
    return points


def trace_face_loops(job: CellJob) -> List[List[FacePoint]]:
    """Замкнутые петли кривых граней на поверхности куба, ориентированные наружу

    Петля ориентирована так, что при взгляде со стороны внешней нормали
    поверхности (-grad g) часть поверхности внутри куба лежит слева.
    """
    cell, c = job.cell, job.isovalue
    nodes: Dict[Hashable, FacePoint] = {}
    arcs: List[Tuple[Hashable, Hashable, np.ndarray]] = []
    for facelet in job.facelets:
        points = _side_points(facelet, c, job.placement) + _registry_points(job, facelet)
        for chain in facelet_arcs(facelet, c, points, job.placement, job.key):
            for point in chain:
                nodes.setdefault(point.key, point)
            for a, b in zip(chain, chain[1:]):
                arcs.append((a.key, b.key, facelet.normal))

    incident: Dict[Hashable, List[int]] = defaultdict(list)
    for index, (a, b, _) in enumerate(arcs):
        incident[a].append(index)
        incident[b].append(index)
    for key, members in incident.items():
        if len(members) != 2:
            raise CellTopologyError(f"точка {key} имеет степень {len(members)} вместо 2", job.key)

    used = [False] * len(arcs)
    loops = []
    for start in range(len(arcs)):
        if used[start]:
            continue
        a, b, _ = arcs[start]
        order = [a]
        arc_ids = [start]
        used[start] = True
        current = b
        while current != a:
            order.append(current)
            nxt = next((i for i in incident[current] if not used[i]), None)
            if nxt is None:
                raise CellTopologyError(f"незамкнутая цепочка у точки {current}", job.key)
            used[nxt] = True
            arc_ids.append(nxt)
            x, y, _ = arcs[nxt]
            current = y if x == current else x
        loop = [nodes[key] for key in order]
        if _loop_orientation(cell, loop, [arcs[i] for i in arc_ids]) < 0:
            loop.reverse()
        loops.append(loop)
    return loops


def _loop_orientation(cell: TrilinearCell, loop: List[FacePoint], arcs) -> float:
    """sum (grad g x d) . n_face по дугам петли в порядке обхода"""
    total = 0.0
    position = {point.key: point.local for point in loop}
    order = {point.key: i for i, point in enumerate(loop)}
    n = len(loop)
    for a, b, normal in arcs:
        ia, ib = order[a], order[b]
        if (ia + 1) % n != ib:
            a, b = b, a
        d = position[b] - position[a]
        mid = (position[a] + position[b]) / 2.0
        total += float(np.dot(np.cross(cell.gradient(mid), d), normal))
    return total


# Патчи

def _tangent_basis(cell: TrilinearCell, local) -> Tuple[np.ndarray, np.ndarray]:
    n = -cell.gradient(local)
    return _plane_basis(n if np.linalg.norm(n) > 0 else np.array([0.0, 0.0, 1.0]))


def split_patches(job: CellJob, loops: List[List[FacePoint]], folds: Dict[int, List[FoldSegment]]) -> List[Patch]:
    """Разрезает петли хордами складок и обходит грани получившегося графа"""
    cell = job.cell
    nodes: Dict[Hashable, FacePoint] = {point.key: point for loop in loops for point in loop}
    chords = []
    for axis in sorted(folds):
        for fold in folds[axis]:
            if not all(end.key in nodes for end in fold.endpoints):
                continue
            chain = fold.chain()
            for point in chain:
                nodes.setdefault(point.key, point)
            chords.extend(zip(chain, chain[1:]))
    if not chords:
        return [_make_patch(cell, loop) for loop in loops]

    edges: List[Tuple[Hashable, Hashable]] = []
    for loop in loops:
        for i, point in enumerate(loop):
            edges.append((point.key, loop[(i + 1) % len(loop)].key))
    for a, b in chords:
        edges.append((a.key, b.key))
        edges.append((b.key, a.key))
    outgoing: Dict[Hashable, List[int]] = defaultdict(list)
    for index, (a, _) in enumerate(edges):
        outgoing[a].append(index)

    bases = {key: _tangent_basis(cell, point.local) for key, point in nodes.items()}

    def angle(at: Hashable, to: Hashable) -> float:
        e1, e2 = bases[at]
        d = nodes[to].local - nodes[at].local
        return math.atan2(float(d @ e2), float(d @ e1))

    used = [False] * len(edges)
    patches = []
    for start in range(len(edges)):
        if used[start]:
            continue
        face = []
        current = start
        while True:
            used[current] = True
            src, dst = edges[current]
            face.append(nodes[src])
            reference = angle(dst, src)
            best, best_turn = None, None
            for candidate in outgoing[dst]:
                target = edges[candidate][1]
                turn = (reference - angle(dst, target)) % (2.0 * math.pi)
                if target == src and turn == 0.0:
                    turn = 2.0 * math.pi
                if best_turn is None or turn < best_turn:
                    best, best_turn = candidate, turn
            if best is None:
                raise CellTopologyError(f"тупик графа контура в точке {dst}", job.key)
            if best == start:
                break
            if used[best] or len(face) > len(edges):
                raise CellTopologyError("несогласованное разбиение петель складками", job.key)
            current = best
        patches.append(_make_patch(cell, face))
    return patches


def _newell(points: np.ndarray) -> np.ndarray:
    nxt = np.roll(points, -1, axis=0)
    return np.array([
        np.sum((points[:, 1] - nxt[:, 1]) * (points[:, 2] + nxt[:, 2])),
        np.sum((points[:, 2] - nxt[:, 2]) * (points[:, 0] + nxt[:, 0])),
        np.sum((points[:, 0] - nxt[:, 0]) * (points[:, 1] + nxt[:, 1])),
    ])


def _make_patch(cell: TrilinearCell, boundary: List[FacePoint]) -> Patch:
    """Патч с осью проекции по нормали Ньюэлла; граница идёт против часовой вокруг -grad g"""
    local = np.array([point.local for point in boundary])
    normal = _newell(local)
    outward = -sum(cell.gradient(p) for p in local)
    flipped = bool(np.dot(normal, outward) < 0)
    if flipped:
        boundary = list(reversed(boundary))
        normal = -normal
    return Patch(list(boundary), int(np.argmax(np.abs(normal))), flipped)


def _plane_basis(direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Правый базис e1, e2 плоскости проекции: e1 x e2 = direction"""
    n = direction / np.linalg.norm(direction)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def _signed_area(flat: np.ndarray) -> float:
    x, y = flat[:, 0], flat[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _tri_area(flat: np.ndarray, tri) -> float:
    a, b, c = flat[list(tri)]
    return 0.5 * float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def facing(cell: TrilinearCell, local: np.ndarray, tri) -> float:
    """Косинус угла между нормалью треугольника и -grad g в его центре; > 0 - наружу"""
    a, b, c = local[list(tri)]
    normal = np.cross(b - a, c - a)
    outward = -cell.gradient((a + b + c) / 3.0)
    denom = float(np.linalg.norm(normal) * np.linalg.norm(outward))
    return float(normal @ outward) / denom if denom > 0.0 else 0.0


def improve_by_flips(cell: TrilinearCell, local: np.ndarray, triangles, flat: np.ndarray, sign: float) -> List[Tuple[int, int, int]]:
    """Перекладка диагоналей у треугольников, смотрящих внутрь

    Диагональ общей пары меняется, если обе новые пары сохраняют обход
    sign в плоскости проекции flat (четырёхугольник выпуклый) и худший
    косинус пары растёт.
    """
    tris = [tuple(t) for t in triangles]
    quality = [facing(cell, local, t) for t in tris]
    for _ in range(2 * len(tris) + 1):
        owner = {}
        for index, (i, j, k) in enumerate(tris):
            owner[(i, j)] = owner[(j, k)] = owner[(k, i)] = index
        flipped = False
        for worst in sorted(range(len(tris)), key=lambda n: quality[n]):
            if quality[worst] > 0.0:
                break
            t = tris[worst]
            for r in range(3):
                i, j, k = t[r], t[(r + 1) % 3], t[(r + 2) % 3]
                other = owner.get((j, i))
                if other is None:
                    continue
                l = next(v for v in tris[other] if v != i and v != j)
                if (k, l) in owner or (l, k) in owner:
                    continue
                first, second = (i, l, k), (l, j, k)
                if sign * _tri_area(flat, first) <= 0.0 or sign * _tri_area(flat, second) <= 0.0:
                    continue
                q1, q2 = facing(cell, local, first), facing(cell, local, second)
                if min(q1, q2) <= min(quality[worst], quality[other]):
                    continue
                tris[worst], tris[other] = first, second
                quality[worst], quality[other] = q1, q2
                flipped = True
                break
            if flipped:
                break
        if not flipped:
            break
    return tris


def _projections(cell: Optional[TrilinearCell], patch: Patch, local: np.ndarray) -> List[np.ndarray]:
    """Направления проекции: средняя -grad g, нормаль Ньюэлла, затем оси от patch.axis"""
    directions = []
    if cell is not None:
        outward = -sum(cell.gradient(p) for p in local)
        if np.linalg.norm(outward) > 0.0:
            directions.append(outward)
    normal = _newell(local)
    if np.linalg.norm(normal) > 0.0:
        directions.append(normal)
    for k in [patch.axis] + [k for k in np.argsort(-np.abs(normal)) if k != patch.axis]:
        directions.append(np.eye(3)[k])
    return directions


def triangulate_patch(patch: Patch, cell: Optional[TrilinearCell] = None, cell_key=None) -> List[Tuple[int, int, int]]:
    """Отсечение ушей в проекции; индексы в patch.points, обход треугольников как у границы

    С ячейкой cell триангуляция принимается, только если каждый треугольник
    смотрит по -grad g; иначе пробуется следующее направление проекции.
    """
    n = len(patch)
    if n < 3:
        return []
    if n == 3:
        return [(0, 1, 2)]
    local = np.array([point.local for point in patch.points])
    for direction in _projections(cell, patch, local):
        e1, e2 = _plane_basis(direction)
        flat = np.ascontiguousarray(np.stack([local @ e1, local @ e2], axis=1), dtype=np.float64)
        area = _signed_area(flat)
        if area == 0.0:
            continue
        indices = earcut.triangulate_float64(flat, np.array([n], dtype=np.uint32))
        if len(indices) != 3 * (n - 2):
            continue
        triangles = [tuple(int(v) for v in tri) for tri in np.asarray(indices, dtype=int).reshape(-1, 3)]
        # earcut выдаёт треугольники одного обхода; подгоняем его под обход границы
        if sum(_tri_area(flat, tri) for tri in triangles) * area < 0.0:
            triangles = [(i, k, j) for i, j, k in triangles]
        sign = 1.0 if area > 0.0 else -1.0
        areas = np.array([sign * _tri_area(flat, tri) for tri in triangles])
        # самопересечение проекции: треугольники перекрываются или вывернуты
        if areas.min() < 0.0 or abs(areas.sum() - abs(area)) > 1e-9 * (abs(area) + float(np.abs(flat).max()) ** 2):
            continue
        if cell is None:
            return triangles
        triangles = improve_by_flips(cell, local, triangles, flat, sign)
        if all(facing(cell, local, tri) > 0.0 for tri in triangles):
            return triangles
    raise CellTopologyError(f"граница патча из {n} точек не даёт простой проекции с треугольниками наружу", cell_key)


def project_to_surface(cell: TrilinearCell, c: float, local) -> np.ndarray:
    """Ньютон вдоль градиента до g = c, оставаясь в кубе"""
    p = np.clip(np.asarray(local, dtype=float), -1.0, 1.0)
    for _ in range(_NEWTON_STEPS):
        grad = cell.gradient(p)
        g2 = float(grad @ grad)
        if g2 == 0.0:
            break
        p = np.clip(p - (cell.value(p) - c) * grad / g2, -1.0, 1.0)
    return p


def fan_patch(cell: TrilinearCell, c: float, patch: Patch, key, placement: Placement = Placement()) -> Tuple[FacePoint, List[Tuple[int, int, int]]]:
    """Веер из центра границы, спроецированного на поверхность; центр имеет индекс len(patch)"""
    local = np.array([point.local for point in patch.points])
    center = project_to_surface(cell, c, local.mean(axis=0))
    n = len(patch)
    hub = FacePoint(key, placement.to_lattice(center), center, FAN)
    triangles = [(i, (i + 1) % n, n) for i in range(n)]
    outward = -sum(cell.gradient(p) for p in local)
    if np.linalg.norm(outward) > 0.0:
        e1, e2 = _plane_basis(outward)
        full = np.vstack([local, center])
        flat = np.stack([full @ e1, full @ e2], axis=1)
        sign = 1.0 if _signed_area(flat[:n]) >= 0.0 else -1.0
        triangles = improve_by_flips(cell, full, triangles, flat, sign)
    return hub, triangles


def is_single_valued(cell: TrilinearCell, c: float, patch: Patch, axis: int) -> bool:
    """Знак dg/d(axis) постоянен на внутренних точках патча

    dg/d(axis) не зависит от самой координаты axis, поэтому значение в точке
    треугольника совпадает со значением в точке поверхности над ней.
    """
    if len(patch) < 3:
        return True
    local = np.array([point.local for point in patch.points])
    try:
        triangles = triangulate_patch(patch, cell)
    except CellTopologyError:
        hub, triangles = fan_patch(cell, c, patch, None)
        local = np.vstack([local, hub.local])
    signs = set()
    for tri in triangles:
        corners = local[list(tri)]
        for weights in ((1 / 3, 1 / 3, 1 / 3), (0.6, 0.2, 0.2), (0.2, 0.6, 0.2), (0.2, 0.2, 0.6)):
            grad = cell.gradient(np.asarray(weights) @ corners)
            if abs(grad[axis]) <= 1e-9 * (np.linalg.norm(grad) + 1e-300):
                continue
            signs.add(bool(grad[axis] > 0))
    return len(signs) <= 1


# Ячейка целиком

def contour_cell(job: CellJob) -> CellMesh:
    """Полный контур одной ячейки: складки, критические точки, петли, патчи, треугольники"""
    cell, c = job.cell, job.isovalue
    folds = {axis: fold_segments(cell, axis, c, job.placement, job.key) for axis in range(3)}
    critical_points(cell, c, folds, job.placement, job.key)
    loops = trace_face_loops(job)
    patches = split_patches(job, loops, folds)

    points: Dict[Hashable, np.ndarray] = {}
    triangles: List[Tuple[Hashable, Hashable, Hashable]] = []
    fallback = 0
    for index, patch in enumerate(patches):
        if len(patch) < 3:
            continue
        keys = patch.keys
        locals_ = [point.local for point in patch.points]
        try:
            local_tris = triangulate_patch(patch, cell, job.key)
        except CellTopologyError as e:
            fallback += 1
            logger.warning(f"⚠️ {e}; патч заменён веером")
            hub, local_tris = fan_patch(cell, c, patch, ("f", job.key, index), job.placement)
            keys = keys + [hub.key]
            locals_ = locals_ + [hub.local]
        for key, local in zip(keys, locals_):
            if key not in points:
                points[key] = cell.to_world(local)
        for i, j, k in local_tris:
            if len({keys[i], keys[j], keys[k]}) == 3:
                triangles.append((keys[i], keys[j], keys[k]))
    return CellMesh(job.key, points, triangles, fallback)
