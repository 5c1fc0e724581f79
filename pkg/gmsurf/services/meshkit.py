"""Сборка глобальной сетки, проверки многообразия и пересечений, метрики, OFF"""
import io
import logging
from collections import defaultdict, deque
from itertools import combinations
from typing import Dict, Hashable, Iterable, List, Optional, TextIO, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from gmsurf.models.atoms import GaussianField, NeighborGrid
from gmsurf.models.contour import CellMesh
from gmsurf.models.mesh import TriangleMesh, MeshReport
from gmsurf.services.molmodel import build_grid, eval_field_many
from gmsurf.utils.constants import OFF_DIGITS, INTERSECTION_EPS
from gmsurf.utils.errors import WeldError, MeshError, OffFormatError

logger = logging.getLogger(__name__)


# Сборка

def _cell_order(mesh: CellMesh):
    return (mesh.key is None, mesh.key or ())


def weld(cell_outputs: Iterable[CellMesh]) -> TriangleMesh:
    """Склеивает вершины ячеек по ключам происхождения и согласует ориентацию"""
    index: Dict[Hashable, int] = {}
    vertices: List[np.ndarray] = []
    triangles: List[Tuple[int, int, int]] = []
    owners: List[object] = []
    seen = set()
    for cell in sorted(cell_outputs, key=_cell_order):
        for key in cell.points:
            if key not in index:
                index[key] = len(vertices)
                vertices.append(cell.points[key])
        for a, b, c in cell.triangles:
            tri = (index[a], index[b], index[c])
            if len(set(tri)) < 3 or frozenset(tri) in seen:
                continue
            seen.add(frozenset(tri))
            triangles.append(tri)
            owners.append(cell.key)
    mesh = TriangleMesh(np.array(vertices).reshape(-1, 3), np.array(triangles, dtype=np.int64).reshape(-1, 3))
    flips = _consistent_flips(mesh.triangles, owners)
    if flips.any():
        logger.debug(f"Развёрнуто треугольников при согласовании: {int(flips.sum())}")
        mesh.triangles[flips] = mesh.triangles[flips][:, ::-1]
    logger.info(f"Сборка: {mesh.vertex_count} вершин, {mesh.triangle_count} треугольников")
    return mesh


def _consistent_flips(triangles: np.ndarray, owners: Optional[List[object]] = None) -> np.ndarray:
    """Какие треугольники развернуть, чтобы соседи по ребру обходили его навстречу

    В каждой компоненте сохраняется ориентация большинства треугольников.
    """
    m = len(triangles)
    by_edge: Dict[Tuple[int, int], List[Tuple[int, bool]]] = defaultdict(list)
    for t, (a, b, c) in enumerate(triangles.tolist()):
        for u, v in ((a, b), (b, c), (c, a)):
            by_edge[(min(u, v), max(u, v))].append((t, u < v))
    neighbors: List[List[Tuple[int, bool]]] = [[] for _ in range(m)]
    for members in by_edge.values():
        if len(members) != 2:
            continue
        (t1, d1), (t2, d2) = members
        # одинаковое направление ребра - ориентации расходятся
        neighbors[t1].append((t2, d1 == d2))
        neighbors[t2].append((t1, d1 == d2))

    flips = np.zeros(m, dtype=bool)
    visited = np.zeros(m, dtype=bool)
    for seed in range(m):
        if visited[seed]:
            continue
        component = [seed]
        visited[seed] = True
        queue = deque([seed])
        while queue:
            t = queue.popleft()
            for other, differs in neighbors[t]:
                wanted = flips[t] ^ differs
                if not visited[other]:
                    visited[other] = True
                    flips[other] = wanted
                    component.append(other)
                    queue.append(other)
                elif flips[other] != wanted:
                    cells = (owners[t], owners[other]) if owners else (t, other)
                    raise WeldError("несогласуемая ориентация на общем ребре", cells)
        if 2 * int(flips[component].sum()) > len(component):
            flips[component] = ~flips[component]
    return flips


# Проверки

def _edge_counts(mesh: TriangleMesh) -> Tuple[np.ndarray, np.ndarray]:
    if mesh.is_empty():
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.unique(mesh.edges(), axis=0, return_counts=True)


def _vertex_is_manifold(link: List[Tuple[int, int]]) -> bool:
    """Звено вершины - один цикл (или одна цепочка на границе)"""
    adjacency: Dict[int, List[int]] = defaultdict(list)
    for a, b in link:
        adjacency[a].append(b)
        adjacency[b].append(a)
    degrees = [len(v) for v in adjacency.values()]
    ends = sum(1 for d in degrees if d == 1)
    if any(d > 2 for d in degrees) or ends not in (0, 2):
        return False
    start = next(iter(adjacency))
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(adjacency)


def check_manifold(mesh: TriangleMesh) -> MeshReport:
    """Рёбра степени != 2 и вершины, чей веер треугольников не один цикл"""
    _, counts = _edge_counts(mesh)
    links: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
    for a, b, c in mesh.triangles.tolist():
        links[a].append((b, c))
        links[b].append((c, a))
        links[c].append((a, b))
    bad_vertices = sum(1 for link in links.values() if not _vertex_is_manifold(link))
    return MeshReport(
        non_manifold_edges=int((counts != 2).sum()),
        non_manifold_vertices=bad_vertices,
        boundary_edges=int((counts == 1).sum()),
        vertex_count=mesh.vertex_count,
        triangle_count=mesh.triangle_count,
    )


def _orient(a, b, c, d) -> np.ndarray:
    return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a)


def _segment_crosses(p, q, a, b, c, tol) -> np.ndarray:
    """Отрезок pq пересекает внутренность треугольника abc (строго, без касаний)"""
    o1 = _orient(a, b, c, p)
    o2 = _orient(a, b, c, q)
    straddles = ((o1 > tol) & (o2 < -tol)) | ((o1 < -tol) & (o2 > tol))
    s1 = _orient(p, q, a, b)
    s2 = _orient(p, q, b, c)
    s3 = _orient(p, q, c, a)
    inside = ((s1 > tol) & (s2 > tol) & (s3 > tol)) | ((s1 < -tol) & (s2 < -tol) & (s3 < -tol))
    return straddles & inside


def _coplanar_overlap(t1: np.ndarray, t2: np.ndarray, tol: float) -> bool:
    normal = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    keep = [k for k in range(3) if k != int(np.argmax(np.abs(normal)))]
    a, b = t1[:, keep], t2[:, keep]

    def cross2(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

    for i in range(3):
        for j in range(3):
            p, q = a[i], a[(i + 1) % 3]
            r, s = b[j], b[(j + 1) % 3]
            d1, d2 = cross2(p, q, r), cross2(p, q, s)
            d3, d4 = cross2(r, s, p), cross2(r, s, q)
            if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
                return True

    def inside(point, tri):
        w = [cross2(tri[k], tri[(k + 1) % 3], point) for k in range(3)]
        return all(x > tol for x in w) or all(x < -tol for x in w)

    return any(inside(p, b) for p in a) or any(inside(p, a) for p in b)


def _candidate_pairs(mesh: TriangleMesh) -> np.ndarray:
    """Пары треугольников из общих ячеек пространственного хеша"""
    v = mesh.vertices[mesh.triangles]
    lo, hi = v.min(axis=1), v.max(axis=1)
    edges = np.linalg.norm(v - np.roll(v, 1, axis=1), axis=2)
    cell = max(float(np.median(edges)) * 2.0, 1e-9)
    origin = lo.min(axis=0)
    a = np.floor((lo - origin) / cell).astype(np.int64)
    b = np.floor((hi - origin) / cell).astype(np.int64)
    buckets: Dict[Tuple[int, int, int], List[int]] = defaultdict(list)
    for t in range(len(v)):
        for i in range(a[t, 0], b[t, 0] + 1):
            for j in range(a[t, 1], b[t, 1] + 1):
                for k in range(a[t, 2], b[t, 2] + 1):
                    buckets[(i, j, k)].append(t)
    pairs = set()
    for members in buckets.values():
        pairs.update(combinations(members, 2))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.array(sorted(pairs), dtype=np.int64)
    overlap = np.all((lo[pairs[:, 0]] <= hi[pairs[:, 1]]) & (lo[pairs[:, 1]] <= hi[pairs[:, 0]]), axis=1)
    return pairs[overlap]


def check_intersections(mesh: TriangleMesh) -> int:
    """Число пар треугольников без общих вершин, пересекающихся геометрически"""
    if mesh.triangle_count < 2:
        return 0
    pairs = _candidate_pairs(mesh)
    if len(pairs) == 0:
        return 0
    t = mesh.triangles
    shared = np.zeros(len(pairs), dtype=bool)
    for i in range(3):
        for j in range(3):
            shared |= t[pairs[:, 0], i] == t[pairs[:, 1], j]
    pairs = pairs[~shared]
    if len(pairs) == 0:
        return 0
    v = mesh.vertices[t]
    A, B = v[pairs[:, 0]], v[pairs[:, 1]]
    scale = np.maximum(np.abs(A).max(axis=(1, 2)), np.abs(B).max(axis=(1, 2))) + 1.0
    tol = INTERSECTION_EPS * scale ** 3
    hit = np.zeros(len(pairs), dtype=bool)
    for first, second in ((A, B), (B, A)):
        for k in range(3):
            p, q = first[:, k], first[:, (k + 1) % 3]
            hit |= _segment_crosses(p, q, second[:, 0], second[:, 1], second[:, 2], tol)
    heights = np.stack([_orient(A[:, 0], A[:, 1], A[:, 2], B[:, k]) for k in range(3)], axis=1)
    coplanar = np.all(np.abs(heights) <= tol[:, None], axis=1) & ~hit
    for n in np.flatnonzero(coplanar):
        if _coplanar_overlap(A[n], B[n], 1e-12 * float(scale[n]) ** 2):
            hit[n] = True
    count = int(hit.sum())
    if count:
        logger.warning(f"⚠️ Найдено пересекающихся пар треугольников: {count}")
    return count


# Метрики

def signed_volume(mesh: TriangleMesh) -> float:
    """Ориентированный объём по теореме о дивергенции"""
    v = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)


def count_components(mesh: TriangleMesh) -> int:
    """Число связных компонент по общим рёбрам"""
    if mesh.is_empty():
        return 0
    e = mesh.edges()
    n = mesh.vertex_count
    graph = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    used = np.unique(mesh.triangles)
    return int(len(np.unique(labels[used])))


def metrics(mesh: TriangleMesh, volume: bool = True) -> MeshReport:
    """Площадь, объём, эйлерова характеристика, компоненты, плотность вершин"""
    area = float(np.linalg.norm(mesh.face_normals(), axis=1).sum() / 2.0) if not mesh.is_empty() else 0.0
    edges, counts = _edge_counts(mesh)
    report = MeshReport(
        area=area,
        vertex_density=mesh.vertex_count / area if area > 0 else 0.0,
        euler_characteristic=int(mesh.vertex_count - len(edges) + mesh.triangle_count),
        components=count_components(mesh),
        vertex_count=mesh.vertex_count,
        triangle_count=mesh.triangle_count,
    )
    if volume:
        if np.any(counts != 2):
            raise MeshError("объём определён только для замкнутой сетки (у каждого ребра ровно две грани)")
        report.volume = abs(signed_volume(mesh))
    return report


def analyze(mesh: TriangleMesh, intersections: bool = True, fallback_patches: int = 0) -> MeshReport:
    """check_manifold + check_intersections + metrics одним отчётом"""
    report = check_manifold(mesh)
    if intersections:
        report.intersecting_pairs = check_intersections(mesh)
    closed = report.non_manifold_edges == 0
    report = report.merge(
        metrics(mesh, volume=closed),
        "area", "volume", "vertex_density", "euler_characteristic", "components",
    )
    report.fallback_patches = fallback_patches
    return report


# Ориентация и эталонные сетки

def orient_outward(mesh: TriangleMesh, field: GaussianField, grid: Optional[NeighborGrid] = None) -> TriangleMesh:
    """Согласует ориентацию и разворачивает компоненты так, чтобы нормали смотрели в сторону убывания phi"""
    if mesh.is_empty():
        return mesh
    flips = _consistent_flips(mesh.triangles)
    triangles = mesh.triangles.copy()
    triangles[flips] = triangles[flips][:, ::-1]
    result = TriangleMesh(mesh.vertices, triangles)
    grid = grid or build_grid(field)
    centroids = result.vertices[result.triangles].mean(axis=1)
    _, grad = eval_field_many(field, grid, centroids)
    votes = np.einsum("ij,ij->i", result.face_normals(), -grad)

    n = result.vertex_count
    e = result.edges()
    graph = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    tri_labels = labels[result.triangles[:, 0]]
    for label in np.unique(tri_labels):
        members = tri_labels == label
        if votes[members].sum() < 0:
            result.triangles[members] = result.triangles[members][:, ::-1]
    return result


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Икосфера с внешними нормалями"""
    t = (1.0 + 5 ** 0.5) / 2.0
    vertices = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    points = [np.array(p, dtype=float) / np.linalg.norm(p) for p in vertices]
    for _ in range(subdivisions):
        cache: Dict[Tuple[int, int], int] = {}

        def middle(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = points[i] + points[j]
                points.append(m / np.linalg.norm(m))
                cache[key] = len(points) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = middle(a, b), middle(b, c), middle(c, a)
            refined.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = refined
    return TriangleMesh(np.array(points) * radius + np.asarray(center, dtype=float), np.array(faces))


# OFF

def format_off(mesh: TriangleMesh) -> str:
    """Текст OFF с вершинами и треугольниками"""
    out = io.StringIO()
    write_off(mesh, out)
    return out.getvalue()


def write_off(mesh: TriangleMesh, sink: TextIO) -> None:
    """Запись сетки в поток в формате OFF"""
    fmt = f"%.{OFF_DIGITS}g"
    sink.write("OFF\n")
    sink.write(f"{mesh.vertex_count} {mesh.triangle_count} 0\n")
    for x, y, z in mesh.vertices.tolist():
        sink.write(f"{fmt % x} {fmt % y} {fmt % z}\n")
    for a, b, c in mesh.triangles.tolist():
        sink.write(f"3 {a} {b} {c}\n")


def _content_lines(source: Union[str, TextIO]):
    stream = io.StringIO(source) if isinstance(source, str) else source
    for lineno, line in enumerate(stream, start=1):
        text = line.split("#", 1)[0].strip()
        if text:
            yield lineno, text.split()


def read_off(source: Union[str, TextIO]) -> TriangleMesh:
    """Разбирает OFF с треугольными гранями; ошибки несут номер строки"""
    lines = _content_lines(source)
    try:
        lineno, tokens = next(lines)
    except StopIteration:
        raise OffFormatError("пустой файл", 1) from None
    if tokens[0] != "OFF":
        raise OffFormatError(f"ожидался заголовок OFF, получено {tokens[0]!r}", lineno)
    counts = tokens[1:]
    if not counts:
        try:
            lineno, counts = next(lines)
        except StopIteration:
            raise OffFormatError("нет строки с количествами", lineno + 1) from None
    if len(counts) != 3:
        raise OffFormatError("строка количеств должна содержать три целых числа", lineno)
    try:
        nv, nf, _ = (int(x) for x in counts)
    except ValueError:
        raise OffFormatError("строка количеств должна содержать три целых числа", lineno) from None
    if nv < 0 or nf < 0:
        raise OffFormatError("отрицательное количество", lineno)

    vertices = np.zeros((nv, 3))
    triangles = np.zeros((nf, 3), dtype=np.int64)
    for i in range(nv):
        try:
            lineno, tokens = next(lines)
        except StopIteration:
            raise OffFormatError(f"ожидалось {nv} вершин, найдено {i}", lineno + 1) from None
        if len(tokens) < 3:
            raise OffFormatError("у вершины меньше трёх координат", lineno)
        try:
            vertices[i] = [float(x) for x in tokens[:3]]
        except ValueError:
            raise OffFormatError("некорректные координаты вершины", lineno) from None
    for i in range(nf):
        try:
            lineno, tokens = next(lines)
        except StopIteration:
            raise OffFormatError(f"ожидалось {nf} граней, найдено {i}", lineno + 1) from None
        try:
            indices = [int(x) for x in tokens]
        except ValueError:
            raise OffFormatError("некорректные индексы грани", lineno) from None
        if len(indices) < 4 or indices[0] != 3:
            raise OffFormatError("поддерживаются только треугольные грани", lineno)
        if min(indices[1:4]) < 0 or max(indices[1:4]) >= nv:
            raise OffFormatError("индекс вершины вне диапазона", lineno)
        triangles[i] = indices[1:4]
    return TriangleMesh(vertices, triangles)
