"""Треугольная сетка и отчёт о её проверке"""
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np


@dataclass
class TriangleMesh:
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise ValueError("индекс вершины треугольника вне диапазона")

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def is_empty(self) -> bool:
        return self.triangle_count == 0

    def edges(self) -> np.ndarray:
        """Все рёбра треугольников (m*3, 2), вершины в каждом ребре по возрастанию"""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.sort(e, axis=1)

    def face_normals(self) -> np.ndarray:
        """Ненормированные нормали (длина = удвоенная площадь)"""
        v = self.vertices[self.triangles]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    def flipped(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.triangles[:, ::-1].copy())


@dataclass
class MeshReport:
    """Итог проверки: дефекты многообразия, пересечения, метрики"""
    non_manifold_edges: int = 0
    non_manifold_vertices: int = 0
    boundary_edges: int = 0
    intersecting_pairs: int = 0
    area: float = 0.0
    volume: Optional[float] = None
    vertex_density: float = 0.0
    euler_characteristic: int = 0
    components: int = 0
    vertex_count: int = 0
    triangle_count: int = 0
    fallback_patches: int = 0

    @property
    def defects(self) -> int:
        # граничные рёбра уже входят в non_manifold_edges (степень != 2)
        return self.non_manifold_edges + self.non_manifold_vertices + self.intersecting_pairs

    @property
    def is_clean(self) -> bool:
        return self.defects == 0

    def merge(self, other: "MeshReport", *names: str) -> "MeshReport":
        """Копия с полями names, взятыми из other"""
        return replace(self, **{name: getattr(other, name) for name in names})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
