"""Текстовые отчёты: человекочитаемая часть и блок key=value"""
from typing import Any, Dict, Mapping, Optional

from gmsurf.models.mesh import MeshReport


def report_values(report: MeshReport, extra: Optional[Mapping[str, Any]] = None,
                  timings: Optional[Mapping[str, float]] = None) -> Dict[str, Any]:
    """Плоский словарь ключей отчёта в постоянном порядке"""
    values: Dict[str, Any] = dict(extra or {})
    values.update(
        vertices=report.vertex_count,
        triangles=report.triangle_count,
        non_manifold_edges=report.non_manifold_edges,
        non_manifold_vertices=report.non_manifold_vertices,
        boundary_edges=report.boundary_edges,
        intersecting_pairs=report.intersecting_pairs,
        area=report.area,
        volume=report.volume,
        vertex_density=report.vertex_density,
        euler=report.euler_characteristic,
        components=report.components,
        fallback_patches=report.fallback_patches,
    )
    for stage, seconds in (timings or {}).items():
        values[f"time_{stage}"] = seconds
    return values


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def format_key_values(values: Mapping[str, Any]) -> str:
    return "".join(f"{key}={_format_value(value)}\n" for key, value in values.items())


def parse_key_values(text: str) -> Dict[str, str]:
    """Обратная операция для блока key=value (строки без '=' пропускаются)"""
    values: Dict[str, str] = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if sep and key.strip() and " " not in key.strip():
            values[key.strip()] = value.strip()
    return values


def format_report(title: str, report: MeshReport, extra: Optional[Mapping[str, Any]] = None,
                  timings: Optional[Mapping[str, float]] = None) -> str:
    """Сводка для терминала, за ней блок key=value"""
    status = "✅ Дефектов нет" if report.is_clean else f"⚠️ Найдено дефектов: {report.defects}"
    text = f"{title}\n"
    for key, value in (extra or {}).items():
        text += f"┃ {key}: {_format_value(value)}\n"
    text += f"┃ Вершин: {report.vertex_count}, треугольников: {report.triangle_count}\n"
    text += (
        f"┃ Немногообразных рёбер: {report.non_manifold_edges}, вершин: {report.non_manifold_vertices}, "
        f"граничных рёбер: {report.boundary_edges}\n"
    )
    text += f"┃ Пересекающихся пар треугольников: {report.intersecting_pairs}\n"
    text += f"┃ Площадь: {report.area:.4f} Å²"
    text += f", объём: {report.volume:.4f} Å³\n" if report.volume is not None else ", объём не определён (сетка не замкнута)\n"
    text += (
        f"┃ Плотность вершин: {report.vertex_density:.3f} /Å², эйлерова характеристика: "
        f"{report.euler_characteristic}, компонент: {report.components}\n"
    )
    if report.fallback_patches:
        text += f"┃ Патчей с веерной триангуляцией: {report.fallback_patches}\n"
    if timings:
        text += "┃ Время: " + ", ".join(f"{stage} {seconds:.2f} с" for stage, seconds in timings.items()) + "\n"
    text += f"{status}\n\n"
    text += format_key_values(report_values(report, extra, timings))
    return text
