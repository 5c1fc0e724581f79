"""Конфигурация мешера: переменные окружения и параметры командной строки"""
import os
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional, Any, Dict
from dotenv import load_dotenv

from gmsurf.utils.constants import (
    DEFAULT_DECAY,
    DEFAULT_ISOVALUE,
    DEFAULT_TAU,
    DEFAULT_CELL_TARGET,
    DEFAULT_MAX_DEPTH,
    DEFAULT_KERNEL_CUTOFF_EPS,
    MAX_KERNEL_CUTOFF_EPS,
    DEFAULT_ORACLE_SPACING,
    DEFAULT_ORACLE_MAX_POINTS,
)
from gmsurf.utils.errors import ConfigError

# Загружаем переменные окружения
load_dotenv()

logger = logging.getLogger(__name__)

LOG_LEVEL = os.getenv("GMSURF_LOG_LEVEL", "INFO").upper()
ORACLE_MAX_POINTS = int(float(os.getenv("GMSURF_ORACLE_MAX_POINTS", str(DEFAULT_ORACLE_MAX_POINTS))))


def env_workers() -> Optional[int]:
    """Число процессов из GMSURF_WORKERS, None если не задано или некорректно"""
    raw = os.getenv("GMSURF_WORKERS", "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"⚠️ GMSURF_WORKERS={raw!r} не является числом, используется число ядер")
        return None


def default_workers() -> int:
    """Число воркеров по умолчанию: ядра процессора"""
    return os.cpu_count() or 1


@dataclass
class Config:
    """Параметры одного запуска"""
    input_path: Optional[Path] = None
    output_path: Optional[Path] = None
    report_path: Optional[Path] = None
    decay: float = DEFAULT_DECAY
    isovalue: float = DEFAULT_ISOVALUE
    tau: float = DEFAULT_TAU
    cell: float = DEFAULT_CELL_TARGET
    max_depth: int = DEFAULT_MAX_DEPTH
    cutoff_eps: float = DEFAULT_KERNEL_CUTOFF_EPS
    workers: int = 1
    spacing: float = DEFAULT_ORACLE_SPACING
    oracle_max_points: int = ORACLE_MAX_POINTS

    @classmethod
    def from_args(cls, args: Any) -> "Config":
        """Собирает конфигурацию из argparse namespace, --workers важнее GMSURF_WORKERS"""
        workers = getattr(args, "workers", None)
        if workers is None:
            workers = env_workers() or default_workers()

        def path(name: str) -> Optional[Path]:
            value = getattr(args, name, None)
            return Path(value) if value else None

        config = cls(
            input_path=path("input"),
            output_path=path("output"),
            report_path=path("report"),
            decay=getattr(args, "decay", DEFAULT_DECAY),
            isovalue=getattr(args, "isovalue", DEFAULT_ISOVALUE),
            tau=getattr(args, "tau", DEFAULT_TAU),
            cell=getattr(args, "cell", DEFAULT_CELL_TARGET),
            max_depth=getattr(args, "max_depth", DEFAULT_MAX_DEPTH),
            cutoff_eps=getattr(args, "cutoff_eps", DEFAULT_KERNEL_CUTOFF_EPS),
            workers=workers,
            spacing=getattr(args, "spacing", DEFAULT_ORACLE_SPACING),
        )
        config.validate()
        return config

    def validate(self) -> None:
        for name in ("decay", "isovalue", "tau", "cell", "cutoff_eps", "spacing"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"параметр {name} должен быть положительным, получено {value}")
        if self.max_depth < 0:
            raise ConfigError(f"max_depth не может быть отрицательным: {self.max_depth}")
        if self.workers < 1:
            raise ConfigError(f"workers должен быть не меньше 1: {self.workers}")
        if self.cutoff_eps > MAX_KERNEL_CUTOFF_EPS:
            raise ConfigError(f"cutoff_eps должен лежать в (0, {MAX_KERNEL_CUTOFF_EPS}]")
        if self.input_path is not None and not self.input_path.exists():
            raise ConfigError(f"входной файл не найден: {self.input_path}")

    def as_dict(self) -> Dict[str, Any]:
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(self).items()}
