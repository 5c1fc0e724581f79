import argparse
import asyncio
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from gmsurf.handlers import commands
from gmsurf.utils.config import LOG_LEVEL, Config
from gmsurf.utils.constants import (
    DEFAULT_CELL_TARGET,
    DEFAULT_DECAY,
    DEFAULT_ISOVALUE,
    DEFAULT_KERNEL_CUTOFF_EPS,
    DEFAULT_MAX_DEPTH,
    DEFAULT_ORACLE_SPACING,
    DEFAULT_TAU,
    EXIT_ERROR,
)
from gmsurf.utils.errors import GmsurfError

# Загружаем переменные окружения
load_dotenv()

logger = logging.getLogger(__name__)

COMMANDS = {
    "mesh": commands.cmd_mesh,
    "check": commands.cmd_check,
    "stats": commands.cmd_stats,
    "oracle": commands.cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    """Парсер командной строки с подкомандами mesh, check, stats, oracle"""
    parser = argparse.ArgumentParser(prog="gmsurf", description="Мешер гауссовой молекулярной поверхности")
    parser.add_argument("command", choices=sorted(COMMANDS), help="mesh | check | stats | oracle")
    parser.add_argument("--in", dest="input", required=True, help="PQR для mesh/oracle, OFF для check/stats")
    parser.add_argument("--out", dest="output", help="куда записать OFF")
    parser.add_argument("--report", help="куда записать блок key=value")
    parser.add_argument("--decay", type=float, default=DEFAULT_DECAY, help="коэффициент затухания D")
    parser.add_argument("--isovalue", type=float, default=DEFAULT_ISOVALUE, help="уровень c")
    parser.add_argument("--tau", type=float, default=DEFAULT_TAU, help="допуск аппроксимации")
    parser.add_argument("--cell", type=float, default=DEFAULT_CELL_TARGET, help="ребро начального куба, Å")
    parser.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH, help="максимальная глубина деления")
    parser.add_argument("--cutoff-eps", type=float, default=DEFAULT_KERNEL_CUTOFF_EPS, help="обрезка ядра")
    parser.add_argument("--workers", type=int, default=None, help="число процессов (по умолчанию GMSURF_WORKERS или все ядра)")
    parser.add_argument("--spacing", type=float, default=DEFAULT_ORACLE_SPACING, help="шаг сетки оракула, Å")
    parser.add_argument("-v", "--verbose", action="store_true", help="подробный лог")
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    """Точка входа: разбор аргументов, запуск подкоманды, код выхода"""
    args = build_parser().parse_args(argv)

    # Настройка логирования
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        config = Config.from_args(args)
    except GmsurfError as e:
        logger.error(f"Некорректные параметры: {e}")
        sys.exit(EXIT_ERROR)

    try:
        code = asyncio.run(COMMANDS[args.command](config))
    except KeyboardInterrupt:
        logger.info("Получен сигнал остановки")
        code = EXIT_ERROR
    sys.exit(code)


if __name__ == "__main__":
    main()
