"""Исключения мешера"""
from typing import Iterable, Optional


class GmsurfError(Exception):
    """Базовая ошибка, которую обработчики команд превращают в код выхода 1"""


class ConfigError(GmsurfError):
    pass


class PqrParseError(GmsurfError):
    """Ошибка разбора PQR с номером строки"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"строка {line}: {message}" if line is not None else message)


class EmptyInputError(GmsurfError):
    pass


class DegenerateIntervalError(GmsurfError):
    pass


class CellTopologyError(GmsurfError):
    """Несогласованная топология контура внутри одной ячейки"""

    def __init__(self, message: str, cell_id=None):
        self.cell_id = cell_id
        super().__init__(f"ячейка {cell_id}: {message}")


class WeldError(GmsurfError):
    def __init__(self, message: str, cells: Iterable = ()):
        self.cells = tuple(cells)
        super().__init__(f"{message} (ячейки {', '.join(map(str, self.cells))})")


class MeshError(GmsurfError):
    pass


class OffFormatError(GmsurfError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"строка {line}: {message}" if line is not None else message)


class OracleMemoryError(GmsurfError):
    pass
