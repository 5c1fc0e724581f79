"""Константы для мешера"""

# Параметры гауссовой поверхности
DEFAULT_DECAY = 1.0  # D, скорость затухания ядра
DEFAULT_ISOVALUE = 1.0  # c, изозначение
DEFAULT_KERNEL_CUTOFF_EPS = 1e-9  # относительный порог обрезки ядра (к c)
MAX_KERNEL_CUTOFF_EPS = 1e-4

# Адаптивное разбиение
DEFAULT_TAU = 1e-2  # порог нормы старших коэффициентов (в единицах c)
DEFAULT_CELL_TARGET = 4.0  # ребро начального куба, Å
DEFAULT_MAX_DEPTH = 8
POLY_DEGREE = 3  # степень полинома по каждой оси, фиксирована
QUADRATURE_POINTS = 16  # узлов Гаусса-Лежандра на ось
MIN_INTERVAL_WIDTH = 1e-12

# SVD-расщепление тензора
FIRST_LEVEL_ENERGY = 0.99
SECOND_LEVEL_ENERGY = 0.99

# Контурирование ячейки
SAGITTA_LIMIT = 0.05  # в uv-координатах грани [-1,1]^2
ARC_REFINE_DEPTH = 4  # не больше 2^4 - 1 точек между соседними точками ветви
LINE_FACE_RATIO = 1e-12  # |s| ниже этой доли коэффициентов - грань линейная
BORDER_TOL = 1e-12  # решения у самой границы грани считаются вне её
CRITICAL_TOL = 1e-10  # совпадение фиксированных координат складок
NUDGE_TOL = 1e-12  # значения ближе к c (относительно) сдвигаются
NUDGE_SHIFT = 1e-9

# Сетка и проверки
OFF_DIGITS = 9
INTERSECTION_EPS = 1e-12

# Оракул
DEFAULT_ORACLE_SPACING = 0.2
DEFAULT_ORACLE_MAX_POINTS = 64_000_000
RAY_STEP = 0.05  # шаг поиска смены знака вдоль луча, Å
RAY_XTOL = 1e-13

# Коды выхода
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEFECTS = 2
