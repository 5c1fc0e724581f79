"""Пул процессов для покубовой и поклеточной работы"""
import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List, Optional

logger = logging.getLogger(__name__)

# Контекст воркера, ставится инициализатором пула
_context: Any = None


def _install(context: Any) -> None:
    global _context
    _context = context


def _apply(fn: Callable, context: Any, item: Any) -> Any:
    return fn(item) if context is None else fn(context, item)


def _run_chunk(fn: Callable, chunk: List[Any]) -> List[Any]:
    return [_apply(fn, _context, item) for item in chunk]


class WorkerPool:
    """Упорядоченный map по процессам.

    fn вызывается как fn(context, item), а для пула без контекста как fn(item).
    Контекст (поле, решётка) передаётся в каждый процесс один раз через инициализатор.
    При workers == 1 всё выполняется в текущем процессе.
    """

    def __init__(self, workers: int = 1, context: Any = None):
        if workers < 1:
            raise ValueError(f"workers должен быть не меньше 1: {workers}")
        self.workers = workers
        self.context = context
        self._executor: Optional[ProcessPoolExecutor] = None

    def start(self) -> None:
        if self.workers > 1 and self._executor is None:
            self._executor = ProcessPoolExecutor(
                max_workers=self.workers, initializer=_install, initargs=(self.context,)
            )
            logger.debug(f"Пул запущен: {self.workers} процессов")

    def stop(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
            logger.debug("Пул остановлен")

    def __enter__(self) -> "WorkerPool":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def _chunks(self, items: List[Any]) -> List[List[Any]]:
        size = max(1, len(items) // (self.workers * 4))
        return [items[i:i + size] for i in range(0, len(items), size)]

    def map(self, fn: Callable, items: Iterable[Any]) -> List[Any]:
        items = list(items)
        if self._executor is None or len(items) < 2:
            return [_apply(fn, self.context, item) for item in items]
        chunks = self._chunks(items)
        results: List[Any] = []
        for part in self._executor.map(_run_chunk, [fn] * len(chunks), chunks):
            results.extend(part)
        return results

    async def amap(self, fn: Callable, items: Iterable[Any]) -> List[Any]:
        """map без блокировки цикла событий"""
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(None, self.map, fn, list(items))
