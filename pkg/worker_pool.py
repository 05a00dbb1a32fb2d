from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def ordered_map(func: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> List[R]:
    """Applica `func` a ogni task e restituisce i risultati nell'ordine dei task.

    Con workers > 1 usa un ProcessPoolExecutor; l'ordine del risultato non dipende
    dallo scheduling, quindi l'aggregazione a valle resta deterministica.
    `func` deve essere una funzione di modulo (picklabile).
    """

    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]

    chunksize = max(1, len(tasks) // (workers * 4))
    logger.debug("ordered_map: %d task su %d processi (chunksize=%d)", len(tasks), workers, chunksize)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, tasks, chunksize=chunksize))

