import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar, Union

from app.core.exceptions import ElastishapeException

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

Outcome = Union[R, ElastishapeException]


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[Outcome]:
    """Applies fn to every item, returning results in input order.

    Domain errors are captured per item so one failing pair or shape does not
    abort the batch; any other exception propagates.
    """
    items = list(items)

    def _guarded(item: T) -> Outcome:
        try:
            return fn(item)
        except ElastishapeException as e:
            logger.debug(f"Item {item!r} failed: {e.detail}")
            return e

    if workers <= 1 or len(items) <= 1:
        return [_guarded(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_guarded, items))


def failures(outcomes: list[Outcome]) -> list[tuple[int, ElastishapeException]]:
    return [(i, out) for i, out in enumerate(outcomes) if isinstance(out, ElastishapeException)]
