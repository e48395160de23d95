"""
Semilab - Utility Functions Module

Shared plumbing for the simulation and solver modules: environment-driven
settings, chunking of ensembles for parallel execution, the parallel gather
helper and retry decorators for file output.

Key Features:
- `.env` / environment overrides with the SEMILAB_ prefix
- Ensemble chunking with fixed chunk boundaries (thread-count independent)
- Thread-parallel map over chunks with ordered results and progress bars
- Retry decorator for robust writes
"""

import asyncio
import logging
import os
from typing import Any, Callable, List, Sequence, TypeVar

import dotenv
from tenacity import retry, stop_after_attempt, wait_fixed
from tqdm import tqdm
from tqdm.asyncio import tqdm_asyncio

from .errors import OutputError

logger = logging.getLogger(__name__)

# Load environment variables for run settings
dotenv.load_dotenv()

ENV_PREFIX = "SEMILAB_"

T = TypeVar("T")
R = TypeVar("R")


def env_setting(name: str, default: Any = None) -> Any:
    """
    Read a SEMILAB_-prefixed environment variable.

    Args:
        name: Setting name without prefix (e.g. "SEED")
        default: Value returned when the variable is unset or empty

    Returns:
        Raw string value, or default
    """
    value = os.getenv(ENV_PREFIX + name)
    if value is None or value == "":
        return default
    return value


def progress_enabled() -> bool:
    return str(env_setting("PROGRESS", "0")).lower() in {"1", "true", "yes", "on"}


def progress(iterable, **kwargs):
    """tqdm wrapper honouring SEMILAB_PROGRESS."""
    kwargs.setdefault("leave", False)
    return tqdm(iterable, disable=not progress_enabled(), **kwargs)


def handle_max_retries(retry_state):
    """
    Turn retry exhaustion into an OutputError.

    Args:
        retry_state: Tenacity retry state object containing error information

    Raises:
        OutputError: always, with the last underlying exception message
    """
    last_exception = retry_state.outcome.exception()
    target = retry_state.args[0] if retry_state.args else None
    logger.error(f"Write to {target} failed after max retries: {last_exception}")
    raise OutputError(f"could not write {target}: {last_exception}", path=str(target))


def retry_io(wait_seconds: float = 0.2, max_retries: int = 3):
    """
    Create a retry decorator for file writes.

    Args:
        wait_seconds: Seconds to wait between attempts
        max_retries: Attempts before giving up

    Returns:
        Tenacity retry decorator
    """
    return retry(
        stop=stop_after_attempt(max_retries),
        wait=wait_fixed(wait_seconds),
        retry_error_callback=handle_max_retries,
    )


def chunk_sizes(total: int, chunk: int) -> List[int]:
    """
    Fixed-size chunk lengths covering `total` items.

    Chunk boundaries depend only on (total, chunk), never on worker count, so
    chunk k can be bound to child stream k.
    """
    if total <= 0:
        return []
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


async def _gather(fn: Callable[[T], R], items: Sequence[T], threads: int, desc: str) -> List[R]:
    semaphore = asyncio.Semaphore(max(1, threads))

    async def _one(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(fn, item)

    return await tqdm_asyncio.gather(
        *[_one(item) for item in items],
        desc=desc,
        leave=False,
        disable=not progress_enabled(),
    )


def run_parallel(fn: Callable[[T], R], items: Sequence[T], threads: int = 1, desc: str = "chunks") -> List[R]:
    """
    Map fn over items on up to `threads` worker threads.

    Results are returned in item order, so any reduction over them has a fixed
    summation order.

    Args:
        fn: Pure function of one item
        items: Work items (typically (chunk_index, size) pairs)
        threads: Maximum concurrent workers
        desc: Progress bar label

    Returns:
        List of fn(item) in the order of items
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in progress(items, desc=desc)]
    return asyncio.run(_gather(fn, items, threads, desc))
