import concurrent.futures

from .config import get_settings


def resolve_threads(threads=None):
    return get_settings().threads if threads is None else max(1, int(threads))


def parallel_map(func, items, threads=None):
    """Apply ``func`` to every item and return the results in input order."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
