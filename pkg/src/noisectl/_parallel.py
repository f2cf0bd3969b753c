import os
from concurrent.futures import ThreadPoolExecutor

_THREADS = None


def set_threads(n):
    global _THREADS
    _THREADS = None if n is None else max(1, int(n))


def get_threads():
    if _THREADS is not None:
        return _THREADS
    env = os.environ.get("NOISECTL_THREADS")
    return max(1, int(env)) if env else 1


def pmap(fn, items):
    """Ordered map; results never depend on the thread count."""
    items = list(items)
    n = get_threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
