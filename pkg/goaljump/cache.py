from collections import OrderedDict, namedtuple
from hashlib import sha1
from json import dumps
from typing import Any, Callable, Hashable, Optional
from weakref import WeakSet

import numpy as np

caches = WeakSet()

CacheInfo = namedtuple("CacheInfo", ["name", "hits", "misses", "size", "max_size"])


def get_caches():
    """Caches that are still alive."""
    return tuple(caches)


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Cannot hash a value of type {type(value).__name__}")


def make_hashable(key: Any) -> Hashable:
    """Make a cache key hashable. Lists and dicts (eg. config sections) become a sha1 hex digest."""
    if isinstance(key, (list, dict)):
        return sha1(dumps(key, sort_keys=True, default=_json_default).encode()).hexdigest()
    return key


class Cache:
    """
    A small in-memory memoisation cache.

    Used to build each distinct reference motion once and to share loaded checkpoints between
    evaluation trials. The oldest entry is evicted when the cache is full.

    :param name: The name of the cache, reported by :meth:`get_info`.
    :type name: Optional[str]
    :param max_size: The maximum number of entries. None for no limit.
    :type max_size: Optional[int]
    """

    def __init__(self, name: Optional[str] = None, max_size: Optional[int] = None):
        self.name = name
        self.max_size = float('inf') if max_size is None else max_size
        self.base = OrderedDict()
        self.hits = 0
        self.misses = 0
        caches.add(self)

    def __len__(self):
        return len(self.base)

    def __contains__(self, key):
        return make_hashable(key) in self.base

    def _del_old(self):
        """Delete the oldest cache entry"""
        if len(self.base) > 0:
            self.base.popitem(last=False)

    def add(self, key, value):
        """Add an object to the cache"""
        key = make_hashable(key)
        if key not in self.base and len(self.base) >= self.max_size:
            self._del_old()
        self.base[key] = value

    def get(self, key):
        """Get an object from the cache, None if it is not cached"""
        key = make_hashable(key)
        if key in self.base:
            self.hits += 1
            return self.base[key]
        self.misses += 1

    def clear(self):
        self.base.clear()

    def get_info(self) -> CacheInfo:
        """Get the info for this cache"""
        max_size = None if self.max_size == float('inf') else self.max_size
        return CacheInfo(self.name, self.hits, self.misses, len(self.base), max_size)

    def execute(self, func: Callable, key=None, *args, **kwargs):
        """
        Execute a function and save the result to this cache.
        When this is called again with the same key, the cached result is served instead of executing again.
        If no key is given, the args and kwargs of the call are used.
        """
        if key is None:
            key = [repr(args), repr(sorted(kwargs.items()))]
        c = self.get(key)
        if c is not None:
            return c
        r = func(*args, **kwargs)
        self.add(key, r)
        return r
