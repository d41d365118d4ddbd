import math
from typing import List, Sequence, Tuple

import numpy as np

from .. import exceptions


class Section(dict):
    """
    A parsed config mapping that knows its dotted path.

    Every accessor raises :class:`ConfigError <goaljump.exceptions.ConfigError>` naming the
    offending field instead of a bare ``KeyError``/``TypeError``.
    """

    def __init__(self, data, path: str = ""):
        if not isinstance(data, dict):
            raise exceptions.ConfigError(f"{path or '<root>'} must be a mapping, got {type(data).__name__}")
        super().__init__(data)
        self.path = path

    def where(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def __missing__(self, key):
        raise exceptions.ConfigError(f"missing field {self.where(key)}")

    def sub(self, key: str) -> "Section":
        return Section(self[key], self.where(key))

    def number(self, key: str, positive: bool = False, nonneg: bool = False) -> float:
        value = self[key]
        if isinstance(value, bool):
            raise exceptions.ConfigError(f"{self.where(key)} must be a number, got a boolean")
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise exceptions.ConfigError(f"{self.where(key)} must be a number, got {value!r}")
        if not math.isfinite(value):
            raise exceptions.ConfigError(f"{self.where(key)} must be finite")
        if positive and value <= 0:
            raise exceptions.ConfigError(f"{self.where(key)} must be > 0, got {value}")
        if nonneg and value < 0:
            raise exceptions.ConfigError(f"{self.where(key)} must be >= 0, got {value}")
        return value

    def integer(self, key: str, positive: bool = False) -> int:
        value = self[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise exceptions.ConfigError(f"{self.where(key)} must be an integer, got {value!r}")
        value = int(value)
        if positive and value <= 0:
            raise exceptions.ConfigError(f"{self.where(key)} must be > 0, got {value}")
        return value

    def flag(self, key: str) -> bool:
        value = self[key]
        if not isinstance(value, bool):
            raise exceptions.ConfigError(f"{self.where(key)} must be true or false, got {value!r}")
        return value

    def text(self, key: str, choices: Sequence[str] = ()) -> str:
        value = self[key]
        if not isinstance(value, str):
            raise exceptions.ConfigError(f"{self.where(key)} must be a string, got {value!r}")
        if choices and value not in choices:
            raise exceptions.ConfigError(f"{self.where(key)} must be one of {', '.join(choices)}, got {value!r}")
        return value

    def vector(self, key: str, length: int = None, positive: bool = False) -> np.ndarray:
        value = self[key]
        if not isinstance(value, (list, tuple)):
            raise exceptions.ConfigError(f"{self.where(key)} must be a list, got {value!r}")
        if length is not None and len(value) != length:
            raise exceptions.ConfigError(f"{self.where(key)} must have {length} entries, got {len(value)}")
        items = Section({str(i): v for i, v in enumerate(value)}, self.where(key))
        return np.array([items.number(str(i), positive=positive) for i in range(len(value))])

    def pair(self, key: str, nonneg: bool = False, positive: bool = False) -> Tuple[float, float]:
        """A (lo, hi) range with lo <= hi."""
        lo, hi = self.vector(key, 2)
        if nonneg and lo < 0:
            raise exceptions.ConfigError(f"{self.where(key)} must not go below 0, got {lo}")
        if positive and lo <= 0:
            raise exceptions.ConfigError(f"{self.where(key)} must be > 0, got {lo}")
        if lo > hi:
            raise exceptions.ConfigError(f"{self.where(key)} has lo > hi ({lo} > {hi})")
        return float(lo), float(hi)

    def integers(self, key: str) -> List[int]:
        value = self[key]
        if not isinstance(value, (list, tuple)):
            raise exceptions.ConfigError(f"{self.where(key)} must be a list, got {value!r}")
        items = Section({str(i): v for i, v in enumerate(value)}, self.where(key))
        return [items.integer(str(i), positive=True) for i in range(len(value))]
