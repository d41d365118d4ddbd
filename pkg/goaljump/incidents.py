import logging
from datetime import datetime, timedelta
from typing import Dict, Union


class IncidentLog:
    """
    Counts repeated incidents (eg. diverged episodes, skipped updates) and logs at most one
    warning per ``log_freq`` for each kind, with the running total.

    :param logger: The logger to warn on.
    :type logger: :class:`logging.Logger`, optional
    :param log_freq: How frequently to log, defaults to 60.
    :type log_freq: Union[int (as seconds), float, timedelta], optional
    :param min_count_for_log: The number of incidents of one kind required before anything is logged.
    :type min_count_for_log: int, optional
    """

    def __init__(self, logger: logging.Logger = logging.getLogger("goaljump"),
                 log_freq: Union[int, float, timedelta] = 60, min_count_for_log: int = 1):
        self.logger = logger
        if not isinstance(log_freq, timedelta):
            log_freq = timedelta(seconds=log_freq)
        self.log_freq = log_freq
        self.min_count_for_log = min_count_for_log
        self.counts: Dict[str, int] = {}
        self.last_log: Dict[str, datetime] = {}

    def record(self, kind: str, detail: str = "", count: int = 1) -> bool:
        """
        Count an incident. Returns True if a warning was logged.
        """
        total = self.counts.get(kind, 0) + count
        self.counts[kind] = total
        self.logger.debug(f"Incident {kind}: {detail}")
        if total < self.min_count_for_log:
            return False
        now = datetime.utcnow()
        if kind in self.last_log and now - self.last_log[kind] < self.log_freq:
            return False
        self.last_log[kind] = now
        self.logger.warning(f"{kind}: {total} so far" + (f", latest: {detail}" if detail else ""))
        return True

    def merge(self, counts: Dict[str, int]):
        """Add the counts reported by a worker process."""
        for kind, count in sorted(counts.items()):
            if count:
                self.record(kind, "reported by a rollout worker", count)

    def total(self, kind: str) -> int:
        return self.counts.get(kind, 0)
