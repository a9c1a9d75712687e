"""Persistent key-value caches backed by append-only JSON Lines files.

Two concrete caches share one implementation: coalition-utility entries
({"coalition": <hex>, "u": <real>}) and raw model responses
({"digest": <hex>, "response": <text>}). Keys are never overwritten with a
different value; concurrent writers race under first-writer-wins. A failed
append degrades the cache to memory-only with a single warning.
"""

from __future__ import annotations

import json
import threading
import warnings
from typing import Callable, Optional

from .coalition import Coalition
from .errors import ConsistencyError
from .game import UtilityFn


class _JsonlCache:
    key_field = "key"
    value_field = "value"

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self.entries: dict = {}
        self._lock = threading.Lock()
        self._write_failed = False

    @classmethod
    def load(cls, path: str):
        """Bind to ``path``, reading existing entries; a missing file is an empty cache."""
        cache = cls(path=path)
        try:
            fh = open(path, "r", encoding="utf-8")
        except FileNotFoundError:
            return cache
        with fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    key, value = row[cls.key_field], row[cls.value_field]
                except (json.JSONDecodeError, KeyError, TypeError):
                    warnings.warn(f"{path}:{lineno}: skipping malformed cache line")
                    continue
                cache.entries.setdefault(key, value)
        return cache

    def get(self, key):
        with self._lock:
            return self.entries.get(key)

    def put(self, key, value) -> None:
        with self._lock:
            if key in self.entries:
                return
            self.entries[key] = value
            self._append({self.key_field: key, self.value_field: value})

    def _append(self, row: dict) -> None:
        if self.path is None or self._write_failed:
            return
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        except OSError as exc:
            self._write_failed = True
            warnings.warn(
                f"cache file {self.path} is not writable ({exc}); continuing in memory"
            )

    def persist(self, path: Optional[str] = None) -> None:
        """Rewrite all entries (insertion order) to ``path`` or the bound file."""
        target = path if path is not None else self.path
        if target is None:
            raise ValueError("no path bound to this cache")
        with self._lock, open(target, "w", encoding="utf-8") as fh:
            for key, value in self.entries.items():
                fh.write(
                    json.dumps({self.key_field: key, self.value_field: value},
                               sort_keys=True) + "\n"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self.entries


class UtilityCache(_JsonlCache):
    key_field = "coalition"
    value_field = "u"


class ResponseCache(_JsonlCache):
    key_field = "digest"
    value_field = "response"


def cached_utility(cache: UtilityCache, inner: UtilityFn) -> UtilityFn:
    """Memoize a deterministic utility oracle through the cache."""

    def oracle(coalition: Coalition) -> float:
        key = coalition.to_hex()
        hit = cache.get(key)
        if hit is not None:
            return hit
        value = inner(coalition)
        cache.put(key, value)
        return value

    return oracle


def inspect_file(path: str) -> dict:
    """Line and entry counts plus the detected cache kind, for the CLI."""
    kinds = {"coalition": "utility", "digest": "response"}
    lines = 0
    malformed = 0
    keys: set = set()
    kind = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            lines += 1
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                malformed += 1
                continue
            matched = False
            for field, name in kinds.items():
                if isinstance(row, dict) and field in row:
                    kind = kind or name
                    keys.add(row[field])
                    matched = True
                    break
            if not matched:
                malformed += 1
    return {"path": str(path), "kind": kind, "lines": lines, "entries": len(keys),
            "duplicates": lines - malformed - len(keys), "malformed": malformed}


def compact_file(path: str) -> dict:
    """Drop duplicate keys (first occurrence wins) and rewrite in place."""
    info = inspect_file(path)
    if info["kind"] is None:
        raise ConsistencyError(f"{path} is not a recognized cache file")
    cls = UtilityCache if info["kind"] == "utility" else ResponseCache
    cache = cls.load(path)
    cache.persist()
    info["entries_after"] = len(cache)
    return info
