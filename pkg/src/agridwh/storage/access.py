"""Per-context log of which tier resources a piece of work touched."""
from __future__ import annotations

import contextvars
from contextlib import contextmanager

_log: contextvars.ContextVar[list | None] = contextvars.ContextVar("agridwh_access", default=None)


@contextmanager
def record_access():
    entries: list[tuple[str, str]] = []
    token = _log.set(entries)
    try:
        yield entries
    finally:
        _log.reset(token)


def note(tier: str, resource: str) -> None:
    entries = _log.get()
    if entries is not None:
        entries.append((tier, resource))
