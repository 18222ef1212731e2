"""Append-only event log: the evidence base for every metric."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

from .clock import Clock

JOB_SUBMITTED = "job_submitted"
TASK_ENQUEUED = "task_enqueued"
TASK_STARTED = "task_started"
TASK_FINISHED = "task_finished"
WORKER_IDLE = "worker_idle"
WORKER_RESTART = "worker_restart"
STORE_TXN = "store_txn"
INFER_REQUEST = "infer_request"
INFER_REPLY = "infer_reply"

EVENT_KINDS = frozenset(
    {
        JOB_SUBMITTED,
        TASK_ENQUEUED,
        TASK_STARTED,
        TASK_FINISHED,
        WORKER_IDLE,
        WORKER_RESTART,
        STORE_TXN,
        INFER_REQUEST,
        INFER_REPLY,
    }
)


@dataclass(frozen=True)
class Event:
    timestamp: float  # wall seconds on the log's clock
    kind: str
    task: Optional[str] = None  # flattened TaskId ("job/seq")
    worker: Optional[str] = None
    meta: dict[str, Any] = field(default_factory=dict)


class EventLog:
    """Collects events from workers, stores and model clients.

    Single event loop, so a plain list append is safe. The log keeps the
    clock that produced its timestamps so consumers can convert wall
    durations back to simulated seconds.
    """

    def __init__(self, clock: Clock):
        self.clock = clock
        self._events: list[Event] = []

    def emit(self, kind: str, task: str | None = None, worker: str | None = None, **meta: Any) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {kind}")
        ev = Event(timestamp=self.clock.now(), kind=kind, task=task, worker=worker, meta=meta)
        self._events.append(ev)
        return ev

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def snapshot(self) -> list[Event]:
        return list(self._events)

    def select(self, kind: str | None = None, job_id: str | None = None) -> list[Event]:
        """Events filtered by kind and/or owning job."""
        out = []
        for ev in self._events:
            if kind is not None and ev.kind != kind:
                continue
            if job_id is not None and ev.meta.get("job_id") != job_id:
                continue
            out.append(ev)
        return out

    def job_ids(self) -> list[str]:
        seen: list[str] = []
        for ev in self._events:
            jid = ev.meta.get("job_id")
            if jid and jid not in seen:
                seen.append(jid)
        return seen
