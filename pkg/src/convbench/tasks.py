"""Core task-queue domain types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

QUEUED = "queued"
RUNNING = "running"
SUCCEEDED = "succeeded"
FAILED = "failed"
TIMED_OUT = "timed_out"

TERMINAL_STATUSES = frozenset({SUCCEEDED, FAILED, TIMED_OUT})

# queued -> running -> terminal; running -> queued is the redelivery path
# (a crashed worker's task goes back on the queue with a bumped attempt).
_ALLOWED_TRANSITIONS = {
    QUEUED: {RUNNING, QUEUED},
    RUNNING: {SUCCEEDED, FAILED, TIMED_OUT, QUEUED},
}


@dataclass(frozen=True)
class TaskId:
    job_id: str
    sequence: str  # hierarchical ("0", "0.3", "0.3.1"): unique within the job

    def flat(self) -> str:
        return f"{self.job_id}/{self.sequence}"

    @staticmethod
    def parse(flat: str) -> "TaskId":
        job_id, _, seq = flat.partition("/")
        return TaskId(job_id, seq)


@dataclass
class Task:
    id: TaskId
    kind: str
    payload: dict[str, Any]
    parent: Optional[TaskId] = None
    created_at: float = 0.0
    attempt: int = 1
    timeout_s: Optional[float] = None  # simulated seconds

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id.flat(),
            "kind": self.kind,
            "payload": self.payload,
            "parent": self.parent.flat() if self.parent else None,
            "created_at": self.created_at,
            "attempt": self.attempt,
            "timeout_s": self.timeout_s,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "Task":
        return Task(
            id=TaskId.parse(d["id"]),
            kind=d["kind"],
            payload=d.get("payload") or {},
            parent=TaskId.parse(d["parent"]) if d.get("parent") else None,
            created_at=d.get("created_at", 0.0),
            attempt=d.get("attempt", 1),
            timeout_s=d.get("timeout_s"),
        )


@dataclass
class TaskState:
    id: TaskId
    status: str = QUEUED
    kind: str = ""
    parent: Optional[TaskId] = None
    worker: Optional[str] = None
    created_at: float = 0.0
    started_at: Optional[float] = None
    finished_at: Optional[float] = None
    attempt: int = 1
    result: Optional[Any] = None  # small JSON results live inline
    result_key: Optional[str] = None  # large results go to the blob store
    error: Optional[str] = None

    @property
    def terminal(self) -> bool:
        return self.status in TERMINAL_STATUSES

    def can_transition(self, new_status: str) -> bool:
        return new_status in _ALLOWED_TRANSITIONS.get(self.status, set())

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id.flat(),
            "status": self.status,
            "kind": self.kind,
            "parent": self.parent.flat() if self.parent else None,
            "worker": self.worker,
            "created_at": self.created_at,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "attempt": self.attempt,
            "result": self.result,
            "result_key": self.result_key,
            "error": self.error,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "TaskState":
        return TaskState(
            id=TaskId.parse(d["id"]),
            status=d["status"],
            kind=d.get("kind", ""),
            parent=TaskId.parse(d["parent"]) if d.get("parent") else None,
            worker=d.get("worker"),
            created_at=d.get("created_at", 0.0),
            started_at=d.get("started_at"),
            finished_at=d.get("finished_at"),
            attempt=d.get("attempt", 1),
            result=d.get("result"),
            result_key=d.get("result_key"),
            error=d.get("error"),
        )


@dataclass
class Job:
    job_id: str
    submitted_at: float
    spec: dict[str, Any]
    root_task: TaskId


@dataclass
class WorkerConfig:
    worker_id: str
    prefetch_limit: int = 1  # X: tasks held concurrently before producer bonuses
    restart_after_tasks: Optional[int] = 64
    restart_delay: float = 10.0  # simulated seconds
    queue_name: str = "convert"
    poll_wall_s: float = 0.01  # idle poll backstop, wall seconds

    def __post_init__(self) -> None:
        if self.prefetch_limit < 1:
            raise ValueError("prefetch_limit must be >= 1")
        if self.restart_after_tasks is not None and self.restart_after_tasks < 1:
            raise ValueError("restart_after_tasks must be >= 1 when set")


@dataclass
class StoreConfig:
    latency_per_op: float = 0.25  # simulated seconds
    capacity_ops_per_s: Optional[float] = None  # simulated ops/second
    persistent: bool = False
    root_dir: Optional[str] = None  # required when persistent

    def __post_init__(self) -> None:
        if self.latency_per_op < 0:
            raise ValueError("latency_per_op must be >= 0")
        if self.capacity_ops_per_s is not None and self.capacity_ops_per_s <= 0:
            raise ValueError("capacity_ops_per_s must be > 0 when set")
