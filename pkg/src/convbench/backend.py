"""Result backend: task states, inline results and completion watching."""

from __future__ import annotations

import asyncio
from typing import Any, Callable, Optional

from .clock import Clock
from .tasks import QUEUED, RUNNING, TERMINAL_STATUSES, Job, Task, TaskId, TaskState


class BackendError(Exception):
    pass


class IllegalTransition(BackendError):
    """Rejected state change; carries the current state."""

    def __init__(self, current: TaskState, requested: str):
        super().__init__(f"{current.id.flat()}: {current.status} -> {requested} not allowed")
        self.current = current
        self.requested = requested


class UnknownTask(BackendError):
    pass


class ResultBackend:
    """In-memory task state store with terminal-state notification."""

    def __init__(self, clock: Clock):
        self.clock = clock
        self._states: dict[str, TaskState] = {}
        self._jobs: dict[str, Job] = {}
        self._done_events: dict[str, asyncio.Event] = {}
        self._done_callbacks: dict[str, list[Callable[[TaskState], None]]] = {}

    # -- job registry

    def register_job(self, job: Job) -> None:
        self._jobs[job.job_id] = job

    def get_job(self, job_id: str) -> Optional[Job]:
        return self._jobs.get(job_id)

    # -- state machine

    async def register_task(self, task: Task) -> TaskState:
        """Create the queued state for a freshly enqueued task."""
        flat = task.id.flat()
        state = TaskState(
            id=task.id,
            status=QUEUED,
            kind=task.kind,
            parent=task.parent,
            created_at=task.created_at,
            attempt=task.attempt,
        )
        self._states[flat] = state
        return state

    async def set_running(self, task_id: TaskId, worker: str, attempt: int) -> TaskState:
        state = self._require(task_id)
        if not state.can_transition(RUNNING):
            raise IllegalTransition(state, RUNNING)
        state.status = RUNNING
        state.worker = worker
        state.attempt = attempt
        state.started_at = self.clock.now()
        return state

    async def set_terminal(
        self,
        task_id: TaskId,
        status: str,
        result: Any = None,
        result_key: str | None = None,
        error: str | None = None,
    ) -> TaskState:
        if status not in TERMINAL_STATUSES:
            raise ValueError(f"not a terminal status: {status}")
        state = self._require(task_id)
        if not state.can_transition(status):
            raise IllegalTransition(state, status)
        state.status = status
        state.result = result
        state.result_key = result_key
        state.error = error
        state.finished_at = self.clock.now()
        self._notify_done(state)
        return state

    async def requeue(self, task_id: TaskId, attempt: int) -> TaskState:
        """Redelivery path: put a non-terminal task back to queued."""
        state = self._require(task_id)
        if state.terminal:
            raise IllegalTransition(state, QUEUED)
        state.status = QUEUED
        state.worker = None
        state.attempt = attempt
        return state

    async def get_state(self, task_id: TaskId) -> TaskState:
        return self._require(task_id)

    def _require(self, task_id: TaskId) -> TaskState:
        state = self._states.get(task_id.flat())
        if state is None:
            raise UnknownTask(task_id.flat())
        return state

    # -- completion watching

    async def wait_terminal(self, task_id: TaskId) -> TaskState:
        flat = task_id.flat()
        state = self._states.get(flat)
        if state is not None and state.terminal:
            return state
        ev = self._done_events.setdefault(flat, asyncio.Event())
        await ev.wait()
        return self._require(task_id)

    def on_terminal(self, task_id: TaskId, callback: Callable[[TaskState], None]) -> None:
        """Fire `callback(state)` when the task reaches a terminal state."""
        flat = task_id.flat()
        state = self._states.get(flat)
        if state is not None and state.terminal:
            callback(state)
            return
        self._done_callbacks.setdefault(flat, []).append(callback)

    def _notify_done(self, state: TaskState) -> None:
        flat = state.id.flat()
        ev = self._done_events.pop(flat, None)
        if ev is not None:
            ev.set()
        for cb in self._done_callbacks.pop(flat, []):
            cb(state)

    # -- introspection used by tests and metrics

    def states(self) -> list[TaskState]:
        return list(self._states.values())

    async def ping(self) -> bool:
        return True
