"""Message broker: FIFO task queue with at-least-once delivery."""

from __future__ import annotations

import asyncio
from collections import deque
from typing import Optional

from .clock import Clock
from .tasks import Task


class BrokerError(Exception):
    pass


class DuplicateTaskError(BrokerError):
    """A task with this id was already enqueued."""


class QueueFullError(BrokerError):
    """Backpressure: the queue bound was reached."""


class InProcessBroker:
    """Single-queue broker for in-process runs.

    Delivered tasks stay in flight until acknowledged; a visibility
    timeout requeues tasks whose worker died, with the attempt counter
    bumped (at-least-once delivery).
    """

    def __init__(
        self,
        clock: Clock,
        max_queue: Optional[int] = None,
        visibility_timeout: float = 30.0,  # simulated seconds
    ):
        self.clock = clock
        self.max_queue = max_queue
        self.visibility_timeout = visibility_timeout
        self._queue: deque[Task] = deque()
        self._seen_ids: set[str] = set()
        self._inflight: dict[str, tuple[Task, str, float]] = {}  # id -> (task, worker, deadline wall)
        self._nonempty = asyncio.Condition()
        self._monitor: Optional[asyncio.Task] = None

    # -- lifecycle

    def start(self) -> None:
        if self._monitor is None:
            self._monitor = asyncio.get_running_loop().create_task(self._redelivery_loop())

    async def close(self) -> None:
        if self._monitor is not None:
            self._monitor.cancel()
            try:
                await self._monitor
            except asyncio.CancelledError:
                pass
            self._monitor = None

    # -- queue interface

    async def enqueue(self, task: Task) -> None:
        flat = task.id.flat()
        if flat in self._seen_ids:
            raise DuplicateTaskError(flat)
        if self.max_queue is not None and len(self._queue) >= self.max_queue:
            raise QueueFullError(f"queue bound {self.max_queue} reached")
        self._seen_ids.add(flat)
        self._queue.append(task)
        async with self._nonempty:
            self._nonempty.notify_all()

    async def fetch(self, worker_id: str, limit: int) -> list[Task]:
        """Non-blocking competitive fetch of up to `limit` tasks."""
        got: list[Task] = []
        deadline = self.clock.now() + self.clock.to_wall(self.visibility_timeout)
        while self._queue and len(got) < limit:
            task = self._queue.popleft()
            self._inflight[task.id.flat()] = (task, worker_id, deadline)
            got.append(task)
        return got

    async def ack(self, task_id: str) -> None:
        self._inflight.pop(task_id, None)

    async def nack(self, task_id: str) -> None:
        """Return an unprocessed task to the front of the queue."""
        entry = self._inflight.pop(task_id, None)
        if entry is None:
            return
        task = entry[0]
        task.attempt += 1
        self._queue.appendleft(task)
        async with self._nonempty:
            self._nonempty.notify_all()

    def qsize(self) -> int:
        return len(self._queue)

    def inflight_count(self) -> int:
        return len(self._inflight)

    async def wait_nonempty(self, timeout_wall: float) -> None:
        """Block until the queue may have items, or the timeout elapses."""
        if self._queue:
            return
        async with self._nonempty:
            try:
                await asyncio.wait_for(self._nonempty.wait(), timeout_wall)
            except (asyncio.TimeoutError, TimeoutError):
                pass

    async def ping(self) -> bool:
        return True

    # -- redelivery

    async def _redelivery_loop(self) -> None:
        interval = max(self.clock.to_wall(self.visibility_timeout) / 4, 0.005)
        while True:
            await asyncio.sleep(interval)
            now = self.clock.now()
            expired = [tid for tid, (_, _, dl) in self._inflight.items() if dl <= now]
            for tid in expired:
                task, _, _ = self._inflight.pop(tid)
                task.attempt += 1
                self._queue.append(task)
            if expired:
                async with self._nonempty:
                    self._nonempty.notify_all()
