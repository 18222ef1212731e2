"""Worker runtime: fetch loop, cooperative task interleaving, subtasks.

A worker holds up to X tasks at once (prefetch limit). Every running
task that has produced subtasks raises the limit by one until it
completes, which is what makes awaiting subtasks deadlock-free even on
a single worker. Producers can throttle their fan-out through a spawn
window so the shared queue stays short.
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass
from typing import Any, AsyncIterator, Awaitable, Callable, Generator, Iterable, Optional

from .backend import ResultBackend, UnknownTask
from .broker import InProcessBroker
from .clock import Clock
from .events import (
    TASK_ENQUEUED,
    TASK_FINISHED,
    TASK_STARTED,
    WORKER_IDLE,
    WORKER_RESTART,
    EventLog,
)
from .store import BlobStore
from .tasks import FAILED, SUCCEEDED, TIMED_OUT, Task, TaskId, TaskState, WorkerConfig

Handler = Callable[["TaskContext", dict], Awaitable[Any]]


class HandlerRegistry:
    """Maps task kinds to handler coroutines."""

    def __init__(self) -> None:
        self._handlers: dict[str, Handler] = {}

    def register(self, kind: str, handler: Handler | None = None):
        if handler is not None:
            self._handlers[kind] = handler
            return handler

        def deco(fn: Handler) -> Handler:
            self._handlers[kind] = fn
            return fn

        return deco

    def get(self, kind: str) -> Handler:
        try:
            return self._handlers[kind]
        except KeyError:
            raise KeyError(f"no handler registered for task kind {kind!r}") from None

    def kinds(self) -> list[str]:
        return sorted(self._handlers)


@dataclass
class Services:
    """Shared runtime surface every worker talks to."""

    clock: Clock
    log: EventLog
    broker: Any  # InProcessBroker or a remote client with the same interface
    backend: Any
    store: Any
    registry: HandlerRegistry
    model: Any = None  # model client, when the pipeline needs one


class SubtaskHandle:
    """Awaitable completion of one spawned subtask."""

    def __init__(self, task_id: TaskId, backend: Any):
        self.task_id = task_id
        self._backend = backend

    async def wait(self) -> TaskState:
        return await self._backend.wait_terminal(self.task_id)

    def __await__(self) -> Generator[Any, None, TaskState]:
        return self.wait().__await__()


class SpawnWindow:
    """Keeps at most `limit` direct subtasks pending at any instant.

    `limit=None` disables throttling (eager fan-out). One window may be
    shared by several coroutines inside the same producer task; the
    bound then covers everything spawned through it.
    """

    def __init__(self, ctx: "TaskContext", limit: Optional[int]):
        if limit is not None and limit < 1:
            raise ValueError("window must be >= 1")
        self.ctx = ctx
        self.limit = limit
        self._sem = asyncio.Semaphore(limit) if limit is not None else None

    async def spawn(self, kind: str, payload: dict, timeout_s: float | None = None) -> SubtaskHandle:
        if self._sem is not None:
            await self._sem.acquire()
        handle = await self.ctx._spawn_task(kind, payload, timeout_s)
        if self._sem is not None:
            sem = self._sem
            self.ctx.env.backend.on_terminal(handle.task_id, lambda _state: sem.release())
        return handle


class TaskContext:
    """Execution context handed to task handlers."""

    def __init__(self, env: Services, worker: "Worker", task: Task):
        self.env = env
        self.worker = worker
        self.task = task
        self.job_id = task.id.job_id
        self.spans: list[dict] = []
        self._child_counter = 0

    # -- simulated work

    async def compute(self, sim_seconds: float, stage: str) -> None:
        """Compute-bound section: holds the worker's single compute lane."""
        async with self.worker.compute_lock:
            t0 = self.env.clock.now()
            await self.env.clock.sleep(sim_seconds)
            self._span(stage, t0, compute=True)

    async def io_wait(self, sim_seconds: float, stage: str) -> None:
        """I/O-bound wait: other tasks on this worker keep running."""
        t0 = self.env.clock.now()
        await self.env.clock.sleep(sim_seconds)
        self._span(stage, t0)

    # -- blob store (counted transactions)

    async def load_blob(self, key: str, stage: str = "store_io") -> bytes:
        t0 = self.env.clock.now()
        data = await self.env.store.get(key, job_id=self.job_id)
        self._span(stage, t0)
        return data

    async def store_blob(self, key: str, data: bytes, stage: str = "store_io") -> None:
        t0 = self.env.clock.now()
        await self.env.store.put(key, data, job_id=self.job_id)
        self._span(stage, t0)

    # -- model service

    async def infer(self, payload: dict, stage: str = "model_layout") -> dict:
        if self.env.model is None:
            raise RuntimeError("no model client configured")
        t0 = self.env.clock.now()
        reply = await self.env.model.infer(payload, job_id=self.job_id)
        self._span(stage, t0)
        return reply

    # -- dynamic subtasks

    def spawn_window(self, limit: Optional[int] = None) -> SpawnWindow:
        return SpawnWindow(self, limit)

    async def spawn(self, kind: str, payload: dict, timeout_s: float | None = None) -> SubtaskHandle:
        return await self._spawn_task(kind, payload, timeout_s)

    async def spawn_stream(
        self,
        specs: Iterable[tuple],
        window: Optional[int] = None,
    ) -> AsyncIterator[TaskState]:
        """Spawn `(kind, payload[, timeout_s])` specs, yield completions.

        Results arrive in completion order; failures are surfaced as
        terminal states, never raised.
        """
        specs = [tuple(s) for s in specs]
        win = self.spawn_window(window)
        done_q: asyncio.Queue[TaskState] = asyncio.Queue()

        async def feeder() -> None:
            for spec in specs:
                handle = await win.spawn(*spec)
                self.env.backend.on_terminal(handle.task_id, done_q.put_nowait)

        feed = asyncio.ensure_future(feeder())
        try:
            for _ in range(len(specs)):
                yield await done_q.get()
            await feed
        finally:
            if not feed.done():
                feed.cancel()
                await asyncio.gather(feed, return_exceptions=True)

    async def _spawn_task(self, kind: str, payload: dict, timeout_s: float | None) -> SubtaskHandle:
        self.worker.note_producer(self.task.id.flat())
        self._child_counter += 1
        tid = TaskId(self.job_id, f"{self.task.id.sequence}.{self._child_counter}")
        sub = Task(
            id=tid,
            kind=kind,
            payload=payload,
            parent=self.task.id,
            created_at=self.env.clock.now(),
            timeout_s=timeout_s,
        )
        await self.env.backend.register_task(sub)
        await self.env.broker.enqueue(sub)
        self.env.log.emit(
            TASK_ENQUEUED,
            task=tid.flat(),
            kind=kind,
            job_id=self.job_id,
            parent=self.task.id.flat(),
        )
        return SubtaskHandle(tid, self.env.backend)

    def _span(self, stage: str, t0: float, compute: bool = False) -> None:
        self.spans.append(
            {"stage": stage, "start": t0, "end": self.env.clock.now(), "compute": compute}
        )


class Worker:
    """Fetch -> execute -> ack loop over the shared broker."""

    def __init__(self, config: WorkerConfig, env: Services):
        self.cfg = config
        self.env = env
        self.compute_lock = asyncio.Lock()
        self._running: dict[str, asyncio.Task] = {}
        self._producers: set[str] = set()
        self._wake = asyncio.Event()
        self._stop_flag = False
        self._idle_emitted = False
        self._completions_since_restart = 0
        self.completed_total = 0
        self.restart_count = 0

    @property
    def id(self) -> str:
        return self.cfg.worker_id

    def effective_limit(self) -> int:
        """Prefetch limit X plus one per running task that produced subtasks."""
        return self.cfg.prefetch_limit + len(self._producers)

    def note_producer(self, task_flat: str) -> None:
        if task_flat in self._running and task_flat not in self._producers:
            self._producers.add(task_flat)
            self._wake.set()

    def request_stop(self) -> None:
        self._stop_flag = True
        self._wake.set()

    async def run(self) -> None:
        """Main loop; returns only after a stop request (and drain)."""
        while True:
            if self._stop_flag:
                if not self._running:
                    return
            elif self._restart_due():
                if not self._busy_nonproducers():
                    await self._do_restart()
                    continue
            else:
                capacity = self.effective_limit() - len(self._running)
                if capacity > 0:
                    batch = await self.env.broker.fetch(self.cfg.worker_id, capacity)
                    if batch:
                        self._idle_emitted = False
                        for task in batch:
                            self._launch(task)
                        continue
            if not self._running and not self._idle_emitted and not self._stop_flag:
                self.env.log.emit(WORKER_IDLE, worker=self.cfg.worker_id, queue_empty=True)
                self._idle_emitted = True
            await self._wait_for_work()

    def crash(self) -> None:
        """Hard kill for tests: abandon running tasks without acking."""
        self._stop_flag = True
        for t in self._running.values():
            t.cancel()
        self._wake.set()

    # -- internals

    def _restart_due(self) -> bool:
        after = self.cfg.restart_after_tasks
        return after is not None and self._completions_since_restart >= after

    def _busy_nonproducers(self) -> bool:
        return any(flat not in self._producers for flat in self._running)

    async def _do_restart(self) -> None:
        # producers suspended on subtasks stay parked through the pause;
        # waiting for them here would deadlock a single-worker setup
        self.env.log.emit(
            WORKER_RESTART,
            worker=self.cfg.worker_id,
            completed=self.completed_total,
        )
        self.restart_count += 1
        await self.env.clock.sleep(self.cfg.restart_delay)
        self._completions_since_restart = 0

    def _launch(self, task: Task) -> None:
        flat = task.id.flat()
        t = asyncio.get_running_loop().create_task(self._execute(task))
        self._running[flat] = t

        def _done(_t: asyncio.Task) -> None:
            self._running.pop(flat, None)
            self._producers.discard(flat)
            self._wake.set()

        t.add_done_callback(_done)

    async def _execute(self, task: Task) -> None:
        env = self.env
        flat = task.id.flat()
        try:
            existing = await env.backend.get_state(task.id)
            if existing.terminal:
                await env.broker.ack(flat)  # duplicate delivery of a finished task
                return
        except UnknownTask:
            await env.backend.register_task(task)
        await env.backend.set_running(task.id, self.cfg.worker_id, task.attempt)
        env.log.emit(
            TASK_STARTED,
            task=flat,
            worker=self.cfg.worker_id,
            kind=task.kind,
            job_id=task.id.job_id,
            attempt=task.attempt,
        )
        ctx = TaskContext(env, self, task)
        status = SUCCEEDED
        result: Any = None
        error: str | None = None
        try:
            handler = env.registry.get(task.kind)
            coro = handler(ctx, task.payload)
            if task.timeout_s is not None:
                result = await asyncio.wait_for(coro, env.clock.to_wall(task.timeout_s))
            else:
                result = await coro
        except asyncio.CancelledError:
            raise  # crash path: no ack, no state write; redelivery takes over
        except (asyncio.TimeoutError, TimeoutError):
            status, error = TIMED_OUT, f"exceeded timeout of {task.timeout_s}s"
        except Exception as exc:  # handler bug or domain failure: isolate it
            status, error = FAILED, f"{type(exc).__name__}: {exc}"
        await env.backend.set_terminal(task.id, status, result=result, error=error)
        env.log.emit(
            TASK_FINISHED,
            task=flat,
            worker=self.cfg.worker_id,
            kind=task.kind,
            job_id=task.id.job_id,
            status=status,
            spans=ctx.spans,
        )
        await env.broker.ack(flat)
        self._completions_since_restart += 1
        self.completed_total += 1

    async def _wait_for_work(self) -> None:
        poll = self.cfg.poll_wall_s
        can_fetch = (
            not self._stop_flag
            and not self._restart_due()
            and self.effective_limit() > len(self._running)
        )
        if can_fetch:
            wake = asyncio.ensure_future(self._wake.wait())
            nonempty = asyncio.ensure_future(self.env.broker.wait_nonempty(poll))
            await asyncio.wait({wake, nonempty}, timeout=poll, return_when=asyncio.FIRST_COMPLETED)
            for fut in (wake, nonempty):
                if not fut.done():
                    fut.cancel()
            await asyncio.gather(wake, nonempty, return_exceptions=True)
        else:
            try:
                await asyncio.wait_for(self._wake.wait(), poll)
            except (asyncio.TimeoutError, TimeoutError):
                pass
        self._wake.clear()
