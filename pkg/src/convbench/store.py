"""Keyed blob store with a latency and transaction-capacity model.

Stands in for the document database / object storage. Every counted
call pays `latency_per_op`; when `capacity_ops_per_s` is set, calls
beyond the rate queue up FIFO, which is how the database bottleneck
shows at scale.
"""

from __future__ import annotations

import asyncio
import base64
from pathlib import Path
from typing import Optional

from .clock import Clock
from .events import STORE_TXN, EventLog
from .tasks import StoreConfig


class BlobNotFound(KeyError):
    pass


class BlobStore:
    """Async keyed store; safe for concurrent use from one event loop."""

    def __init__(self, config: StoreConfig, clock: Clock, log: EventLog | None = None):
        self.config = config
        self.clock = clock
        self.log = log
        self.txn_count = 0
        self._gate = asyncio.Lock()  # FIFO capacity gate
        self._next_free_wall = 0.0
        if config.persistent:
            if not config.root_dir:
                raise ValueError("persistent store needs root_dir")
            self._dir: Optional[Path] = Path(config.root_dir)
            self._dir.mkdir(parents=True, exist_ok=True)
            self._mem: Optional[dict[str, bytes]] = None
        else:
            self._dir = None
            self._mem = {}

    # -- counted transactions

    async def put(self, key: str, data: bytes, job_id: str | None = None) -> None:
        _check_key(key)
        wait = await self._transact()
        self._write(key, data)
        self._emit("put", key, wait, job_id)

    async def get(self, key: str, job_id: str | None = None) -> bytes:
        _check_key(key)
        wait = await self._transact()
        data = self._read(key)
        self._emit("get", key, wait, job_id)
        if data is None:
            raise BlobNotFound(key)
        return data

    # -- admin path (no latency, no transaction accounting)

    def preload(self, key: str, data: bytes) -> None:
        """Seed data outside the cost model (e.g. the input corpus)."""
        self._write(key, data)

    def peek(self, key: str) -> bytes:
        data = self._read(key)
        if data is None:
            raise BlobNotFound(key)
        return data

    def exists(self, key: str) -> bool:
        return self._read(key) is not None

    def keys(self, prefix: str = "") -> list[str]:
        if self._mem is not None:
            ks = list(self._mem)
        else:
            assert self._dir is not None
            ks = [_decode_name(p.name) for p in self._dir.iterdir() if p.is_file()]
        return sorted(k for k in ks if k.startswith(prefix))

    async def ping(self) -> bool:
        return True

    # -- internals

    async def _transact(self) -> float:
        """Pay the rate cap and per-op latency; returns sim wait time."""
        t0 = self.clock.now()
        self.txn_count += 1
        if self.config.capacity_ops_per_s is not None:
            spacing = self.clock.to_wall(1.0 / self.config.capacity_ops_per_s)
            async with self._gate:
                slot = max(self.clock.now(), self._next_free_wall)
                self._next_free_wall = slot + spacing
            delay = slot - self.clock.now()
            if delay > 0:
                await asyncio.sleep(delay)
        await self.clock.sleep(self.config.latency_per_op)
        return self.clock.to_sim(self.clock.now() - t0)

    def _emit(self, op: str, key: str, wait_s: float, job_id: str | None) -> None:
        if self.log is not None:
            self.log.emit(STORE_TXN, op=op, key=key, wait_s=wait_s, job_id=job_id)

    def _write(self, key: str, data: bytes) -> None:
        if self._mem is not None:
            self._mem[key] = data
        else:
            assert self._dir is not None
            (self._dir / _encode_name(key)).write_bytes(data)

    def _read(self, key: str) -> Optional[bytes]:
        if self._mem is not None:
            return self._mem.get(key)
        assert self._dir is not None
        path = self._dir / _encode_name(key)
        return path.read_bytes() if path.exists() else None


def _check_key(key: str) -> None:
    # keys are namespaced paths: "<area or job_id>/..."
    if "/" not in key:
        raise ValueError(f"store key must be namespaced with a '/': {key!r}")


def _encode_name(key: str) -> str:
    return base64.urlsafe_b64encode(key.encode()).decode()


def _decode_name(name: str) -> str:
    return base64.urlsafe_b64decode(name.encode()).decode()
