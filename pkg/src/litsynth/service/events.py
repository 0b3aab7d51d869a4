"""In-process progress events for asynchronous column population.

Publishers and subscribers synchronize on one bus lock; the engine updates
its in-memory cell state and publishes under that same lock, so a subscriber
either sees a transition in its connect snapshot or receives it as a delta,
never neither and never both.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass

CELL_EVENT = "cell"
COLUMN_EVENT = "column"


@dataclass(frozen=True)
class ProgressEvent:
    collection_id: str
    column_id: str
    paper_id: str | None
    status: str
    timestamp: str
    kind: str = CELL_EVENT

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "collection_id": self.collection_id,
            "column_id": self.column_id,
            "paper_id": self.paper_id,
            "status": self.status,
            "timestamp": self.timestamp,
        }


class Subscription:
    def __init__(self, bus: "ProgressBus", collection_id: str):
        self._bus = bus
        self.collection_id = collection_id
        self._queue: queue.Queue[ProgressEvent] = queue.Queue()
        self.closed = False

    def _push(self, event: ProgressEvent) -> None:
        self._queue.put(event)

    def get(self, timeout: float | None = None) -> ProgressEvent | None:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        self.closed = True
        self._bus._drop(self)


class ProgressBus:
    def __init__(self):
        self.lock = threading.RLock()
        self._subscribers: dict[str, list[Subscription]] = {}

    def subscribe(self, collection_id: str) -> Subscription:
        """Register a subscriber; call under ``lock`` to pair with a state snapshot."""
        subscription = Subscription(self, collection_id)
        with self.lock:
            self._subscribers.setdefault(collection_id, []).append(subscription)
        return subscription

    def publish(self, event: ProgressEvent) -> None:
        with self.lock:
            for subscription in self._subscribers.get(event.collection_id, ()):
                subscription._push(event)

    def _drop(self, subscription: Subscription) -> None:
        with self.lock:
            listeners = self._subscribers.get(subscription.collection_id, [])
            if subscription in listeners:
                listeners.remove(subscription)
