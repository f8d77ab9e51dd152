"""Store-and-forward delivery of entries and annotations to sinks.

Every entry and annotation gets a queue item the moment it is created,
journaled together with the payload so an acknowledged capture can never
miss its queue slot. A sync tick probes connectivity and, for each sink
that is up, walks the queue in per-author FIFO order: an author's items
arrive at each sink in the order they were enqueued, and a failing item
blocks only that author's lane at that sink, never other authors.

Delivery semantics per sink capability:
- lookup-capable sinks get effective exactly-once: after an ambiguous
  outcome, a single-chunk item is first looked up by idempotency key and
  marked delivered without re-posting if found; multi-chunk items resume
  from the first unconfirmed chunk, and the sink's key index absorbs the
  one chunk that may be retransmitted.
- lookup-incapable sinks are at-least-once; duplicates stay visible in
  the sink's receive log.
"""
from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import TYPE_CHECKING, Mapping

from .chunking import chunk_for_sink
from .clock import as_utc
from .connectivity import ConnectivityProvider, ProbeResult
from .errors import ChunkingError, NotFoundError, ValidationError
from .ids import idempotency_key, new_id
from .model import (
    ANNOTATION_EXTRA_SINKS,
    ENTRY_ALLOWED_SINKS,
    PRIVATE_DB,
    Annotation,
    Entry,
    Receipt,
    TableDocument,
)
from .sinks import ACK, AMBIGUOUS, PERMANENT, PostResult, SinkAdapter, SinkDescriptor
from .wire import cell_to_wire, parse_ts, ts

if TYPE_CHECKING:
    from .store import FieldStore

PENDING = "pending"
IN_FLIGHT = "in_flight"
DELIVERED = "delivered"
FAILED_PERMANENT = "failed_permanent"

STATES = (PENDING, IN_FLIGHT, DELIVERED, FAILED_PERMANENT)

KIND_ENTRY = "entry"
KIND_ANNOTATION = "annotation"


@dataclass(frozen=True)
class Attempt:
    at: datetime
    outcome: str


@dataclass
class BackoffPolicy:
    base_s: float = 2.0
    factor: float = 2.0
    cap_s: float = 300.0
    jitter: float = 0.2

    def delay(self, failures: int, rng: random.Random) -> float:
        raw = min(self.cap_s, self.base_s * self.factor ** max(0, failures - 1))
        spread = raw * self.jitter
        return max(0.0, raw + rng.uniform(-spread, spread))


@dataclass
class QueueItem:
    """Sync envelope for one entry or annotation."""

    item_id: str
    table_id: str
    payload_id: str
    payload_kind: str
    author: str
    enqueued_at: datetime
    enqueue_seq: int
    target_sinks: frozenset[str]
    idempotency_keys: dict[str, str]
    states: dict[str, str] = field(default_factory=dict)
    attempts: dict[str, list[Attempt]] = field(default_factory=dict)
    next_attempt_at: dict[str, datetime] = field(default_factory=dict)
    unresolved: dict[str, bool] = field(default_factory=dict)
    receipts: dict[str, Receipt] = field(default_factory=dict)

    def state(self, sink_id: str) -> str:
        return self.states[sink_id]

    def set_state(self, sink_id: str, new_state: str) -> None:
        if self.states.get(sink_id) == DELIVERED and new_state != DELIVERED:
            raise ValidationError(f"item {self.item_id}: delivered is terminal")
        self.states[sink_id] = new_state

    def record_attempt(self, sink_id: str, attempt: Attempt) -> None:
        self.attempts.setdefault(sink_id, []).append(attempt)

    def failure_count(self, sink_id: str) -> int:
        return sum(1 for a in self.attempts.get(sink_id, ()) if a.outcome != DELIVERED)

    def is_settled(self) -> bool:
        return all(s in (DELIVERED, FAILED_PERMANENT) for s in self.states.values())


def build_queue_item(
    *,
    table_id: str,
    payload_id: str,
    payload_kind: str,
    author: str,
    target_sinks: frozenset[str],
    registered_sinks: frozenset[str],
    enqueued_at: datetime,
    enqueue_seq: int,
) -> QueueItem:
    """Validate targets and produce a fresh all-pending item."""
    targets = frozenset(target_sinks) | {PRIVATE_DB}
    unknown = targets - registered_sinks
    if unknown:
        raise ValidationError(f"unregistered sink: {sorted(unknown)[0]!r}", field="sinks")
    allowed = ENTRY_ALLOWED_SINKS if payload_kind == KIND_ENTRY else (
        ANNOTATION_EXTRA_SINKS | {PRIVATE_DB}
    )
    off_limits = targets - allowed
    if off_limits:
        raise ValidationError(
            f"{payload_kind} items may not target {sorted(off_limits)[0]!r}", field="sinks"
        )
    item = QueueItem(
        item_id=new_id("q", enqueued_at),
        table_id=table_id,
        payload_id=payload_id,
        payload_kind=payload_kind,
        author=author,
        enqueued_at=enqueued_at,
        enqueue_seq=enqueue_seq,
        target_sinks=targets,
        idempotency_keys={s: idempotency_key(table_id, payload_id, s) for s in targets},
    )
    for sink_id in targets:
        item.states[sink_id] = PENDING
    return item


def item_to_dict(item: QueueItem) -> dict:
    return {
        "item_id": item.item_id,
        "table_id": item.table_id,
        "payload_id": item.payload_id,
        "payload_kind": item.payload_kind,
        "author": item.author,
        "enqueued_at": ts(item.enqueued_at),
        "enqueue_seq": item.enqueue_seq,
        "target_sinks": sorted(item.target_sinks),
        "idempotency_keys": dict(item.idempotency_keys),
        "states": dict(item.states),
        "attempts": {
            sink: [{"at": ts(a.at), "outcome": a.outcome} for a in attempts]
            for sink, attempts in item.attempts.items()
        },
        "next_attempt_at": {s: ts(t) for s, t in item.next_attempt_at.items()},
        "unresolved": {s: True for s, v in item.unresolved.items() if v},
        "receipts": {
            s: {"receipt_id": r.receipt_id, "delivered_at": ts(r.delivered_at)}
            for s, r in item.receipts.items()
        },
    }


def item_from_dict(data: dict) -> QueueItem:
    item = QueueItem(
        item_id=data["item_id"],
        table_id=data["table_id"],
        payload_id=data["payload_id"],
        payload_kind=data["payload_kind"],
        author=data["author"],
        enqueued_at=parse_ts(data["enqueued_at"]),
        enqueue_seq=data["enqueue_seq"],
        target_sinks=frozenset(data["target_sinks"]),
        idempotency_keys=dict(data["idempotency_keys"]),
        states=dict(data["states"]),
        attempts={
            sink: [Attempt(parse_ts(a["at"]), a["outcome"]) for a in attempts]
            for sink, attempts in data["attempts"].items()
        },
        next_attempt_at={s: parse_ts(t) for s, t in data["next_attempt_at"].items()},
        unresolved={s: True for s in data["unresolved"]},
        receipts={
            s: Receipt(s, r["receipt_id"], parse_ts(r["delivered_at"]))
            for s, r in data["receipts"].items()
        },
    )
    return item


def render_entry_text(document: TableDocument, entry: Entry) -> str:
    """Compact single-line rendering of a data point for sink posting."""
    body = {
        "table": document.schema.title,
        "table_id": document.table_id,
        "row": entry.row_index,
        "author": entry.author,
        "captured_at": ts(entry.captured_at),
        "values": {k: cell_to_wire(v) for k, v in entry.values.items()},
    }
    return json.dumps(body, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


@dataclass(frozen=True)
class DeliveryAttempt:
    """What one sync tick did to one item at one sink."""

    item_id: str
    sink_id: str
    outcome: str
    chunks_posted: int


@dataclass
class SinkStatus:
    pending: int = 0
    in_flight: int = 0
    delivered: int = 0
    failed_permanent: int = 0


@dataclass
class SyncStatus:
    per_sink: dict[str, SinkStatus]
    oldest_pending_age_s: float | None
    last_probe: dict[str, bool] | None
    last_probe_at: datetime | None
    last_tick_at: datetime | None
    ticks_skipped: int


class SyncEngine:
    """Drains the store's outbound queue into sink adapters."""

    def __init__(
        self,
        store: "FieldStore",
        registry: Mapping[str, SinkDescriptor],
        adapters: Mapping[str, SinkAdapter],
        backoff: BackoffPolicy | None = None,
        rng: random.Random | None = None,
    ):
        self.store = store
        self.registry = dict(registry)
        self.adapters = dict(adapters)
        self.backoff = backoff or BackoffPolicy()
        self.rng = rng or random.Random()
        self.last_probe: ProbeResult | None = None
        self.last_tick_at: datetime | None = None
        self.ticks_skipped = 0
        # Per-sink chunk confirmations for the current session; crash
        # recovery falls back to sink-side dedup, so this is not journaled.
        self._confirmed: dict[tuple[str, str], set[int]] = {}
        self._tick_lock = threading.Lock()

    # -- enqueue -----------------------------------------------------

    def enqueue(
        self,
        table_id: str,
        payload_id: str,
        payload_kind: str,
        author: str,
        target_sinks: frozenset[str] = frozenset(),
    ) -> QueueItem:
        """Queue an already-journaled payload for delivery."""
        return self.store.enqueue_payload(table_id, payload_id, payload_kind, author, target_sinks)

    # -- delivery ----------------------------------------------------

    def sync_tick(
        self, connectivity: ConnectivityProvider | Mapping[str, bool], now: datetime
    ) -> list[DeliveryAttempt]:
        """One push pass. Non-reentrant: overlapping ticks are skipped."""
        if not self._tick_lock.acquire(blocking=False):
            self.ticks_skipped += 1
            return []
        try:
            now = as_utc(now)
            up = dict(connectivity() if callable(connectivity) else connectivity)
            self.last_probe = ProbeResult(up=up, probed_at=now)
            self.last_tick_at = now
            attempts: list[DeliveryAttempt] = []
            items = self.store.queue_in_order()
            for sink_id in self.registry:
                if not up.get(sink_id, False):
                    continue
                attempts.extend(self._drain_sink(sink_id, items, now))
            return attempts
        finally:
            self._tick_lock.release()

    def _drain_sink(
        self, sink_id: str, items: list[QueueItem], now: datetime
    ) -> list[DeliveryAttempt]:
        made: list[DeliveryAttempt] = []
        blocked_authors: set[str] = set()
        for item in items:
            if sink_id not in item.target_sinks:
                continue
            state = item.states[sink_id]
            if state in (DELIVERED, FAILED_PERMANENT):
                continue
            if item.author in blocked_authors:
                continue
            gate = item.next_attempt_at.get(sink_id)
            if gate is not None and gate > now:
                blocked_authors.add(item.author)
                continue
            attempt = self.deliver(item, sink_id, now)
            made.append(attempt)
            if attempt.outcome != DELIVERED:
                blocked_authors.add(item.author)
        return made

    def deliver(self, item: QueueItem, sink_id: str, now: datetime) -> DeliveryAttempt:
        """Attempt one item at one sink; journals every state transition."""
        desc = self.registry[sink_id]
        adapter = self.adapters[sink_id]
        item.set_state(sink_id, IN_FLIGHT)
        self.store.queue_changed(item)

        text = self._payload_text(item)
        try:
            chunks = (
                chunk_for_sink(text, desc.max_post_length)
                if desc.max_post_length is not None
                else [text]
            )
        except ChunkingError:
            # structurally undeliverable at this sink; same terminal
            # treatment as a sink-side validation rejection
            item.record_attempt(sink_id, Attempt(now, FAILED_PERMANENT))
            item.set_state(sink_id, FAILED_PERMANENT)
            item.next_attempt_at.pop(sink_id, None)
            self.store.queue_changed(item)
            return DeliveryAttempt(item.item_id, sink_id, FAILED_PERMANENT, 0)
        key = item.idempotency_keys[sink_id]
        confirmed = self._confirmed.setdefault((item.item_id, sink_id), set())

        outcome = DELIVERED
        receipt_id: str | None = None
        posted = 0
        if (
            item.unresolved.get(sink_id)
            and desc.supports_lookup
            and len(chunks) == 1
            and adapter.lookup(key)
        ):
            receipt_id = f"lookup:{key[:12]}"
        else:
            result = PostResult(ACK)
            for index, chunk in enumerate(chunks, start=1):
                if index in confirmed:
                    continue
                result = adapter.post(chunk, key, index)
                if result.status != ACK:
                    break
                confirmed.add(index)
                posted += 1
            if result.status == ACK:
                receipt_id = result.receipt_id or f"{sink_id}:{key[:12]}"
            elif result.status == PERMANENT:
                outcome = FAILED_PERMANENT
            elif result.status == AMBIGUOUS:
                outcome = AMBIGUOUS
            else:
                outcome = "transient_failure"

        item.record_attempt(sink_id, Attempt(now, outcome))
        if outcome == DELIVERED:
            item.set_state(sink_id, DELIVERED)
            item.unresolved.pop(sink_id, None)
            item.next_attempt_at.pop(sink_id, None)
            self._confirmed.pop((item.item_id, sink_id), None)
            receipt = Receipt(
                sink_id=sink_id,
                receipt_id=receipt_id or f"{sink_id}:{key[:12]}",
                delivered_at=now,
            )
            item.receipts[sink_id] = receipt
            self.store.queue_changed(item)
            self.store.record_receipt(item.table_id, item.payload_id, receipt)
        elif outcome == FAILED_PERMANENT:
            item.set_state(sink_id, FAILED_PERMANENT)
            item.next_attempt_at.pop(sink_id, None)
            self.store.queue_changed(item)
        else:
            if outcome == AMBIGUOUS:
                item.unresolved[sink_id] = True
            item.set_state(sink_id, PENDING)
            delay = self.backoff.delay(item.failure_count(sink_id), self.rng)
            item.next_attempt_at[sink_id] = now + timedelta(seconds=delay)
            self.store.queue_changed(item)
        return DeliveryAttempt(item.item_id, sink_id, outcome, posted)

    def _payload_text(self, item: QueueItem) -> str:
        document = self.store.document(item.table_id)
        if item.payload_kind == KIND_ANNOTATION:
            for a in document.annotations:
                if a.annotation_id == item.payload_id:
                    return a.text
            raise NotFoundError("annotation", item.payload_id)
        for e in document.entries:
            if e.entry_id == item.payload_id:
                return render_entry_text(document, e)
        raise NotFoundError("entry", item.payload_id)

    # -- maintenance -------------------------------------------------

    def re_enqueue_failed(self) -> int:
        """Reset failed_permanent states to pending; returns count reset."""
        reset = 0
        for item in self.store.queue_in_order():
            changed = False
            for sink_id, state in item.states.items():
                if state == FAILED_PERMANENT:
                    item.states[sink_id] = PENDING
                    item.next_attempt_at.pop(sink_id, None)
                    changed = True
                    reset += 1
            if changed:
                self.store.queue_changed(item)
        return reset

    def sync_status(self, now: datetime | None = None) -> SyncStatus:
        per_sink: dict[str, SinkStatus] = {s: SinkStatus() for s in self.registry}
        oldest_pending: datetime | None = None
        for item in self.store.queue_in_order():
            item_pending = False
            for sink_id, state in item.states.items():
                status = per_sink.setdefault(sink_id, SinkStatus())
                if state == PENDING:
                    status.pending += 1
                    item_pending = True
                elif state == IN_FLIGHT:
                    status.in_flight += 1
                elif state == DELIVERED:
                    status.delivered += 1
                else:
                    status.failed_permanent += 1
            if item_pending and (oldest_pending is None or item.enqueued_at < oldest_pending):
                oldest_pending = item.enqueued_at
        age = None
        if oldest_pending is not None and now is not None:
            age = max(0.0, (as_utc(now) - oldest_pending).total_seconds())
        return SyncStatus(
            per_sink=per_sink,
            oldest_pending_age_s=age,
            last_probe=self.last_probe.up if self.last_probe else None,
            last_probe_at=self.last_probe.probed_at if self.last_probe else None,
            last_tick_at=self.last_tick_at,
            ticks_skipped=self.ticks_skipped,
        )
