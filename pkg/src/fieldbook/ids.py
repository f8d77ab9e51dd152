"""Opaque identifier minting and idempotency keys.

Ids are assigned on the device that owns the store (clients never mint
them): millisecond timestamp plus a random suffix, so they sort roughly
by creation time and never collide in practice. Idempotency keys are a
pure function of (table, payload, sink) so a retransmitted item always
carries the same key.
"""
from __future__ import annotations

import hashlib
import secrets
from datetime import datetime, timezone


def new_id(prefix: str, now: datetime | None = None) -> str:
    ts = now or datetime.now(timezone.utc)
    return f"{prefix}-{int(ts.timestamp() * 1000):013d}-{secrets.token_hex(4)}"


def idempotency_key(table_id: str, payload_id: str, sink_id: str) -> str:
    raw = f"{table_id}\x00{payload_id}\x00{sink_id}".encode("utf-8")
    return hashlib.sha256(raw).hexdigest()[:32]
