import random

import pytest

from fieldbook.clock import ManualClock
from fieldbook.model import PRIVATE_DB
from fieldbook.sinks import MemorySink, default_registry
from fieldbook.store import FieldStore
from fieldbook.sync import BackoffPolicy, SyncEngine


@pytest.fixture
def clock():
    return ManualClock()


@pytest.fixture
def store(tmp_path, clock):
    s = FieldStore(tmp_path / "data", clock=clock, fsync=False)
    yield s
    s.journal.close()


def make_engine(store, registry=None, ack_loss=None, rng_seed=7):
    """Engine over in-memory sinks; ack_loss maps sink_id -> probability."""
    registry = registry or default_registry()
    adapters = {}
    for sink_id, desc in registry.items():
        adapters[sink_id] = MemorySink(
            sink_id=sink_id,
            dedupe=desc.supports_lookup,
            ack_loss_rate=(ack_loss or {}).get(sink_id, 0.0),
            rng=random.Random(rng_seed),
        )
    return SyncEngine(
        store,
        registry=registry,
        adapters=adapters,
        backoff=BackoffPolicy(),
        rng=random.Random(rng_seed),
    )


@pytest.fixture
def engine(store):
    return make_engine(store)


def all_up(registry=None):
    return {s: True for s in (registry or default_registry())}


def all_down(registry=None):
    return {s: False for s in (registry or default_registry())}


def drain(engine, clock, connectivity=None, max_ticks=500, step_s=30.0):
    """Tick until nothing is pending or the budget runs out."""
    conn = connectivity or all_up(engine.registry)
    for _ in range(max_ticks):
        engine.sync_tick(conn() if callable(conn) else conn, clock())
        status = engine.sync_status(clock())
        if all(s.pending == 0 and s.in_flight == 0 for s in status.per_sink.values()):
            return True
        clock.advance(step_s)
    return False


def private_sink(engine) -> MemorySink:
    return engine.adapters[PRIVATE_DB]
