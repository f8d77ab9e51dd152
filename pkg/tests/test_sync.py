import random

import pytest

from conftest import all_down, all_up, drain, make_engine
from fieldbook.clock import ManualClock
from fieldbook.errors import ValidationError
from fieldbook.model import (
    CONTEXT_REPO,
    PRIVATE_DB,
    PUBLIC_MICROBLOG,
    RAW_REPO,
    Scope,
    ScopeLevel,
)
from fieldbook.sinks import MemorySink, SinkDescriptor
from fieldbook.store import FieldStore
from fieldbook.sync import (
    DELIVERED,
    FAILED_PERMANENT,
    PENDING,
    BackoffPolicy,
    SyncEngine,
    render_entry_text,
)


def table_with_scope(store, title="t"):
    schema = store.create_table(title, [], "alice")
    return schema.table_id, Scope(ScopeLevel.TABLE, schema.table_id)


class TestEnqueueRouting:
    def test_default_private_only(self, store, engine):
        _, scope = table_with_scope(store)
        a = store.annotate(scope, "plain note", "alice")
        item = next(i for i in store.queue_items.values() if i.payload_id == a.annotation_id)
        assert item.target_sinks == frozenset({PRIVATE_DB})
        assert item.states == {PRIVATE_DB: PENDING}

    def test_public_adds_public_microblog(self, store, engine):
        _, scope = table_with_scope(store)
        a = store.annotate(scope, "public note", "alice", visibility="public")
        item = next(i for i in store.queue_items.values() if i.payload_id == a.annotation_id)
        assert item.target_sinks == frozenset({PRIVATE_DB, PUBLIC_MICROBLOG})

    def test_context_and_raw_repo_opt_in(self, store, engine):
        _, scope = table_with_scope(store)
        a = store.annotate(scope, "x", "alice", extra_sinks={RAW_REPO, CONTEXT_REPO})
        item = next(i for i in store.queue_items.values() if i.payload_id == a.annotation_id)
        assert item.target_sinks == frozenset({PRIVATE_DB, RAW_REPO, CONTEXT_REPO})

    def test_unregistered_sink_rejected(self, tmp_path):
        store = FieldStore(
            tmp_path, fsync=False,
            registered_sinks=frozenset({PRIVATE_DB}),
        )
        _, scope = table_with_scope(store)
        with pytest.raises(ValidationError, match="raw_repo"):
            store.annotate(scope, "x", "a", extra_sinks={RAW_REPO})

    def test_entry_payload_may_not_target_public(self, store):
        table_id, _ = table_with_scope(store)
        entry = store.add_entry(table_id, {}, "a")
        with pytest.raises(ValidationError, match="public_microblog"):
            store.enqueue_payload(
                table_id, entry.entry_id, "entry", "a", frozenset({PUBLIC_MICROBLOG})
            )

    def test_entry_may_target_raw_repo_explicitly(self, store):
        table_id, _ = table_with_scope(store)
        entry = store.add_entry(table_id, {}, "a")
        item = store.enqueue_payload(
            table_id, entry.entry_id, "entry", "a", frozenset({RAW_REPO})
        )
        assert item.target_sinks == frozenset({PRIVATE_DB, RAW_REPO})

    def test_idempotency_key_deterministic_per_sink(self, store):
        _, scope = table_with_scope(store)
        a = store.annotate(scope, "x", "a", extra_sinks={RAW_REPO})
        item = next(iter(store.queue_items.values()))
        from fieldbook.ids import idempotency_key

        assert item.idempotency_keys[PRIVATE_DB] == idempotency_key(
            item.table_id, a.annotation_id, PRIVATE_DB
        )
        assert item.idempotency_keys[PRIVATE_DB] != item.idempotency_keys[RAW_REPO]


class TestSyncTick:
    def test_all_sinks_down_zero_attempts(self, store, engine, clock):
        _, scope = table_with_scope(store)
        for i in range(5):
            store.annotate(scope, f"n{i}", "alice")
        attempts = engine.sync_tick(all_down(), clock())
        assert attempts == []
        status = engine.sync_status(clock())
        assert status.per_sink[PRIVATE_DB].pending == 5

    def test_five_items_one_author_delivered_in_enqueue_order(self, store, engine, clock):
        _, scope = table_with_scope(store)
        notes = [store.annotate(scope, f"note number {i}", "alice") for i in range(5)]
        attempts = engine.sync_tick(all_up(), clock())
        assert len(attempts) == 5
        assert all(a.outcome == DELIVERED for a in attempts)
        sink = engine.adapters[PRIVATE_DB]
        assert [p.payload for p in sink.log] == [f"note number {i}" for i in range(5)]
        expected_keys = [
            next(
                i.idempotency_keys[PRIVATE_DB]
                for i in store.queue_items.values()
                if i.payload_id == n.annotation_id
            )
            for n in notes
        ]
        assert [p.idempotency_key for p in sink.log] == expected_keys

    def test_down_sink_left_untouched_while_up_sink_drains(self, store, engine, clock):
        _, scope = table_with_scope(store)
        store.annotate(scope, "x", "a", visibility="public")
        up = all_up()
        up[PUBLIC_MICROBLOG] = False
        engine.sync_tick(up, clock())
        status = engine.sync_status(clock())
        assert status.per_sink[PRIVATE_DB].delivered == 1
        assert status.per_sink[PUBLIC_MICROBLOG].pending == 1

    def test_non_reentrant_tick_is_skipped(self, store, engine, clock):
        engine._tick_lock.acquire()
        try:
            assert engine.sync_tick(all_up(), clock()) == []
        finally:
            engine._tick_lock.release()
        assert engine.ticks_skipped == 1

    def test_entries_render_as_compact_json(self, store, engine, clock):
        schema = store.create_table("water", [("v", "number")], "alice")
        entry = store.add_entry(schema.table_id, {"v": 4.2}, "alice")
        engine.sync_tick(all_up(), clock())
        sink = engine.adapters[PRIVATE_DB]
        assert sink.log[0].payload == render_entry_text(
            store.document(schema.table_id), entry
        )
        assert '"row":1' in sink.log[0].payload


class TestRetriesAndBackoff:
    def test_fail_twice_then_succeed_three_attempts(self, store, clock):
        engine = make_engine(store)
        engine.adapters[PRIVATE_DB].script = ["transient", "transient", "ack"]
        _, scope = table_with_scope(store)
        a = store.annotate(scope, "flaky", "alice")
        assert drain(engine, clock)
        item = next(i for i in store.queue_items.values() if i.payload_id == a.annotation_id)
        assert item.states[PRIVATE_DB] == DELIVERED
        assert len(item.attempts[PRIVATE_DB]) == 3
        assert [at.outcome for at in item.attempts[PRIVATE_DB]] == [
            "transient_failure", "transient_failure", DELIVERED,
        ]

    def test_backoff_delays_follow_policy_with_jitter_bounds(self):
        policy = BackoffPolicy(base_s=2.0, factor=2.0, cap_s=300.0, jitter=0.2)
        rng = random.Random(5)
        for failures, raw in [(1, 2.0), (2, 4.0), (3, 8.0), (8, 256.0), (9, 300.0), (20, 300.0)]:
            for _ in range(50):
                d = policy.delay(failures, rng)
                assert raw * 0.8 <= d <= raw * 1.2

    def test_backoff_blocks_until_gate_passes(self, store, clock):
        engine = make_engine(store)
        engine.adapters[PRIVATE_DB].script = ["transient"]
        _, scope = table_with_scope(store)
        store.annotate(scope, "x", "alice")
        engine.sync_tick(all_up(), clock())
        # immediately retrying within the backoff window does nothing
        assert engine.sync_tick(all_up(), clock()) == []
        clock.advance(10)  # past base*1.2
        attempts = engine.sync_tick(all_up(), clock())
        assert [a.outcome for a in attempts] == [DELIVERED]

    def test_permanent_rejection_never_retried(self, store, clock):
        engine = make_engine(store)
        engine.adapters[PRIVATE_DB].script = ["permanent"]
        _, scope = table_with_scope(store)
        store.annotate(scope, "bad payload", "alice")
        engine.sync_tick(all_up(), clock())
        status = engine.sync_status(clock())
        assert status.per_sink[PRIVATE_DB].failed_permanent == 1
        clock.advance(3600)
        assert engine.sync_tick(all_up(), clock()) == []
        item = next(iter(store.queue_items.values()))
        assert item.states[PRIVATE_DB] == FAILED_PERMANENT
        assert len(item.attempts[PRIVATE_DB]) == 1

    def test_unchunkable_payload_fails_permanently_instead_of_crashing(self, store, clock):
        registry = {
            PRIVATE_DB: SinkDescriptor(PRIVATE_DB, supports_lookup=True),
            "tiny": SinkDescriptor("tiny", max_post_length=10),
        }
        engine = make_engine(store, registry=registry)
        _, scope = table_with_scope(store)
        store.annotate(scope, "w" * 10_000, "alice")
        item = next(iter(store.queue_items.values()))
        item.target_sinks = frozenset({PRIVATE_DB, "tiny"})
        item.idempotency_keys["tiny"] = "k"
        item.states["tiny"] = PENDING
        attempts = engine.sync_tick(all_up(registry), clock())
        by_sink = {a.sink_id: a.outcome for a in attempts}
        assert by_sink[PRIVATE_DB] == DELIVERED
        assert by_sink["tiny"] == FAILED_PERMANENT
        assert item.states["tiny"] == FAILED_PERMANENT

    def test_re_enqueue_failed_resets_to_pending(self, store, clock):
        engine = make_engine(store)
        engine.adapters[PRIVATE_DB].script = ["permanent"]
        _, scope = table_with_scope(store)
        store.annotate(scope, "x", "alice")
        engine.sync_tick(all_up(), clock())
        assert engine.re_enqueue_failed() == 1
        assert drain(engine, clock)
        assert engine.sync_status(clock()).per_sink[PRIVATE_DB].delivered == 1


class TestExactlyOnce:
    def test_ack_loss_single_chunk_resolved_by_lookup(self, store, clock):
        engine = make_engine(store)
        sink = engine.adapters[PRIVATE_DB]
        sink.script = ["ack_loss"]
        _, scope = table_with_scope(store)
        a = store.annotate(scope, "only once", "alice")
        engine.sync_tick(all_up(), clock())
        item = next(iter(store.queue_items.values()))
        assert item.states[PRIVATE_DB] == PENDING
        assert item.unresolved[PRIVATE_DB]
        clock.advance(10)
        attempts = engine.sync_tick(all_up(), clock())
        assert [x.outcome for x in attempts] == [DELIVERED]
        # resolved via lookup: the post was not transmitted again
        assert attempts[0].chunks_posted == 0
        assert len(sink.log) == 1
        assert item.receipts[PRIVATE_DB].receipt_id.startswith("lookup:")

    def test_lost_request_not_found_by_lookup_reposts(self, store, clock):
        engine = make_engine(store)
        sink = engine.adapters[PRIVATE_DB]
        sink.script = ["lost"]
        _, scope = table_with_scope(store)
        store.annotate(scope, "retry me", "alice")
        engine.sync_tick(all_up(), clock())
        assert len(sink.log) == 0
        clock.advance(10)
        attempts = engine.sync_tick(all_up(), clock())
        assert [x.outcome for x in attempts] == [DELIVERED]
        assert len(sink.log) == 1

    def test_chunked_public_post_shares_key_with_indices(self, store, clock):
        engine = make_engine(store)
        _, scope = table_with_scope(store)
        store.annotate(scope, "z" * 300, "alice", visibility="public")
        engine.sync_tick(all_up(), clock())
        public = engine.adapters[PUBLIC_MICROBLOG]
        assert [(p.chunk_index) for p in public.log] == [1, 2, 3]
        assert len({p.idempotency_key for p in public.log}) == 1
        assert all(len(p.payload) <= 140 for p in public.log)

    def test_ack_loss_mid_chunk_sequence_no_duplicates_at_lookup_sink(self, store, clock):
        # a lookup-capable sink with a length limit: chunk 2's ack vanishes
        registry = {
            PRIVATE_DB: SinkDescriptor(PRIVATE_DB, supports_lookup=True),
            "short_db": SinkDescriptor("short_db", max_post_length=140, supports_lookup=True),
        }
        engine = make_engine(store, registry=registry)
        _, scope = table_with_scope(store)
        store.annotate(scope, "q" * 300, "alice")
        item = next(iter(store.queue_items.values()))
        # point the item at the short lookup-capable sink (the registry is
        # extensible; the model-level extra_sinks vocabulary is not)
        item.target_sinks = frozenset({PRIVATE_DB, "short_db"})
        item.idempotency_keys["short_db"] = "fixed-key"
        item.states["short_db"] = PENDING
        sink = engine.adapters["short_db"]
        sink.script = ["ack", "ack_loss"]  # chunk 1 fine, chunk 2 ack lost
        engine.sync_tick(all_up(registry), clock())
        assert item.states["short_db"] == PENDING
        clock.advance(10)
        engine.sync_tick(all_up(registry), clock())
        assert item.states["short_db"] == DELIVERED
        counts = sink.keys_with_chunks()
        assert set(counts.values()) == {1}
        assert sorted(i for (_, i) in counts) == [1, 2, 3]

    def test_crash_after_ack_loss_recovers_without_duplicate(self, tmp_path):
        clock = ManualClock()
        store = FieldStore(tmp_path / "d", clock=clock, fsync=False)
        engine = make_engine(store)
        sink = engine.adapters[PRIVATE_DB]
        sink.script = ["ack_loss"]
        _, scope = table_with_scope(store)
        store.annotate(scope, "survives restart", "alice")
        engine.sync_tick(all_up(), clock())
        assert len(sink.log) == 1
        # restart: new store over the same dir, new engine over the SAME
        # sink (the remote survives our crash)
        store.journal.close()
        store2 = FieldStore(tmp_path / "d", clock=clock, fsync=False)
        engine2 = make_engine(store2)
        engine2.adapters[PRIVATE_DB] = sink
        item = next(iter(store2.queue_items.values()))
        assert item.states[PRIVATE_DB] == PENDING
        assert item.unresolved[PRIVATE_DB]
        clock.advance(30)
        assert drain(engine2, clock)
        assert len(sink.log) == 1  # lookup prevented the duplicate


class TestOrdering:
    def test_per_author_fifo_under_failures(self, store, clock):
        engine = make_engine(store)
        sink = engine.adapters[PRIVATE_DB]
        sink.ack_loss_rate = 0.15
        sink.script = ["transient", "ack", "transient"]
        _, scope = table_with_scope(store)
        rng = random.Random(2)
        sent = {"alice": [], "bob": [], "carol": []}
        for i in range(60):
            author = rng.choice(list(sent))
            a = store.annotate(scope, f"{author} message {i}", author)
            clock.advance(1)
            sent[author].append(a.annotation_id)
        assert drain(engine, clock)
        key_to_payload = {}
        for item in store.queue_items.values():
            key_to_payload[item.idempotency_keys[PRIVATE_DB]] = (item.author, item.payload_id)
        seen = {"alice": [], "bob": [], "carol": []}
        for post in sink.log:
            author, payload_id = key_to_payload[post.idempotency_key]
            if payload_id not in seen[author]:
                seen[author].append(payload_id)
        assert seen == sent

    def test_one_author_failure_does_not_block_others(self, store, clock):
        engine = make_engine(store)
        sink = engine.adapters[PRIVATE_DB]
        sink.script = ["transient"]  # first attempt (alice's head item) fails
        _, scope = table_with_scope(store)
        store.annotate(scope, "alice 1", "alice")
        clock.advance(1)
        store.annotate(scope, "bob 1", "bob")
        attempts = engine.sync_tick(all_up(), clock())
        outcomes = {a.item_id: a.outcome for a in attempts}
        assert len(attempts) == 2
        assert sorted(outcomes.values()) == [DELIVERED, "transient_failure"]
        assert [p.payload for p in sink.log] == ["bob 1"]


class TestStatusAndDurability:
    def test_fresh_system_all_zero(self, store, engine, clock):
        status = engine.sync_status(clock())
        assert all(
            s.pending == s.in_flight == s.delivered == s.failed_permanent == 0
            for s in status.per_sink.values()
        )
        assert status.oldest_pending_age_s is None
        assert status.last_probe is None

    def test_ten_enqueued_offline_then_drained(self, store, engine, clock):
        _, scope = table_with_scope(store)
        for i in range(10):
            store.annotate(scope, f"n{i}", "a")
        clock.advance(45)
        engine.sync_tick(all_down(), clock())
        status = engine.sync_status(clock())
        assert status.per_sink[PRIVATE_DB].pending == 10
        assert status.oldest_pending_age_s == pytest.approx(45, abs=1)
        assert status.last_probe == all_down()
        assert drain(engine, clock)
        status = engine.sync_status(clock())
        assert status.per_sink[PRIVATE_DB].delivered == 10
        assert status.per_sink[PRIVATE_DB].pending == 0

    def test_no_loss_offline_enqueues_survive_restart(self, tmp_path):
        clock = ManualClock()
        store = FieldStore(tmp_path / "d", clock=clock, fsync=False)
        engine = make_engine(store)
        _, scope = table_with_scope(store)
        for i in range(7):
            store.annotate(scope, f"offline {i}", "a")
        engine.sync_tick(all_down(), clock())
        store.journal.close()
        store2 = FieldStore(tmp_path / "d", clock=clock, fsync=False)
        engine2 = make_engine(store2)
        status = engine2.sync_status(clock())
        assert status.per_sink[PRIVATE_DB].pending == 7

    def test_eventual_delivery_with_random_connectivity(self, store, clock):
        from fieldbook.connectivity import RandomConnectivity

        engine = make_engine(store, ack_loss={PRIVATE_DB: 0.1})
        _, scope = table_with_scope(store)
        for i in range(40):
            store.annotate(scope, f"note {i}", f"author{i % 3}")
        conn = RandomConnectivity(list(engine.registry), 0.3, random.Random(1))
        assert drain(engine, clock, connectivity=conn, max_ticks=400)
        assert engine.sync_status(clock()).per_sink[PRIVATE_DB].delivered == 40
