import random
import shutil
from datetime import datetime, timedelta, timezone

import pytest

from fieldbook.clock import ManualClock
from fieldbook.errors import NotFoundError, TypeMismatchError, ValidationError
from fieldbook.model import (
    PRIVATE_DB,
    PUBLIC_MICROBLOG,
    AnnotationKind,
    FeedFilter,
    GeoSource,
    GeoTag,
    Scope,
    ScopeLevel,
    ValueType,
    Visibility,
)
from fieldbook.store import FieldStore
from fieldbook.sync import item_to_dict

UTC = timezone.utc


def reopen(store):
    store.journal.close()
    return FieldStore(store.data_dir, clock=store.clock, fsync=False,
                      snapshot_every=store.snapshot_every)


def states_equal(a: FieldStore, b: FieldStore):
    assert set(a.documents) == set(b.documents)
    for table_id in a.documents:
        assert a.documents[table_id] == b.documents[table_id], table_id
    assert {i: item_to_dict(x) for i, x in a.queue_items.items()} == {
        i: item_to_dict(x) for i, x in b.queue_items.items()
    }


class TestCreateTable:
    def test_spec_example_water_quality(self, store):
        schema = store.create_table("water_quality", [("Nitrate", "number")], "alice")
        assert schema.schema_version == 1
        assert [c.name for c in schema.columns] == ["Nitrate"]
        assert schema.columns[0].added_at_version == 1
        assert store.document(schema.table_id).schema == schema

    def test_empty_schema_permitted(self, store):
        schema = store.create_table("t", [], "alice")
        assert schema.schema_version == 1
        assert schema.columns == ()

    def test_duplicate_column_rejected(self, store):
        with pytest.raises(ValidationError, match="'x'"):
            store.create_table("t", [("x", "text"), ("x", "number")], "a")

    def test_empty_title_rejected(self, store):
        with pytest.raises(ValidationError):
            store.create_table("", [], "a")

    def test_unknown_value_type_rejected(self, store):
        with pytest.raises(ValidationError, match="varchar"):
            store.create_table("t", [("x", "varchar")], "a")


class TestAddColumn:
    def test_appends_and_bumps_version(self, store):
        schema = store.create_table("water_quality", [("Nitrate", "number")], "alice")
        evolved = store.add_column(schema.table_id, "pH", "number")
        assert evolved.schema_version == 2
        assert [c.name for c in evolved.columns] == ["Nitrate", "pH"]

    def test_same_name_twice_errors(self, store):
        schema = store.create_table("t", [], "a")
        store.add_column(schema.table_id, "pH", "number")
        with pytest.raises(ValidationError, match="pH"):
            store.add_column(schema.table_id, "pH", "number")

    def test_unknown_table(self, store):
        with pytest.raises(NotFoundError):
            store.add_column("tbl-missing", "x", "text")

    def test_existing_entries_report_new_column_absent(self, store):
        schema = store.create_table("t", [("a", "number")], "alice")
        for i in range(100):
            store.add_entry(schema.table_id, {"a": float(i)}, "alice")
        store.add_column(schema.table_id, "pH", "number")
        entries = store.document(schema.table_id).entries
        assert len(entries) == 100
        assert all("pH" not in e.values for e in entries)


class TestAddEntry:
    def test_entry_with_geotag(self, store):
        schema = store.create_table("water_quality", [("Nitrate", "number")], "alice")
        tag = GeoTag(source=GeoSource.DEVICE, latitude=34.07, longitude=-118.44)
        entry = store.add_entry(schema.table_id, {"Nitrate": 4.2}, "alice", geotag=tag)
        assert entry.row_index == 1
        assert entry.values == {"Nitrate": 4.2}
        assert entry.geotag == tag
        assert -90 <= entry.geotag.latitude <= 90

    def test_sparse_entry_allowed(self, store):
        schema = store.create_table("water_quality", [("Nitrate", "number")], "alice")
        store.add_entry(schema.table_id, {"Nitrate": 4.2}, "alice")
        entry = store.add_entry(schema.table_id, {}, "alice")
        assert entry.row_index == 2
        assert entry.values == {}

    def test_type_mismatch_reports_column_and_type(self, store):
        schema = store.create_table("water_quality", [("Nitrate", "number")], "alice")
        with pytest.raises(TypeMismatchError) as err:
            store.add_entry(schema.table_id, {"Nitrate": "abc"}, "alice")
        assert err.value.column == "Nitrate"
        assert err.value.expected == "number"

    def test_unknown_column_key(self, store):
        schema = store.create_table("t", [], "a")
        with pytest.raises(NotFoundError, match="ghost"):
            store.add_entry(schema.table_id, {"ghost": 1.0}, "a")

    def test_string_values_coerced_by_column_type(self, store):
        schema = store.create_table(
            "t", [("n", "number"), ("b", "boolean"), ("w", "timestamp")], "a"
        )
        entry = store.add_entry(
            schema.table_id,
            {"n": "4.5", "b": "true", "w": "2026-03-01T10:00:00+00:00"},
            "a",
        )
        assert entry.values["n"] == 4.5
        assert entry.values["b"] is True
        assert entry.values["w"] == datetime(2026, 3, 1, 10, 0, tzinfo=UTC)

    def test_captured_at_comes_from_clock(self, store, clock):
        schema = store.create_table("t", [], "a")
        clock.advance(120)
        entry = store.add_entry(schema.table_id, {}, "a")
        assert entry.captured_at == clock()

    def test_entry_enqueued_to_private_db_only(self, store):
        schema = store.create_table("t", [], "a")
        store.add_entry(schema.table_id, {}, "a")
        items = [i for i in store.queue_in_order() if i.payload_kind == "entry"]
        assert len(items) == 1
        assert items[0].target_sinks == frozenset({PRIVATE_DB})


class TestAnnotate:
    def setup_table(self, store):
        schema = store.create_table("water_quality", [("Nitrate", "number")], "alice")
        for i in range(5):
            store.add_entry(schema.table_id, {"Nitrate": float(i)}, "alice")
        return schema

    def test_cell_scoped_private_note(self, store):
        schema = self.setup_table(store)
        scope = Scope(ScopeLevel.CELL, schema.table_id, row_index=3, column_name="Nitrate")
        a = store.annotate(scope, "sensor drift suspected", "alice")
        assert a.visibility is Visibility.PRIVATE
        assert a.kind is AnnotationKind.NOTE
        assert a.extra_sinks == frozenset()
        assert a.scope == scope
        assert a.effective_at == a.captured_at
        assert store.document(schema.table_id).annotations == [a]

    def test_public_instrument_failure_notification(self, store):
        schema = self.setup_table(store)
        a = store.annotate(
            Scope(ScopeLevel.TABLE, schema.table_id),
            "node 7 stopped reporting",
            "bob",
            kind="instrument_failure",
            visibility="public",
            extra_sinks={"public_microblog"},
        )
        assert a.kind is AnnotationKind.INSTRUMENT_FAILURE
        assert a.visibility is Visibility.PUBLIC
        assert PUBLIC_MICROBLOG in a.extra_sinks
        item = next(i for i in store.queue_in_order() if i.payload_id == a.annotation_id)
        assert item.target_sinks == frozenset({PRIVATE_DB, PUBLIC_MICROBLOG})

    def test_missing_row_scope_rejected(self, store):
        schema = self.setup_table(store)
        with pytest.raises(NotFoundError, match="row 999"):
            store.annotate(
                Scope(ScopeLevel.ROW, schema.table_id, row_index=999), "x", "a"
            )

    def test_empty_text_rejected(self, store):
        schema = self.setup_table(store)
        with pytest.raises(ValidationError):
            store.annotate(Scope(ScopeLevel.TABLE, schema.table_id), "", "a")

    def test_public_visibility_implies_public_sink(self, store):
        schema = self.setup_table(store)
        a = store.annotate(
            Scope(ScopeLevel.TABLE, schema.table_id), "x", "a", visibility="public"
        )
        assert PUBLIC_MICROBLOG in a.extra_sinks

    def test_public_sink_implies_public_visibility(self, store):
        schema = self.setup_table(store)
        a = store.annotate(
            Scope(ScopeLevel.TABLE, schema.table_id), "x", "a",
            extra_sinks={"public_microblog"},
        )
        assert a.visibility is Visibility.PUBLIC

    def test_private_plus_public_sink_is_contradiction(self, store):
        schema = self.setup_table(store)
        with pytest.raises(ValidationError, match="contradicts"):
            store.annotate(
                Scope(ScopeLevel.TABLE, schema.table_id), "x", "a",
                visibility="private", extra_sinks={"public_microblog"},
            )

    def test_effective_at_overridable_both_directions(self, store, clock):
        schema = self.setup_table(store)
        past = clock() - timedelta(days=1)
        future = clock() + timedelta(days=1)
        a_past = store.annotate(
            Scope(ScopeLevel.TABLE, schema.table_id), "yesterday's event", "a",
            effective_at=past,
        )
        a_future = store.annotate(
            Scope(ScopeLevel.TABLE, schema.table_id), "reminder", "a",
            effective_at=future,
        )
        assert a_past.effective_at == past
        assert a_past.captured_at == clock()
        assert a_future.effective_at == future

    def test_sequence_increases_per_table(self, store):
        schema = self.setup_table(store)
        other = store.create_table("other", [], "a")
        a1 = store.annotate(Scope(ScopeLevel.TABLE, schema.table_id), "1", "a")
        b1 = store.annotate(Scope(ScopeLevel.TABLE, other.table_id), "1", "a")
        a2 = store.annotate(Scope(ScopeLevel.TABLE, schema.table_id), "2", "a")
        assert (a1.sequence, a2.sequence) == (1, 2)
        assert b1.sequence == 1

    def test_unknown_extra_sink(self, store):
        schema = self.setup_table(store)
        with pytest.raises(ValidationError, match="ftp"):
            store.annotate(
                Scope(ScopeLevel.TABLE, schema.table_id), "x", "a", extra_sinks={"ftp"}
            )


class TestFeed:
    def test_order_and_unknown_table(self, store, clock):
        schema = store.create_table("t", [], "a")
        scope = Scope(ScopeLevel.TABLE, schema.table_id)
        base = clock()
        store.annotate(scope, "first", "a", effective_at=base)
        store.annotate(scope, "third", "a", effective_at=base + timedelta(minutes=5))
        store.annotate(scope, "second", "a", effective_at=base + timedelta(minutes=2))
        assert [a.text for a in store.feed(schema.table_id)] == ["third", "second", "first"]
        assert store.feed("tbl-unknown") == []
        assert store.feed() == store.feed(schema.table_id)

    def test_empty_store(self, store):
        assert store.feed() == []

    def test_geotagged_only_filter(self, store):
        schema = store.create_table("t", [], "a")
        scope = Scope(ScopeLevel.TABLE, schema.table_id)
        tagged = store.annotate(
            scope, "tagged", "a",
            geotag=GeoTag(source=GeoSource.DEVICE, latitude=1.0, longitude=2.0),
        )
        store.annotate(scope, "plain-1", "a")
        store.annotate(scope, "plain-2", "a")
        result = store.feed(schema.table_id, FeedFilter(geotagged_only=True))
        assert result == [tagged]

    def test_cross_table_feed_merges(self, store, clock):
        s1 = store.create_table("t1", [], "a")
        s2 = store.create_table("t2", [], "a")
        a1 = store.annotate(Scope(ScopeLevel.TABLE, s1.table_id), "one", "a")
        clock.advance(60)
        a2 = store.annotate(Scope(ScopeLevel.TABLE, s2.table_id), "two", "a")
        assert store.feed() == [a2, a1]

    def test_since_filter(self, store, clock):
        schema = store.create_table("t", [], "a")
        scope = Scope(ScopeLevel.TABLE, schema.table_id)
        store.annotate(scope, "old", "a")
        clock.advance(3600)
        cutoff = clock()
        fresh = store.annotate(scope, "fresh", "a")
        assert store.feed(schema.table_id, FeedFilter(since=cutoff)) == [fresh]


class TestResolveTable:
    def test_by_id_and_unique_title(self, store):
        schema = store.create_table("water_quality", [], "a")
        assert store.resolve_table(schema.table_id).table_id == schema.table_id
        assert store.resolve_table("water_quality").table_id == schema.table_id

    def test_ambiguous_title(self, store):
        store.create_table("dup", [], "a")
        store.create_table("dup", [], "a")
        with pytest.raises(ValidationError, match="ambiguous"):
            store.resolve_table("dup")

    def test_missing(self, store):
        with pytest.raises(NotFoundError):
            store.resolve_table("nope")


class TestRecovery:
    def run_workload(self, store, clock, n=50, seed=11):
        rng = random.Random(seed)
        tables = []
        for i in range(n):
            clock.advance(rng.randint(1, 90))
            roll = rng.random()
            if not tables or roll < 0.1:
                schema = store.create_table(f"table {len(tables)}", [("v", "number")], "alice")
                tables.append(schema.table_id)
            elif roll < 0.2:
                store.add_column(rng.choice(tables), f"col{i}", "text")
            elif roll < 0.6:
                store.add_entry(rng.choice(tables), {"v": float(i)}, rng.choice("abc"))
            else:
                table_id = rng.choice(tables)
                store.annotate(
                    Scope(ScopeLevel.TABLE, table_id),
                    f"note {i} é中\n<&>",
                    rng.choice("abc"),
                    extra_sinks={"public_microblog"} if rng.random() < 0.3 else None,
                )

    def test_replay_reproduces_live_state(self, tmp_path):
        clock = ManualClock()
        store = FieldStore(tmp_path / "d", clock=clock, fsync=False, snapshot_every=10_000)
        self.run_workload(store, clock)
        replayed = reopen(store)
        states_equal(store, replayed)

    def test_replay_across_snapshot_compactions(self, tmp_path):
        clock = ManualClock()
        store = FieldStore(tmp_path / "d", clock=clock, fsync=False, snapshot_every=7)
        self.run_workload(store, clock)
        replayed = reopen(store)
        states_equal(store, replayed)

    def test_torn_journal_tail_drops_only_last_op(self, tmp_path):
        clock = ManualClock()
        store = FieldStore(tmp_path / "d", clock=clock, fsync=False, snapshot_every=10_000)
        schema = store.create_table("t", [], "a")
        scope = Scope(ScopeLevel.TABLE, schema.table_id)
        for i in range(10):
            store.annotate(scope, f"n{i}", "a")
        store.journal.close()
        blob = store.journal.path.read_bytes()
        store.journal.path.write_bytes(blob[:-3])
        replayed = FieldStore(tmp_path / "d", clock=clock, fsync=False)
        texts = [a.text for a in replayed.documents[schema.table_id].annotations]
        assert texts == [f"n{i}" for i in range(9)]

    def test_empty_journal_empty_store(self, tmp_path):
        store = FieldStore(tmp_path / "d", fsync=False)
        assert store.documents == {}
        assert store.queue_items == {}

    def test_crash_between_xml_write_and_compaction_is_idempotent(self, tmp_path):
        clock = ManualClock()
        store = FieldStore(tmp_path / "d", clock=clock, fsync=False, snapshot_every=10_000)
        schema = store.create_table("t", [("v", "number")], "a")
        store.add_entry(schema.table_id, {"v": 1.0}, "a")
        store.annotate(Scope(ScopeLevel.TABLE, schema.table_id), "x", "a")
        # write the XML snapshot but leave the journal as-is (the crash
        # window inside flush between document save and journal rewrite)
        from fieldbook.xmldoc import save_document

        save_document(store.documents[schema.table_id], store.data_dir)
        replayed = reopen(store)
        states_equal(store, replayed)

    def test_checkpoint_copies_recover_exactly(self, tmp_path):
        clock = ManualClock()
        data = tmp_path / "d"
        store = FieldStore(data, clock=clock, fsync=False, snapshot_every=5)
        snapshots = []
        schema = store.create_table("t", [("v", "number")], "a")
        for i in range(25):
            store.add_entry(schema.table_id, {"v": float(i)}, "a")
            target = tmp_path / f"ckpt{i}"
            shutil.copytree(data, target)
            snapshots.append((i, target))
        for i, target in snapshots:
            recovered = FieldStore(target, clock=clock, fsync=False)
            entries = recovered.documents[schema.table_id].entries
            assert [e.values["v"] for e in entries] == [float(k) for k in range(i + 1)]
            recovered.journal.close()


class TestImmutability:
    def test_captured_at_stable_under_later_operations(self, store, clock):
        schema = store.create_table("t", [], "a")
        scope = Scope(ScopeLevel.TABLE, schema.table_id)
        a = store.annotate(scope, "first", "a")
        captured = a.captured_at
        for _ in range(10):
            clock.advance(60)
            store.annotate(scope, "later", "a")
        assert store.document(schema.table_id).annotations[0].captured_at == captured
