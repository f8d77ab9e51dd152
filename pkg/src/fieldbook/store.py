"""The durable document store: tables, annotations and the outbound queue.

Write-ahead discipline: every mutation is journaled before it is applied
in memory, and the call does not return (is not "acknowledged") until
the journal append has been fsynced. A capture and its queue item share
one journal record, so an acknowledged annotation can never exist
without its sync envelope.

Snapshot cadence: after every N journaled mutations (or on an explicit
flush) each dirty table is rewritten to its XML file and the journal is
compacted down to the live queue state. Replay is idempotent — applying
a journal record whose effect is already present in a snapshot is a
no-op — so a crash anywhere around a snapshot recovers cleanly.

Opening a store is recovery: load every table XML, then replay the
journal over it. Items caught mid-flight by a crash come back as pending
with their ambiguity recorded, so the next delivery attempt knows to
check the sink before re-posting.
"""
from __future__ import annotations

import threading
from datetime import datetime
from pathlib import Path

from .clock import Clock, as_utc, system_clock
from .errors import NotFoundError, ValidationError
from .ids import new_id
from .journal import (
    OP_ADD_COLUMN,
    OP_ADD_ENTRY,
    OP_ANNOTATE,
    OP_CREATE_TABLE,
    OP_QUEUE_STATE,
    Journal,
    JournalRecord,
)
from .model import (
    PRIVATE_DB,
    PUBLIC_MICROBLOG,
    Annotation,
    AnnotationKind,
    ColumnSpec,
    Entry,
    FeedFilter,
    GeoTag,
    Receipt,
    Scope,
    TableDocument,
    TableSchema,
    ValueType,
    Visibility,
    feed_order,
    parse_cell,
    resolve_scope,
)
from .sync import (
    IN_FLIGHT,
    KIND_ANNOTATION,
    KIND_ENTRY,
    PENDING,
    QueueItem,
    build_queue_item,
    item_from_dict,
    item_to_dict,
)
from .wire import (
    annotation_from_dict,
    annotation_to_dict,
    entry_from_dict,
    entry_to_dict,
    schema_from_dict,
    schema_to_dict,
)
from .xmldoc import load_document, save_document

DEFAULT_SNAPSHOT_EVERY = 50


class FieldStore:
    """Single-process store over one data directory."""

    def __init__(
        self,
        data_dir: Path | str,
        clock: Clock = system_clock,
        snapshot_every: int = DEFAULT_SNAPSHOT_EVERY,
        fsync: bool = True,
        registered_sinks: frozenset[str] | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.snapshot_every = max(1, snapshot_every)
        self.registered_sinks = registered_sinks or frozenset(
            {PRIVATE_DB, PUBLIC_MICROBLOG, "raw_repo", "context_repo"}
        )
        self.documents: dict[str, TableDocument] = {}
        self.queue_items: dict[str, QueueItem] = {}
        self.recovery_notes: list[str] = []
        self._lock = threading.RLock()
        self._dirty: set[str] = set()
        self._ops_since_snapshot = 0
        self._enqueue_seq = 0
        self._load(fsync)

    # -- recovery ------------------------------------------------------

    def _load(self, fsync: bool) -> None:
        for path in sorted(self.data_dir.glob("*.xml")):
            document = load_document(path)
            self.documents[document.table_id] = document
        self.journal, journal_scan = Journal.open(self.data_dir / "journal.log", fsync=fsync)
        for record in journal_scan.records:
            self._replay(record)
        if journal_scan.damage and journal_scan.damage.kind == "corruption":
            self.recovery_notes.append(str(journal_scan.damage))
        for item in self.queue_items.values():
            for sink_id, state in item.states.items():
                if state == IN_FLIGHT:
                    item.states[sink_id] = PENDING
                    item.unresolved[sink_id] = True
            # The queue record is the journaled source of truth for
            # receipts; reattach any the table XML has not snapshotted.
            document = self.documents.get(item.table_id)
            if document is not None:
                for receipt in item.receipts.values():
                    if not _has_receipt(document, item.payload_id, receipt):
                        document.add_receipt(item.payload_id, receipt)
                        self._dirty.add(item.table_id)
            self._enqueue_seq = max(self._enqueue_seq, item.enqueue_seq)

    def _replay(self, record: JournalRecord) -> None:
        data = record.data
        if record.op_kind == OP_CREATE_TABLE:
            schema = schema_from_dict(data["schema"])
            if schema.table_id not in self.documents:
                self.documents[schema.table_id] = TableDocument(schema)
                self._dirty.add(schema.table_id)
        elif record.op_kind == OP_ADD_COLUMN:
            document = self.documents.get(data["table_id"])
            if document is not None and document.schema.schema_version < data["new_version"]:
                document.schema = document.schema.with_column(
                    data["name"], ValueType(data["value_type"])
                )
                self._dirty.add(document.table_id)
        elif record.op_kind == OP_ADD_ENTRY:
            document = self.documents.get(data["table_id"])
            if document is not None:
                entry = entry_from_dict(data["entry"], document.schema)
                if document.entry_at(entry.row_index) is None:
                    document.append_entry(entry)
                    self._dirty.add(document.table_id)
            self._register_item(item_from_dict(data["queue_item"]))
        elif record.op_kind == OP_ANNOTATE:
            document = self.documents.get(data["table_id"])
            if document is not None:
                annotation = annotation_from_dict(data["annotation"])
                if all(a.annotation_id != annotation.annotation_id for a in document.annotations):
                    document.append_annotation(annotation)
                    self._dirty.add(document.table_id)
            self._register_item(item_from_dict(data["queue_item"]))
        elif record.op_kind == OP_QUEUE_STATE:
            self._register_item(item_from_dict(data["item"]), overwrite=True)

    def _register_item(self, item: QueueItem, overwrite: bool = False) -> None:
        if item.item_id in self.queue_items:
            if overwrite:
                self.queue_items[item.item_id] = item
        else:
            self.queue_items[item.item_id] = item

    # -- mutation plumbing ----------------------------------------------

    def _journal_op(self, op_kind: str, data: dict) -> None:
        """Write-ahead: the record must be durable before the op applies."""
        self.journal.append(op_kind, data)

    def _op_done(self) -> None:
        """Count an applied op toward the snapshot cadence."""
        self._ops_since_snapshot += 1
        if self._ops_since_snapshot >= self.snapshot_every:
            self.flush()

    def flush(self) -> None:
        """Snapshot now: rewrite dirty tables, compact the journal."""
        with self._lock:
            for table_id in sorted(self._dirty):
                save_document(self.documents[table_id], self.data_dir)
            self._dirty.clear()
            ops = [
                (OP_QUEUE_STATE, {"item": item_to_dict(item)})
                for item in self.queue_items.values()
            ]
            self.journal.rewrite(ops)
            self._ops_since_snapshot = 0

    def close(self) -> None:
        with self._lock:
            self.flush()
            self.journal.close()

    # -- table operations -------------------------------------------------

    def create_table(
        self, title: str, columns: list[tuple[str, ValueType | str]], author: str
    ) -> TableSchema:
        if not title:
            raise ValidationError("table title must be non-empty", field="title")
        _require_author(author)
        specs = tuple(
            _column_spec(name, value_type, added_at_version=1) for name, value_type in columns
        )
        with self._lock:
            now = as_utc(self.clock())
            schema = TableSchema(
                table_id=new_id("tbl", now),
                title=title,
                columns=specs,
                schema_version=1,
                created_by=author,
                created_at=now,
            )
            self._journal_op(OP_CREATE_TABLE, {"schema": schema_to_dict(schema)})
            self.documents[schema.table_id] = TableDocument(schema)
            self._dirty.add(schema.table_id)
            self._op_done()
            return schema

    def add_column(self, table_id: str, name: str, value_type: ValueType | str) -> TableSchema:
        with self._lock:
            document = self.document(table_id)
            vt = _value_type(value_type)
            evolved = document.schema.with_column(name, vt)
            self._journal_op(
                OP_ADD_COLUMN,
                {
                    "table_id": table_id,
                    "name": name,
                    "value_type": vt.value,
                    "new_version": evolved.schema_version,
                },
            )
            document.schema = evolved
            self._dirty.add(table_id)
            self._op_done()
            return evolved

    def add_entry(
        self,
        table_id: str,
        values: dict[str, object],
        author: str,
        geotag: GeoTag | None = None,
    ) -> Entry:
        _require_author(author)
        with self._lock:
            document = self.document(table_id)
            parsed = {}
            for name, raw in values.items():
                column = document.schema.column(name)
                if column is None:
                    raise NotFoundError("column", repr(name))
                parsed[name] = parse_cell(column, raw)
            now = as_utc(self.clock())
            entry = Entry(
                entry_id=new_id("ent", now),
                row_index=document.next_row_index(),
                values=parsed,
                author=author,
                captured_at=now,
                geotag=geotag,
            )
            item = self._build_item(table_id, entry.entry_id, KIND_ENTRY, author, frozenset())
            self._journal_op(
                OP_ADD_ENTRY,
                {
                    "table_id": table_id,
                    "entry": entry_to_dict(entry),
                    "queue_item": item_to_dict(item),
                },
            )
            document.append_entry(entry)
            self._register_item(item)
            self._dirty.add(table_id)
            self._op_done()
            return entry

    def annotate(
        self,
        scope: Scope,
        text: str,
        author: str,
        *,
        effective_at: datetime | None = None,
        geotag: GeoTag | None = None,
        kind: AnnotationKind | str | None = None,
        visibility: Visibility | str | None = None,
        extra_sinks: frozenset[str] | set[str] | None = None,
    ) -> Annotation:
        """Create a scoped note; defaults are private, kind=note, no extra sinks."""
        if not text:
            raise ValidationError("annotation text must be non-empty", field="text")
        _require_author(author)
        with self._lock:
            document = self.document(scope.table_id)
            resolution = resolve_scope(scope, document)
            if not resolution.ok:
                raise NotFoundError("scope target", resolution.missing or "?")
            sinks, vis = _normalize_publication(visibility, extra_sinks)
            now = as_utc(self.clock())
            annotation = Annotation(
                annotation_id=new_id("ann", now),
                author=author,
                captured_at=now,
                effective_at=as_utc(effective_at) if effective_at else now,
                text=text,
                scope=scope,
                sequence=document.next_sequence(),
                kind=AnnotationKind(kind) if kind else AnnotationKind.NOTE,
                visibility=vis,
                extra_sinks=sinks,
                geotag=geotag,
            )
            item = self._build_item(
                scope.table_id, annotation.annotation_id, KIND_ANNOTATION, author, sinks
            )
            self._journal_op(
                OP_ANNOTATE,
                {
                    "table_id": scope.table_id,
                    "annotation": annotation_to_dict(annotation),
                    "queue_item": item_to_dict(item),
                },
            )
            document.append_annotation(annotation)
            self._register_item(item)
            self._dirty.add(scope.table_id)
            self._op_done()
            return annotation

    # -- reads -------------------------------------------------------------

    def document(self, table_id: str) -> TableDocument:
        document = self.documents.get(table_id)
        if document is None:
            raise NotFoundError("table", table_id)
        return document

    def tables(self) -> list[TableSchema]:
        with self._lock:
            return [d.schema for d in self.documents.values()]

    def resolve_table(self, ref: str) -> TableDocument:
        """Accept a table id or a unique title, for CLI/UI convenience."""
        with self._lock:
            if ref in self.documents:
                return self.documents[ref]
            matches = [d for d in self.documents.values() if d.schema.title == ref]
            if len(matches) == 1:
                return matches[0]
            if len(matches) > 1:
                raise ValidationError(
                    f"table title {ref!r} is ambiguous ({len(matches)} tables); use the id"
                )
            raise NotFoundError("table", ref)

    def feed(
        self, table_id: str | None = None, feed_filter: FeedFilter | None = None
    ) -> list[Annotation]:
        """Annotations in reverse chronological order of effective time.

        Unknown table ids yield an empty feed; omitting the table id
        merges every table (consistent snapshot per table, not global).
        """
        feed_filter = feed_filter or FeedFilter()
        with self._lock:
            if table_id is not None:
                document = self.documents.get(table_id)
                pool = list(document.annotations) if document else []
            else:
                pool = [
                    a
                    for tid in sorted(self.documents)
                    for a in self.documents[tid].annotations
                ]
        return feed_order(a for a in pool if feed_filter.matches(a))

    # -- queue -------------------------------------------------------------

    def _build_item(
        self,
        table_id: str,
        payload_id: str,
        payload_kind: str,
        author: str,
        target_sinks: frozenset[str],
    ) -> QueueItem:
        self._enqueue_seq += 1
        return build_queue_item(
            table_id=table_id,
            payload_id=payload_id,
            payload_kind=payload_kind,
            author=author,
            target_sinks=target_sinks,
            registered_sinks=self.registered_sinks,
            enqueued_at=as_utc(self.clock()),
            enqueue_seq=self._enqueue_seq,
        )

    def enqueue_payload(
        self,
        table_id: str,
        payload_id: str,
        payload_kind: str,
        author: str,
        target_sinks: frozenset[str] = frozenset(),
    ) -> QueueItem:
        """Queue an existing (already journaled) payload for delivery."""
        with self._lock:
            document = self.document(table_id)
            known = {e.entry_id for e in document.entries} | {
                a.annotation_id for a in document.annotations
            }
            if payload_id not in known:
                raise NotFoundError(payload_kind, payload_id)
            item = self._build_item(table_id, payload_id, payload_kind, author, target_sinks)
            self._journal_op(OP_QUEUE_STATE, {"item": item_to_dict(item)})
            self._register_item(item)
            self._op_done()
            return item

    def queue_changed(self, item: QueueItem) -> None:
        """Journal a queue state transition (delivery receipts ride along)."""
        with self._lock:
            self._journal_op(OP_QUEUE_STATE, {"item": item_to_dict(item)})
            self._register_item(item, overwrite=True)
            self._op_done()

    def record_receipt(self, table_id: str, payload_id: str, receipt: Receipt) -> None:
        with self._lock:
            document = self.documents.get(table_id)
            if document is not None and not _has_receipt(document, payload_id, receipt):
                document.add_receipt(payload_id, receipt)
                self._dirty.add(table_id)

    def queue_in_order(self) -> list[QueueItem]:
        with self._lock:
            return sorted(
                self.queue_items.values(), key=lambda i: (i.enqueued_at, i.enqueue_seq)
            )


def _has_receipt(document: TableDocument, payload_id: str, receipt: Receipt) -> bool:
    return receipt in document.receipts.get(payload_id, ())


def _require_author(author: str) -> None:
    if not author:
        raise ValidationError("author must be non-empty", field="author")


def _value_type(value_type: ValueType | str) -> ValueType:
    try:
        return ValueType(value_type)
    except ValueError:
        raise ValidationError(f"unknown value type: {value_type!r}", field="value_type") from None


def _column_spec(name: str, value_type: ValueType | str, added_at_version: int) -> ColumnSpec:
    return ColumnSpec(name=name, value_type=_value_type(value_type), added_at_version=added_at_version)


def _normalize_publication(
    visibility: Visibility | str | None,
    extra_sinks: frozenset[str] | set[str] | None,
) -> tuple[frozenset[str], Visibility]:
    """Reconcile the visibility toggle with the sink opt-ins.

    Either signal opts a note into the public microblog; an explicit
    private visibility combined with a public sink is a contradiction
    and gets rejected rather than silently resolved.
    """
    sinks = set(extra_sinks or ())
    if visibility is None:
        vis = Visibility.PUBLIC if PUBLIC_MICROBLOG in sinks else Visibility.PRIVATE
    else:
        vis = Visibility(visibility)
        if vis is Visibility.PUBLIC:
            sinks.add(PUBLIC_MICROBLOG)
        elif PUBLIC_MICROBLOG in sinks:
            raise ValidationError(
                "visibility=private contradicts extra_sinks containing public_microblog",
                field="visibility",
            )
    return frozenset(sinks), vis
