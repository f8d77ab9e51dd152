"""Domain types for tables, entries, annotations and scopes.

All types here are plain in-memory values. Timestamps are aware UTC
datetimes. Value objects are frozen dataclasses; a ``TableDocument`` is
the one mutable container and is the unit of persistence: one schema,
its entries, every annotation bound to it, and the delivery receipts
for items that have reached a sink.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from typing import Iterable, Mapping

from .clock import as_utc
from .errors import NotFoundError, TypeMismatchError, ValidationError

# Well-known sink ids. The registry is extensible but these four are the
# standard publication targets; private_db is always present.
PRIVATE_DB = "private_db"
PUBLIC_MICROBLOG = "public_microblog"
RAW_REPO = "raw_repo"
CONTEXT_REPO = "context_repo"

ANNOTATION_EXTRA_SINKS = frozenset({PUBLIC_MICROBLOG, RAW_REPO, CONTEXT_REPO})
ENTRY_ALLOWED_SINKS = frozenset({PRIVATE_DB, RAW_REPO})


class ValueType(str, Enum):
    TEXT = "text"
    NUMBER = "number"
    BOOLEAN = "boolean"
    TIMESTAMP = "timestamp"


class AnnotationKind(str, Enum):
    NOTE = "note"
    EVENT = "event"
    INSTRUMENT_FAILURE = "instrument_failure"


class Visibility(str, Enum):
    PRIVATE = "private"
    PUBLIC = "public"


class ScopeLevel(str, Enum):
    TABLE = "table"
    ROW = "row"
    COLUMN = "column"
    CELL = "cell"


class GeoSource(str, Enum):
    DEVICE = "device"
    MANUAL_DESCRIPTION = "manual_description"


CellValue = str | float | bool | datetime


@dataclass(frozen=True)
class GeoTag:
    source: GeoSource
    latitude: float | None = None
    longitude: float | None = None
    description: str | None = None

    def __post_init__(self):
        if self.source is GeoSource.DEVICE:
            if self.latitude is None or self.longitude is None:
                raise ValidationError("device geotag requires coordinates", field="geotag")
        else:
            if not self.description:
                raise ValidationError(
                    "manual geotag requires a location description", field="geotag"
                )
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(
                f"latitude {self.latitude} outside [-90, 90]", field="latitude"
            )
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(
                f"longitude {self.longitude} outside [-180, 180]", field="longitude"
            )


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    value_type: ValueType
    added_at_version: int

    def __post_init__(self):
        if not self.name:
            raise ValidationError("column name must be non-empty", field="name")
        if self.added_at_version < 1:
            raise ValidationError("added_at_version must be >= 1")


@dataclass(frozen=True)
class TableSchema:
    table_id: str
    title: str
    columns: tuple[ColumnSpec, ...]
    schema_version: int
    created_by: str
    created_at: datetime

    def __post_init__(self):
        if not self.title:
            raise ValidationError("table title must be non-empty", field="title")
        names = [c.name for c in self.columns]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValidationError(
                f"duplicate column name: {sorted(dupes)[0]!r}", field="columns"
            )
        # Append-only evolution: versions 2..schema_version each added
        # exactly one column, and column order follows version order.
        versions = [c.added_at_version for c in self.columns]
        if versions != sorted(versions):
            raise ValidationError("columns must be ordered by added_at_version")
        if self.schema_version < 1:
            raise ValidationError("schema_version must be >= 1")
        for v in range(2, self.schema_version + 1):
            if versions.count(v) != 1:
                raise ValidationError(
                    f"schema version {v} must correspond to exactly one added column"
                )
        if any(v > self.schema_version for v in versions):
            raise ValidationError("column added_at_version exceeds schema version")

    def column(self, name: str) -> ColumnSpec | None:
        for c in self.columns:
            if c.name == name:
                return c
        return None

    def with_column(self, name: str, value_type: ValueType) -> TableSchema:
        """Append-only schema evolution: new column, version bumped by one."""
        if self.column(name) is not None:
            raise ValidationError(f"duplicate column name: {name!r}", field="name")
        version = self.schema_version + 1
        col = ColumnSpec(name=name, value_type=value_type, added_at_version=version)
        return replace(self, columns=self.columns + (col,), schema_version=version)


@dataclass(frozen=True)
class Entry:
    entry_id: str
    row_index: int
    values: Mapping[str, CellValue]
    author: str
    captured_at: datetime
    geotag: GeoTag | None = None


@dataclass(frozen=True)
class Scope:
    level: ScopeLevel
    table_id: str
    row_index: int | None = None
    column_name: str | None = None

    def __post_init__(self):
        need_row = self.level in (ScopeLevel.ROW, ScopeLevel.CELL)
        need_col = self.level in (ScopeLevel.COLUMN, ScopeLevel.CELL)
        if need_row and self.row_index is None:
            raise ValidationError(f"{self.level.value} scope requires row_index", field="row_index")
        if not need_row and self.row_index is not None:
            raise ValidationError(f"{self.level.value} scope takes no row_index", field="row_index")
        if need_col and not self.column_name:
            raise ValidationError(f"{self.level.value} scope requires column_name", field="column_name")
        if not need_col and self.column_name is not None:
            raise ValidationError(f"{self.level.value} scope takes no column_name", field="column_name")


@dataclass(frozen=True)
class Annotation:
    annotation_id: str
    author: str
    captured_at: datetime          # set from the clock at creation, never changes
    effective_at: datetime         # defaults to captured_at; may point past or future
    text: str
    scope: Scope
    sequence: int
    kind: AnnotationKind = AnnotationKind.NOTE
    visibility: Visibility = Visibility.PRIVATE
    extra_sinks: frozenset[str] = frozenset()
    geotag: GeoTag | None = None

    def __post_init__(self):
        if not self.text:
            raise ValidationError("annotation text must be non-empty", field="text")
        bad = self.extra_sinks - ANNOTATION_EXTRA_SINKS
        if bad:
            raise ValidationError(f"unknown extra sink: {sorted(bad)[0]!r}", field="extra_sinks")
        is_public = self.visibility is Visibility.PUBLIC
        if is_public != (PUBLIC_MICROBLOG in self.extra_sinks):
            raise ValidationError(
                "visibility must be public exactly when public_microblog is targeted",
                field="visibility",
            )


@dataclass(frozen=True)
class Receipt:
    """A sink's acknowledgment of one delivered item."""

    sink_id: str
    receipt_id: str
    delivered_at: datetime


class TableDocument:
    """One table: schema, entries, annotations and delivery receipts.

    Entries stay ordered by row_index and annotations by their per-table
    insertion sequence. Receipts are keyed by the entry/annotation id
    they acknowledge, so exported and saved documents carry the delivery
    record alongside the data.
    """

    def __init__(self, schema: TableSchema):
        self.schema = schema
        self.entries: list[Entry] = []
        self.annotations: list[Annotation] = []
        self.receipts: dict[str, tuple[Receipt, ...]] = {}

    @property
    def table_id(self) -> str:
        return self.schema.table_id

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TableDocument):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.entries == other.entries
            and self.annotations == other.annotations
            and self.receipts == other.receipts
        )

    def __repr__(self) -> str:
        return (
            f"<TableDocument {self.table_id!r} v{self.schema.schema_version} "
            f"{len(self.entries)} entries, {len(self.annotations)} annotations>"
        )

    def next_row_index(self) -> int:
        return self.entries[-1].row_index + 1 if self.entries else 1

    def next_sequence(self) -> int:
        return self.annotations[-1].sequence + 1 if self.annotations else 1

    def entry_at(self, row_index: int) -> Entry | None:
        for e in self.entries:
            if e.row_index == row_index:
                return e
        return None

    def append_entry(self, entry: Entry) -> None:
        if entry.row_index != self.next_row_index():
            raise ValidationError(
                f"row_index {entry.row_index} breaks dense ordering "
                f"(expected {self.next_row_index()})"
            )
        validate_entry_values(self.schema, entry.values)
        self.entries.append(entry)

    def append_annotation(self, annotation: Annotation) -> None:
        if annotation.sequence != self.next_sequence():
            raise ValidationError(
                f"annotation sequence {annotation.sequence} breaks ordering "
                f"(expected {self.next_sequence()})"
            )
        res = resolve_scope(annotation.scope, self)
        if not res.ok:
            raise NotFoundError("scope target", res.missing or "?")
        self.annotations.append(annotation)

    def add_receipt(self, payload_id: str, receipt: Receipt) -> None:
        self.receipts[payload_id] = self.receipts.get(payload_id, ()) + (receipt,)


@dataclass(frozen=True)
class ScopeResolution:
    """Outcome of resolving a scope against a document; never raises."""

    ok: bool
    level: ScopeLevel
    entry: Entry | None = None
    column: ColumnSpec | None = None
    missing: str | None = None


def resolve_scope(scope: Scope, document: TableDocument) -> ScopeResolution:
    """Resolve a scope to its table/row/column/cell target.

    Total: unknown rows or columns come back as a not-found report with
    the missing piece named, not as an exception.
    """
    if scope.table_id != document.table_id:
        return ScopeResolution(False, scope.level, missing=f"table {scope.table_id!r}")
    entry = column = None
    if scope.level in (ScopeLevel.ROW, ScopeLevel.CELL):
        entry = document.entry_at(scope.row_index)  # type: ignore[arg-type]
        if entry is None:
            return ScopeResolution(False, scope.level, missing=f"row {scope.row_index}")
    if scope.level in (ScopeLevel.COLUMN, ScopeLevel.CELL):
        column = document.schema.column(scope.column_name)  # type: ignore[arg-type]
        if column is None:
            return ScopeResolution(False, scope.level, missing=f"column {scope.column_name!r}")
    return ScopeResolution(True, scope.level, entry=entry, column=column)


def parse_cell(column: ColumnSpec, raw: object) -> CellValue:
    """Coerce a raw value (native or text) to the column's value type.

    Strings are accepted everywhere because field input arrives as text;
    a value that does not parse is a TypeMismatchError naming the column,
    the expected type and the offending input.
    """
    vt = column.value_type
    if vt is ValueType.TEXT:
        if isinstance(raw, str):
            return raw
    elif vt is ValueType.NUMBER:
        if isinstance(raw, bool):
            raise TypeMismatchError(column.name, vt.value, raw)
        if isinstance(raw, (int, float)):
            if not math.isfinite(raw):
                raise TypeMismatchError(column.name, vt.value, raw)
            return float(raw)
        if isinstance(raw, str):
            try:
                value = float(raw)
            except ValueError:
                raise TypeMismatchError(column.name, vt.value, raw) from None
            if not math.isfinite(value):
                raise TypeMismatchError(column.name, vt.value, raw)
            return value
    elif vt is ValueType.BOOLEAN:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.lower() in ("true", "false"):
            return raw.lower() == "true"
    elif vt is ValueType.TIMESTAMP:
        if isinstance(raw, datetime):
            return as_utc(raw)
        if isinstance(raw, str):
            try:
                return as_utc(datetime.fromisoformat(raw))
            except ValueError:
                raise TypeMismatchError(column.name, vt.value, raw) from None
    raise TypeMismatchError(column.name, vt.value, raw)


def validate_entry_values(schema: TableSchema, values: Mapping[str, CellValue]) -> None:
    """Check every key names a column and every value matches its type."""
    for name, value in values.items():
        col = schema.column(name)
        if col is None:
            raise NotFoundError("column", repr(name))
        parsed = parse_cell(col, value)
        if type(parsed) is not type(value) or parsed != value:
            raise TypeMismatchError(name, col.value_type.value, value)


@dataclass(frozen=True)
class FeedFilter:
    geotagged_only: bool = False
    kind: AnnotationKind | None = None
    author: str | None = None
    since: datetime | None = None

    def matches(self, annotation: Annotation) -> bool:
        if self.geotagged_only and annotation.geotag is None:
            return False
        if self.kind is not None and annotation.kind is not self.kind:
            return False
        if self.author is not None and annotation.author != self.author:
            return False
        if self.since is not None and annotation.effective_at < self.since:
            return False
        return True


def feed_order(annotations: Iterable[Annotation]) -> list[Annotation]:
    """Reverse chronological by effective_at; ties newest-inserted first."""
    return sorted(annotations, key=lambda a: (a.effective_at, a.sequence), reverse=True)
