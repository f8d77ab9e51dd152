"""Canonical dict encoding of domain values.

One encoding serves every structured-text surface: journal payloads,
HTTP request/response bodies and the CLI's machine-readable output.
Timestamps are ISO-8601 strings; cell values ride as JSON natives and
are re-typed from the table schema on the way in.
"""
from __future__ import annotations

from datetime import datetime
from typing import Any

from .clock import as_utc
from .errors import ValidationError
from .model import (
    Annotation,
    AnnotationKind,
    ColumnSpec,
    Entry,
    GeoSource,
    GeoTag,
    Receipt,
    Scope,
    ScopeLevel,
    TableSchema,
    ValueType,
    Visibility,
    parse_cell,
)


def ts(dt: datetime) -> str:
    return dt.isoformat()


def parse_ts(raw: str) -> datetime:
    try:
        # Python < 3.11 fromisoformat rejects the Zulu suffix browsers emit
        if isinstance(raw, str) and raw.endswith(("Z", "z")):
            raw = raw[:-1] + "+00:00"
        return as_utc(datetime.fromisoformat(raw))
    except (ValueError, TypeError):
        raise ValidationError(f"bad timestamp: {raw!r}") from None


def cell_to_wire(value: Any) -> Any:
    if isinstance(value, datetime):
        return ts(value)
    return value


def geotag_to_dict(tag: GeoTag) -> dict:
    out: dict[str, Any] = {"source": tag.source.value}
    if tag.latitude is not None:
        out["latitude"] = tag.latitude
        out["longitude"] = tag.longitude
    if tag.description is not None:
        out["description"] = tag.description
    return out


def geotag_from_dict(data: dict | None) -> GeoTag | None:
    if data is None:
        return None
    try:
        source = GeoSource(data.get("source", GeoSource.DEVICE.value))
    except ValueError:
        raise ValidationError(f"bad geotag source: {data.get('source')!r}", field="geotag")
    lat = data.get("latitude")
    lon = data.get("longitude")
    return GeoTag(
        source=source,
        latitude=float(lat) if lat is not None else None,
        longitude=float(lon) if lon is not None else None,
        description=data.get("description"),
    )


def schema_to_dict(schema: TableSchema) -> dict:
    return {
        "table_id": schema.table_id,
        "title": schema.title,
        "schema_version": schema.schema_version,
        "created_by": schema.created_by,
        "created_at": ts(schema.created_at),
        "columns": [
            {
                "name": c.name,
                "value_type": c.value_type.value,
                "added_at_version": c.added_at_version,
            }
            for c in schema.columns
        ],
    }


def schema_from_dict(data: dict) -> TableSchema:
    return TableSchema(
        table_id=data["table_id"],
        title=data["title"],
        columns=tuple(
            ColumnSpec(c["name"], ValueType(c["value_type"]), c["added_at_version"])
            for c in data["columns"]
        ),
        schema_version=data["schema_version"],
        created_by=data["created_by"],
        created_at=parse_ts(data["created_at"]),
    )


def entry_to_dict(entry: Entry) -> dict:
    out = {
        "entry_id": entry.entry_id,
        "row_index": entry.row_index,
        "author": entry.author,
        "captured_at": ts(entry.captured_at),
        "values": {k: cell_to_wire(v) for k, v in entry.values.items()},
    }
    if entry.geotag:
        out["geotag"] = geotag_to_dict(entry.geotag)
    return out


def entry_from_dict(data: dict, schema: TableSchema) -> Entry:
    values = {}
    for name, raw in data["values"].items():
        col = schema.column(name)
        if col is None:
            raise ValidationError(f"value names unknown column {name!r}")
        values[name] = parse_cell(col, raw)
    return Entry(
        entry_id=data["entry_id"],
        row_index=data["row_index"],
        values=values,
        author=data["author"],
        captured_at=parse_ts(data["captured_at"]),
        geotag=geotag_from_dict(data.get("geotag")),
    )


def scope_to_dict(scope: Scope) -> dict:
    out: dict[str, Any] = {"level": scope.level.value, "table_id": scope.table_id}
    if scope.row_index is not None:
        out["row_index"] = scope.row_index
    if scope.column_name is not None:
        out["column_name"] = scope.column_name
    return out


def scope_from_dict(data: dict) -> Scope:
    try:
        level = ScopeLevel(data["level"])
    except (ValueError, KeyError):
        raise ValidationError(f"bad scope level: {data.get('level')!r}", field="level") from None
    return Scope(
        level=level,
        table_id=data["table_id"],
        row_index=data.get("row_index"),
        column_name=data.get("column_name"),
    )


def annotation_to_dict(annotation: Annotation) -> dict:
    out = {
        "annotation_id": annotation.annotation_id,
        "author": annotation.author,
        "captured_at": ts(annotation.captured_at),
        "effective_at": ts(annotation.effective_at),
        "text": annotation.text,
        "scope": scope_to_dict(annotation.scope),
        "sequence": annotation.sequence,
        "kind": annotation.kind.value,
        "visibility": annotation.visibility.value,
        "extra_sinks": sorted(annotation.extra_sinks),
    }
    if annotation.geotag:
        out["geotag"] = geotag_to_dict(annotation.geotag)
    return out


def annotation_from_dict(data: dict) -> Annotation:
    return Annotation(
        annotation_id=data["annotation_id"],
        author=data["author"],
        captured_at=parse_ts(data["captured_at"]),
        effective_at=parse_ts(data["effective_at"]),
        text=data["text"],
        scope=scope_from_dict(data["scope"]),
        sequence=data["sequence"],
        kind=AnnotationKind(data["kind"]),
        visibility=Visibility(data["visibility"]),
        extra_sinks=frozenset(data["extra_sinks"]),
        geotag=geotag_from_dict(data.get("geotag")),
    )


def receipt_to_dict(receipt: Receipt) -> dict:
    return {
        "sink_id": receipt.sink_id,
        "receipt_id": receipt.receipt_id,
        "delivered_at": ts(receipt.delivered_at),
    }


def receipt_from_dict(data: dict) -> Receipt:
    return Receipt(
        sink_id=data["sink_id"],
        receipt_id=data["receipt_id"],
        delivered_at=parse_ts(data["delivered_at"]),
    )
