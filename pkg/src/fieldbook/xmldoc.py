"""One XML file per table: schema, entries, annotations, receipts together.

The document format (format_version 1, full element/attribute inventory
in docs/formats.md):

    <table format_version="1" id=".." title=".." schema_version=".."
           created_by=".." created_at="ISO-8601">
      <schema>  <column name type added_at_version/> ... </schema>
      <entries>
        <entry id row author captured_at>
          <value column="Nitrate" type="number">4.2</value>
          <geotag source lat lon description?/>
        </entry> ...
      </entries>
      <annotations>
        <annotation id author captured_at effective_at kind visibility
                    sequence extra_sinks="sink sink">
          <scope level row? column?/>
          <text>...</text>
          <geotag .../>
        </annotation> ...
      </annotations>
      <receipts> <receipt payload sink receipt_id delivered_at/> ... </receipts>
    </table>

Free text (titles, authors, column names, cell text, note text, location
descriptions) passes through a small escape codec because XML 1.0 cannot
carry control characters, lone surrogates or a literal CR (parsers fold
CR to LF): backslash doubles, and each unrepresentable character becomes
``\\uXXXX``. Ordinary text is stored byte-identically.

Saves are atomic: write a temp file, fsync, rename over the target.
"""
from __future__ import annotations

import os
import re
import xml.etree.ElementTree as ET
from datetime import datetime
from pathlib import Path

from .errors import DocumentFormatError, FieldbookError, StorageError
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
    TableDocument,
    TableSchema,
    ValueType,
    Visibility,
)

FORMAT_VERSION = "1"

# XML 1.0 cannot represent these; \r is representable but normalized away.
_NEEDS_ESCAPE = re.compile(
    "[\x00-\x08\x0b\x0c\x0e-\x1f\r\ud800-\udfff￾￿]"
)
_UNESCAPE = re.compile(r"\\\\|\\u[0-9a-fA-F]{4}")


def encode_text(s: str) -> str:
    s = s.replace("\\", "\\\\")
    return _NEEDS_ESCAPE.sub(lambda m: f"\\u{ord(m.group(0)):04x}", s)


def decode_text(s: str) -> str:
    def unescape(m: re.Match) -> str:
        tok = m.group(0)
        return "\\" if tok == "\\\\" else chr(int(tok[2:], 16))

    return _UNESCAPE.sub(unescape, s)


def _ts(dt: datetime) -> str:
    return dt.isoformat()


def _parse_ts(s: str, where: str) -> datetime:
    try:
        return datetime.fromisoformat(s)
    except ValueError:
        raise DocumentFormatError(f"bad timestamp {s!r} in {where}") from None


def _cell_to_str(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, datetime):
        return _ts(value)
    return encode_text(value)


def _cell_from_str(text: str, value_type: ValueType, where: str):
    if value_type is ValueType.TEXT:
        return decode_text(text)
    if value_type is ValueType.NUMBER:
        try:
            return float(text)
        except ValueError:
            raise DocumentFormatError(f"bad number {text!r} in {where}") from None
    if value_type is ValueType.BOOLEAN:
        if text not in ("true", "false"):
            raise DocumentFormatError(f"bad boolean {text!r} in {where}")
        return text == "true"
    return _parse_ts(text, where)


def _geotag_element(tag: GeoTag) -> ET.Element:
    el = ET.Element("geotag", source=tag.source.value)
    if tag.latitude is not None:
        el.set("lat", repr(tag.latitude))
        el.set("lon", repr(tag.longitude))
    if tag.description is not None:
        el.set("description", encode_text(tag.description))
    return el


def _parse_geotag(el: ET.Element | None) -> GeoTag | None:
    if el is None:
        return None
    desc = el.get("description")
    lat, lon = el.get("lat"), el.get("lon")
    try:
        return GeoTag(
            source=GeoSource(el.get("source")),
            latitude=float(lat) if lat is not None else None,
            longitude=float(lon) if lon is not None else None,
            description=decode_text(desc) if desc is not None else None,
        )
    except (ValueError, FieldbookError) as exc:
        raise DocumentFormatError(f"bad geotag: {exc}") from None


def document_to_element(document: TableDocument) -> ET.Element:
    schema = document.schema
    root = ET.Element(
        "table",
        format_version=FORMAT_VERSION,
        id=schema.table_id,
        title=encode_text(schema.title),
        schema_version=str(schema.schema_version),
        created_by=encode_text(schema.created_by),
        created_at=_ts(schema.created_at),
    )
    schema_el = ET.SubElement(root, "schema")
    for col in schema.columns:
        ET.SubElement(
            schema_el,
            "column",
            name=encode_text(col.name),
            type=col.value_type.value,
            added_at_version=str(col.added_at_version),
        )
    entries_el = ET.SubElement(root, "entries")
    for entry in document.entries:
        e = ET.SubElement(
            entries_el,
            "entry",
            id=entry.entry_id,
            row=str(entry.row_index),
            author=encode_text(entry.author),
            captured_at=_ts(entry.captured_at),
        )
        for name in entry.values:
            col = schema.column(name)
            v = ET.SubElement(e, "value", column=encode_text(name), type=col.value_type.value)
            v.text = _cell_to_str(entry.values[name])
        if entry.geotag:
            e.append(_geotag_element(entry.geotag))
    annotations_el = ET.SubElement(root, "annotations")
    for a in document.annotations:
        el = ET.SubElement(
            annotations_el,
            "annotation",
            id=a.annotation_id,
            author=encode_text(a.author),
            captured_at=_ts(a.captured_at),
            effective_at=_ts(a.effective_at),
            kind=a.kind.value,
            visibility=a.visibility.value,
            sequence=str(a.sequence),
            extra_sinks=" ".join(sorted(a.extra_sinks)),
        )
        scope_el = ET.SubElement(el, "scope", level=a.scope.level.value)
        if a.scope.row_index is not None:
            scope_el.set("row", str(a.scope.row_index))
        if a.scope.column_name is not None:
            scope_el.set("column", encode_text(a.scope.column_name))
        text_el = ET.SubElement(el, "text")
        text_el.text = encode_text(a.text)
        if a.geotag:
            el.append(_geotag_element(a.geotag))
    receipts_el = ET.SubElement(root, "receipts")
    for payload_id, receipts in document.receipts.items():
        for r in receipts:
            ET.SubElement(
                receipts_el,
                "receipt",
                payload=payload_id,
                sink=r.sink_id,
                receipt_id=r.receipt_id,
                delivered_at=_ts(r.delivered_at),
            )
    return root


def save_document(document: TableDocument, directory: Path) -> Path:
    """Write ``<table_id>.xml`` atomically; returns the file path."""
    directory = Path(directory)
    target = directory / f"{document.table_id}.xml"
    tmp = directory / f"{document.table_id}.xml.tmp"
    tree = ET.ElementTree(document_to_element(document))
    ET.indent(tree)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as fh:
            tree.write(fh, encoding="utf-8", xml_declaration=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)
    except OSError as exc:
        raise StorageError(f"cannot save table to {target}: {exc}") from exc
    return target


def _require(el: ET.Element, attr: str, where: str) -> str:
    value = el.get(attr)
    if value is None:
        raise DocumentFormatError(f"missing attribute {attr!r} on {where}")
    return value


def element_to_document(root: ET.Element) -> TableDocument:
    if root.tag != "table":
        raise DocumentFormatError(f"expected <table> root, got <{root.tag}>")
    if root.get("format_version") != FORMAT_VERSION:
        raise DocumentFormatError(
            f"unsupported format_version {root.get('format_version')!r}"
        )
    try:
        columns = tuple(
            ColumnSpec(
                name=decode_text(_require(c, "name", "column")),
                value_type=ValueType(_require(c, "type", "column")),
                added_at_version=int(_require(c, "added_at_version", "column")),
            )
            for c in root.findall("./schema/column")
        )
        schema = TableSchema(
            table_id=_require(root, "id", "table"),
            title=decode_text(_require(root, "title", "table")),
            columns=columns,
            schema_version=int(_require(root, "schema_version", "table")),
            created_by=decode_text(_require(root, "created_by", "table")),
            created_at=_parse_ts(_require(root, "created_at", "table"), "table"),
        )
        document = TableDocument(schema)
        for e in root.findall("./entries/entry"):
            values = {}
            for v in e.findall("value"):
                name = decode_text(_require(v, "column", "value"))
                col = schema.column(name)
                if col is None:
                    raise DocumentFormatError(f"value references unknown column {name!r}")
                values[name] = _cell_from_str(v.text or "", col.value_type, f"column {name!r}")
            document.append_entry(
                Entry(
                    entry_id=_require(e, "id", "entry"),
                    row_index=int(_require(e, "row", "entry")),
                    values=values,
                    author=decode_text(_require(e, "author", "entry")),
                    captured_at=_parse_ts(_require(e, "captured_at", "entry"), "entry"),
                    geotag=_parse_geotag(e.find("geotag")),
                )
            )
        for a in root.findall("./annotations/annotation"):
            scope_el = a.find("scope")
            if scope_el is None:
                raise DocumentFormatError("annotation missing <scope>")
            row = scope_el.get("row")
            column = scope_el.get("column")
            scope = Scope(
                level=ScopeLevel(_require(scope_el, "level", "scope")),
                table_id=schema.table_id,
                row_index=int(row) if row is not None else None,
                column_name=decode_text(column) if column is not None else None,
            )
            text_el = a.find("text")
            if text_el is None:
                raise DocumentFormatError("annotation missing <text>")
            sinks = _require(a, "extra_sinks", "annotation").split()
            document.append_annotation(
                Annotation(
                    annotation_id=_require(a, "id", "annotation"),
                    author=decode_text(_require(a, "author", "annotation")),
                    captured_at=_parse_ts(_require(a, "captured_at", "annotation"), "annotation"),
                    effective_at=_parse_ts(_require(a, "effective_at", "annotation"), "annotation"),
                    text=decode_text(text_el.text or ""),
                    scope=scope,
                    sequence=int(_require(a, "sequence", "annotation")),
                    kind=AnnotationKind(_require(a, "kind", "annotation")),
                    visibility=Visibility(_require(a, "visibility", "annotation")),
                    extra_sinks=frozenset(sinks),
                    geotag=_parse_geotag(a.find("geotag")),
                )
            )
        for r in root.findall("./receipts/receipt"):
            document.add_receipt(
                _require(r, "payload", "receipt"),
                Receipt(
                    sink_id=_require(r, "sink", "receipt"),
                    receipt_id=_require(r, "receipt_id", "receipt"),
                    delivered_at=_parse_ts(_require(r, "delivered_at", "receipt"), "receipt"),
                ),
            )
    except DocumentFormatError:
        raise
    except FieldbookError as exc:
        raise DocumentFormatError(f"invariant violated in stored table: {exc}") from exc
    except ValueError as exc:
        raise DocumentFormatError(f"malformed value in stored table: {exc}") from exc
    return document


def load_document(path: Path) -> TableDocument:
    """Inverse of save_document; all-or-nothing."""
    path = Path(path)
    if not path.exists():
        raise StorageError(f"no such table file: {path}")
    try:
        tree = ET.parse(path)
    except ET.ParseError as exc:
        line, column = exc.position
        raise DocumentFormatError(
            f"malformed XML in {path} at line {line}, column {column}: {exc.msg}"
        ) from None
    return element_to_document(tree.getroot())
