"""Spreadsheet export: one SpreadsheetML 2003 file, data and notes together.

The output is the single-file XML spreadsheet dialect (openable by
mainstream spreadsheet applications) with exactly two worksheets:

- "Data": header row of row_index, captured_at, author, latitude,
  longitude, then the table's columns in schema order; one row per
  entry; cells a given entry never filled stay empty.
- "Notes": sequence, effective_at, captured_at, author, kind,
  visibility, scope_level, row_index, column_name, latitude, longitude,
  text; one row per annotation in feed order (reverse chronological).

Numbers are written in shortest round-trip decimal form, booleans as
spreadsheet booleans, timestamps as ISO-8601 strings (full microsecond
precision survives, which the spreadsheet DateTime type would not
keep). Newlines and carriage returns travel as character references so
they parse back exactly. Text that XML 1.0 cannot represent at all
(control characters, lone surrogates) is rejected with the offending
cell named; the table XML store, not the export, is the lossless copy.
"""
from __future__ import annotations

import os
from datetime import datetime
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import NotFoundError, StorageError, ValidationError
from .model import TableDocument, feed_order

_XML_HEADER = (
    '<?xml version="1.0" encoding="utf-8"?>\n'
    '<?mso-application progid="Excel.Sheet"?>\n'
    '<Workbook xmlns="urn:schemas-microsoft-com:office:spreadsheet"\n'
    '          xmlns:ss="urn:schemas-microsoft-com:office:spreadsheet">\n'
)

DATA_HEADER = ("row_index", "captured_at", "author", "latitude", "longitude")
NOTES_HEADER = (
    "sequence",
    "effective_at",
    "captured_at",
    "author",
    "kind",
    "visibility",
    "scope_level",
    "row_index",
    "column_name",
    "latitude",
    "longitude",
    "text",
)


def _check_exportable(text: str, where: str) -> str:
    for ch in text:
        code = ord(ch)
        bad = (
            (code < 0x20 and ch not in "\t\n\r")
            or 0xD800 <= code <= 0xDFFF
            or code in (0xFFFE, 0xFFFF)
        )
        if bad:
            raise ValidationError(
                f"{where} contains U+{code:04X}, which a spreadsheet cell cannot hold"
            )
    return text


def _cell(value, where: str) -> str:
    """Render one <Cell>; None means an empty cell."""
    if value is None:
        return "    <Cell/>\n"
    if isinstance(value, bool):
        return f'    <Cell><Data ss:Type="Boolean">{1 if value else 0}</Data></Cell>\n'
    if isinstance(value, float):
        return f'    <Cell><Data ss:Type="Number">{repr(value)}</Data></Cell>\n'
    if isinstance(value, int):
        return f'    <Cell><Data ss:Type="Number">{value}</Data></Cell>\n'
    if isinstance(value, datetime):
        value = value.isoformat()
    body = escape(_check_exportable(value, where))
    body = body.replace("\r", "&#13;").replace("\n", "&#10;")
    return f'    <Cell><Data ss:Type="String">{body}</Data></Cell>\n'


def _row(cells: list[str]) -> str:
    return "   <Row>\n" + "".join(cells) + "   </Row>\n"


def _worksheet(name: str, rows: list[str]) -> str:
    return f' <Worksheet ss:Name="{name}">\n  <Table>\n' + "".join(rows) + "  </Table>\n </Worksheet>\n"


def render_spreadsheet(document: TableDocument) -> str:
    schema = document.schema
    column_names = [c.name for c in schema.columns]

    data_rows = [
        _row([_cell(h, "header") for h in (*DATA_HEADER, *column_names)])
    ]
    for entry in document.entries:
        lat = entry.geotag.latitude if entry.geotag else None
        lon = entry.geotag.longitude if entry.geotag else None
        cells = [
            _cell(entry.row_index, "row_index"),
            _cell(entry.captured_at, "captured_at"),
            _cell(entry.author, f"row {entry.row_index} author"),
            _cell(lat, "latitude"),
            _cell(lon, "longitude"),
        ]
        for name in column_names:
            where = f"row {entry.row_index}, column {name!r}"
            cells.append(_cell(entry.values.get(name), where))
        data_rows.append(_row(cells))

    notes_rows = [_row([_cell(h, "header") for h in NOTES_HEADER])]
    for a in feed_order(document.annotations):
        lat = a.geotag.latitude if a.geotag else None
        lon = a.geotag.longitude if a.geotag else None
        where = f"note {a.sequence}"
        notes_rows.append(
            _row(
                [
                    _cell(a.sequence, "sequence"),
                    _cell(a.effective_at, "effective_at"),
                    _cell(a.captured_at, "captured_at"),
                    _cell(a.author, f"{where} author"),
                    _cell(a.kind.value, "kind"),
                    _cell(a.visibility.value, "visibility"),
                    _cell(a.scope.level.value, "scope_level"),
                    _cell(a.scope.row_index, "row_index"),
                    _cell(a.scope.column_name, f"{where} column_name"),
                    _cell(lat, "latitude"),
                    _cell(lon, "longitude"),
                    _cell(a.text, f"{where} text"),
                ]
            )
        )

    return (
        _XML_HEADER
        + _worksheet("Data", data_rows)
        + _worksheet("Notes", notes_rows)
        + "</Workbook>\n"
    )


def export_spreadsheet(document: TableDocument, destination: Path | str) -> Path:
    """Write the two-sheet spreadsheet file; returns the path written."""
    destination = Path(destination)
    content = render_spreadsheet(document)
    tmp = destination.with_name(destination.name + ".tmp")
    try:
        destination.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_text(content, encoding="utf-8")
        os.replace(tmp, destination)
    except OSError as exc:
        raise StorageError(f"cannot export spreadsheet to {destination}: {exc}") from exc
    return destination


def export_table(store, table_id: str, destination: Path | str) -> Path:
    document = store.documents.get(table_id)
    if document is None:
        raise NotFoundError("table", table_id)
    return export_spreadsheet(document, destination)
