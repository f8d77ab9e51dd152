"""Seeded random TableDocument builder shared by round-trip and export tests.

Deliberately nasty text: XML metacharacters, whitespace variants,
control characters, lone surrogates and astral-plane symbols, so the
persistence codec earns its keep. Export tests pass a tamer alphabet.
"""
import random
import string
from datetime import datetime, timedelta, timezone

from fieldbook.model import (
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

NASTY_CHARS = (
    string.ascii_letters
    + string.digits
    + " <>&\"'\\\n\t\r"
    + "\x00\x01\x1b\x7f"
    + "𐏿￾"
    + "αβγδ漢字ñéü"
    + "\U0001f600\U0001f30d"
)

XML_SAFE_CHARS = (
    string.ascii_letters + string.digits + " <>&\"'\\\n\t\r" + "αβγδ漢字ñéü" + "\U0001f600"
)

EPOCH = datetime(2026, 1, 1, tzinfo=timezone.utc)


def random_text(rng: random.Random, alphabet: str, lo: int = 1, hi: int = 40) -> str:
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(lo, hi)))


def random_timestamp(rng: random.Random) -> datetime:
    return EPOCH + timedelta(seconds=rng.randint(0, 10_000_000), microseconds=rng.randint(0, 999_999))


def random_geotag(rng: random.Random, alphabet: str) -> GeoTag | None:
    roll = rng.random()
    if roll < 0.4:
        return None
    if roll < 0.8:
        return GeoTag(
            source=GeoSource.DEVICE,
            latitude=round(rng.uniform(-90, 90), 6),
            longitude=round(rng.uniform(-180, 180), 6),
        )
    return GeoTag(
        source=GeoSource.MANUAL_DESCRIPTION,
        description=random_text(rng, alphabet),
    )


def random_cell(rng: random.Random, value_type: ValueType, alphabet: str):
    if value_type is ValueType.TEXT:
        return random_text(rng, alphabet, lo=0, hi=60)
    if value_type is ValueType.NUMBER:
        return rng.choice(
            [
                float(rng.randint(-1000, 1000)),
                rng.uniform(-1e6, 1e6),
                rng.uniform(-1, 1) * 10 ** rng.randint(-300, 300),
                0.0,
                -0.0,
            ]
        )
    if value_type is ValueType.BOOLEAN:
        return rng.random() < 0.5
    return random_timestamp(rng)


def build_document(
    rng: random.Random,
    max_entries: int = 50,
    max_annotations: int = 50,
    alphabet: str = NASTY_CHARS,
    with_receipts: bool = True,
) -> TableDocument:
    n_initial = rng.randint(0, 4)
    n_added = rng.randint(0, 3)
    added_ats = [1] * n_initial + list(range(2, 2 + n_added))
    columns = []
    names = set()
    for added_at in added_ats:
        name = random_text(rng, alphabet, lo=1, hi=12)
        while name in names:
            name += rng.choice(string.ascii_lowercase)
        names.add(name)
        columns.append(ColumnSpec(name, rng.choice(list(ValueType)), added_at))
    schema = TableSchema(
        table_id=f"tbl-{rng.randint(0, 10**9):09d}",
        title=random_text(rng, alphabet),
        columns=tuple(columns),
        schema_version=1 + n_added,
        created_by=random_text(rng, alphabet, hi=12),
        created_at=random_timestamp(rng),
    )
    document = TableDocument(schema)

    for row in range(1, rng.randint(0, max_entries) + 1):
        present = [c for c in columns if rng.random() < 0.7]
        document.append_entry(
            Entry(
                entry_id=f"ent-{rng.randint(0, 10**9):09d}",
                row_index=row,
                values={c.name: random_cell(rng, c.value_type, alphabet) for c in present},
                author=random_text(rng, alphabet, hi=10),
                captured_at=random_timestamp(rng),
                geotag=random_geotag(rng, alphabet),
            )
        )

    levels = [ScopeLevel.TABLE]
    if document.entries:
        levels.append(ScopeLevel.ROW)
    if columns:
        levels.append(ScopeLevel.COLUMN)
    if document.entries and columns:
        levels.append(ScopeLevel.CELL)
    for seq in range(1, rng.randint(0, max_annotations) + 1):
        level = rng.choice(levels)
        row = (
            rng.choice(document.entries).row_index
            if level in (ScopeLevel.ROW, ScopeLevel.CELL)
            else None
        )
        col = (
            rng.choice(columns).name
            if level in (ScopeLevel.COLUMN, ScopeLevel.CELL)
            else None
        )
        extra = set()
        if rng.random() < 0.3:
            extra.add("public_microblog")
        if rng.random() < 0.2:
            extra.add("raw_repo")
        if rng.random() < 0.2:
            extra.add("context_repo")
        captured = random_timestamp(rng)
        document.append_annotation(
            Annotation(
                annotation_id=f"ann-{rng.randint(0, 10**9):09d}",
                author=random_text(rng, alphabet, hi=10),
                captured_at=captured,
                effective_at=rng.choice([captured, random_timestamp(rng)]),
                text=random_text(rng, alphabet, lo=1, hi=200),
                scope=Scope(level=level, table_id=schema.table_id, row_index=row, column_name=col),
                sequence=seq,
                kind=rng.choice(list(AnnotationKind)),
                visibility=(
                    Visibility.PUBLIC if "public_microblog" in extra else Visibility.PRIVATE
                ),
                extra_sinks=frozenset(extra),
                geotag=random_geotag(rng, alphabet),
            )
        )

    if with_receipts:
        payload_ids = [e.entry_id for e in document.entries] + [
            a.annotation_id for a in document.annotations
        ]
        for payload_id in payload_ids:
            if rng.random() < 0.3:
                for sink in rng.sample(
                    ["private_db", "public_microblog", "raw_repo"], rng.randint(1, 2)
                ):
                    document.add_receipt(
                        payload_id,
                        Receipt(sink, f"r-{rng.randint(0, 10**6)}", random_timestamp(rng)),
                    )
    return document
