"""Opportunistic harvesting of public microblog posts.

Filters a post corpus by hashtags and keywords and lands the matches as
entries in a collection table. Matching is case-insensitive and
unicode-aware: a hashtag matches as a whole token (a maximal run of word
characters preceded by ``#``) and a keyword as a whole word, so a search
for "spring" does not light up on "Springfield".

Corpus file format (documented bit-exactly in docs/formats.md): UTF-8,
one post per line, six tab-separated fields:

    post_id <TAB> author <TAB> posted_at <TAB> latitude <TAB> longitude <TAB> text

posted_at is ISO-8601; latitude/longitude are empty when the post has no
geotag; the text field is last and must itself contain no tab or newline.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .clock import as_utc
from .errors import ValidationError
from .model import GeoSource, GeoTag
from .store import FieldStore
from .wire import ts

HARVEST_COLUMNS = (
    ("post_id", "text"),
    ("author", "text"),
    ("posted_at", "timestamp"),
    ("text", "text"),
    ("matched_terms", "text"),
)

_HASHTAG_TOKEN = re.compile(r"#(\w+)", re.UNICODE)
_WORD_TOKEN = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class PublicPost:
    post_id: str
    author: str
    text: str
    posted_at: datetime
    latitude: float | None = None
    longitude: float | None = None

    def __post_init__(self):
        if (self.latitude is None) != (self.longitude is None):
            raise ValidationError("geotag needs both coordinates", field="geotag")
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"latitude {self.latitude} outside [-90, 90]")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"longitude {self.longitude} outside [-180, 180]")

    @property
    def geotagged(self) -> bool:
        return self.latitude is not None


@dataclass(frozen=True)
class HarvestSpec:
    hashtags: frozenset[str] = frozenset()
    keywords: frozenset[str] = frozenset()
    require_geotag: bool = False

    def __post_init__(self):
        if not self.hashtags and not self.keywords:
            raise ValidationError("harvest spec needs at least one hashtag or keyword")
        for tag in self.hashtags:
            if not tag.startswith("#") or not tag[1:] or not _is_word(tag[1:]):
                raise ValidationError(f"bad hashtag {tag!r}: expected #word", field="hashtags")
        for word in self.keywords:
            if not word or not _is_word(word):
                raise ValidationError(f"bad keyword {word!r}: expected a single word", field="keywords")


def _is_word(token: str) -> bool:
    return _WORD_TOKEN.fullmatch(token) is not None


@dataclass(frozen=True)
class Observation:
    post_id: str
    author: str
    posted_at: datetime
    text: str
    matched_terms: tuple[str, ...]
    latitude: float | None = None
    longitude: float | None = None


def match_terms(text: str, spec: HarvestSpec) -> tuple[str, ...]:
    """Which of the spec's terms occur in the text, sorted for determinism."""
    hashtag_tokens = {m.group(1).casefold() for m in _HASHTAG_TOKEN.finditer(text)}
    word_tokens = {m.group(0).casefold() for m in _WORD_TOKEN.finditer(text)}
    matched = [t for t in spec.hashtags if t[1:].casefold() in hashtag_tokens]
    matched += [k for k in spec.keywords if k.casefold() in word_tokens]
    return tuple(sorted(matched))


def harvest(posts: list[PublicPost], spec: HarvestSpec) -> list[Observation]:
    """Filter a corpus; output preserves input order."""
    observations = []
    for post in posts:
        terms = match_terms(post.text, spec)
        if not terms:
            continue
        if spec.require_geotag and not post.geotagged:
            continue
        observations.append(
            Observation(
                post_id=post.post_id,
                author=post.author,
                posted_at=post.posted_at,
                text=post.text,
                matched_terms=terms,
                latitude=post.latitude,
                longitude=post.longitude,
            )
        )
    return observations


def parse_corpus_line(line: str, lineno: int) -> PublicPost:
    parts = line.split("\t")
    if len(parts) != 6:
        raise ValidationError(
            f"corpus line {lineno}: expected 6 tab-separated fields, got {len(parts)}"
        )
    post_id, author, posted_at, lat, lon, text = parts
    try:
        when = as_utc(datetime.fromisoformat(posted_at))
    except ValueError:
        raise ValidationError(f"corpus line {lineno}: bad timestamp {posted_at!r}") from None
    try:
        latitude = float(lat) if lat else None
        longitude = float(lon) if lon else None
    except ValueError:
        raise ValidationError(f"corpus line {lineno}: bad coordinates {lat!r},{lon!r}") from None
    return PublicPost(post_id, author, text, when, latitude, longitude)


def read_corpus(path: Path) -> list[PublicPost]:
    posts = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        posts.append(parse_corpus_line(line, lineno))
    return posts


def write_corpus(path: Path, posts: list[PublicPost]) -> None:
    """Inverse of read_corpus, mainly for fixtures and simulators."""
    lines = []
    for p in posts:
        if "\t" in p.text or "\n" in p.text or "\r" in p.text:
            raise ValidationError(f"post {p.post_id}: corpus text may not contain tabs/newlines")
        lat = repr(p.latitude) if p.latitude is not None else ""
        lon = repr(p.longitude) if p.longitude is not None else ""
        lines.append(f"{p.post_id}\t{p.author}\t{ts(p.posted_at)}\t{lat}\t{lon}\t{p.text}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def ensure_harvest_table(store: FieldStore, title: str, author: str) -> str:
    """Create a table with the harvest columns; returns its id."""
    schema = store.create_table(title, list(HARVEST_COLUMNS), author)
    return schema.table_id


@dataclass(frozen=True)
class HarvestReport:
    added: int
    skipped_duplicates: int
    entry_ids: tuple[str, ...]


def harvest_to_table(
    store: FieldStore, observations: list[Observation], table_id: str
) -> HarvestReport:
    """Append observations as entries; duplicates (by post_id) are skipped."""
    document = store.document(table_id)
    missing = [
        name for name, _ in HARVEST_COLUMNS if document.schema.column(name) is None
    ]
    if missing:
        raise ValidationError(
            f"table {table_id!r} is missing harvest columns: {', '.join(missing)}"
        )
    seen = {e.values.get("post_id") for e in document.entries}
    added: list[str] = []
    skipped = 0
    for obs in observations:
        if obs.post_id in seen:
            skipped += 1
            continue
        seen.add(obs.post_id)
        geotag = None
        if obs.latitude is not None:
            geotag = GeoTag(
                source=GeoSource.DEVICE, latitude=obs.latitude, longitude=obs.longitude
            )
        entry = store.add_entry(
            table_id,
            {
                "post_id": obs.post_id,
                "author": obs.author,
                "posted_at": obs.posted_at,
                "text": obs.text,
                "matched_terms": " ".join(obs.matched_terms),
            },
            author=obs.author,
            geotag=geotag,
        )
        added.append(entry.entry_id)
    return HarvestReport(len(added), skipped, tuple(added))
