"""Publication sinks: descriptors, the adapter contract, mock adapters.

A sink adapter implements two operations:

    post(payload, idempotency_key, chunk_index) -> PostResult
    lookup(idempotency_key) -> bool      (only meaningful if the
                                          descriptor says supports_lookup)

Outcomes: ``ack`` (carries a sink-assigned receipt id), ``transient``
(retry later), ``permanent`` (the sink rejected the payload as invalid;
never retried) and ``ambiguous`` (the sink may or may not have received
the post; the ack vanished).

Lookup-capable sinks index posts by idempotency key and therefore drop
duplicate (key, chunk) submissions on their side; lookup-incapable ones
log every submission, which is what makes them at-least-once targets.

The in-memory mock takes a failure script and an ack-loss rate for fault
injection; the file-backed variant additionally appends each accepted
post to a newline-delimited log (tab-separated: key, chunk, payload with
backslash-escaped tabs/newlines) and reloads it on startup.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from .errors import ValidationError
from .model import CONTEXT_REPO, PRIVATE_DB, PUBLIC_MICROBLOG, RAW_REPO

ACK = "ack"
TRANSIENT = "transient"
PERMANENT = "permanent"
AMBIGUOUS = "ambiguous"

# Script tokens for the mock: "ack_loss" = accept the post but lose the
# ack; "lost" = drop the request before the sink sees it.
SCRIPT_TOKENS = (ACK, TRANSIENT, PERMANENT, "ack_loss", "lost")

DEFAULT_MICROBLOG_LIMIT = 140


@dataclass(frozen=True)
class SinkDescriptor:
    sink_id: str
    endpoint: str = ""
    max_post_length: int | None = None
    supports_lookup: bool = False


def default_registry() -> dict[str, SinkDescriptor]:
    """The four standard publication targets."""
    return {
        PRIVATE_DB: SinkDescriptor(PRIVATE_DB, supports_lookup=True),
        PUBLIC_MICROBLOG: SinkDescriptor(
            PUBLIC_MICROBLOG, max_post_length=DEFAULT_MICROBLOG_LIMIT
        ),
        RAW_REPO: SinkDescriptor(RAW_REPO, supports_lookup=True),
        CONTEXT_REPO: SinkDescriptor(CONTEXT_REPO, supports_lookup=True),
    }


def validate_registry(registry: dict[str, SinkDescriptor]) -> None:
    if PRIVATE_DB not in registry:
        raise ValidationError("sink registry must include private_db", field="sinks")
    if registry[PRIVATE_DB].max_post_length is not None:
        raise ValidationError("private_db must not have a max_post_length", field="sinks")
    for sink_id, desc in registry.items():
        if desc.sink_id != sink_id:
            raise ValidationError(f"sink registered under wrong id: {sink_id!r}")


@dataclass(frozen=True)
class PostResult:
    status: str
    receipt_id: str | None = None


@dataclass(frozen=True)
class SinkPost:
    """One line of a sink's receive log."""

    idempotency_key: str
    chunk_index: int
    payload: str


class SinkAdapter(Protocol):
    def post(self, payload: str, idempotency_key: str, chunk_index: int) -> PostResult: ...

    def lookup(self, idempotency_key: str) -> bool: ...


@dataclass
class MemorySink:
    """Scriptable in-memory sink for tests and offline operation.

    ``script`` outcomes are consumed one per post() call; once exhausted,
    posts succeed (subject to ``ack_loss_rate``). ``dedupe`` should match
    the descriptor's supports_lookup: a lookup-capable sink silently
    absorbs a duplicate (key, chunk) instead of logging it twice.
    """

    sink_id: str = "mock"
    dedupe: bool = True
    script: list[str] = field(default_factory=list)
    ack_loss_rate: float = 0.0
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    log: list[SinkPost] = field(default_factory=list)
    duplicates: list[SinkPost] = field(default_factory=list)

    def _next_scripted(self) -> str:
        if self.script:
            token = self.script.pop(0)
            if token not in SCRIPT_TOKENS:
                raise ValidationError(f"unknown sink script token {token!r}")
            return token
        if self.ack_loss_rate and self.rng.random() < self.ack_loss_rate:
            return "ack_loss"
        return ACK

    def _record(self, post: SinkPost) -> None:
        seen = any(
            p.idempotency_key == post.idempotency_key and p.chunk_index == post.chunk_index
            for p in self.log
        )
        if seen and self.dedupe:
            self.duplicates.append(post)
        else:
            self.log.append(post)

    def post(self, payload: str, idempotency_key: str, chunk_index: int) -> PostResult:
        outcome = self._next_scripted()
        if outcome == TRANSIENT:
            return PostResult(TRANSIENT)
        if outcome == PERMANENT:
            return PostResult(PERMANENT)
        if outcome == "lost":
            return PostResult(AMBIGUOUS)
        post = SinkPost(idempotency_key, chunk_index, payload)
        self._record(post)
        if outcome == "ack_loss":
            return PostResult(AMBIGUOUS)
        return PostResult(ACK, receipt_id=f"{self.sink_id}-{len(self.log)}")

    def lookup(self, idempotency_key: str) -> bool:
        return any(p.idempotency_key == idempotency_key for p in self.log)

    def keys_with_chunks(self) -> dict[tuple[str, int], int]:
        counts: dict[tuple[str, int], int] = {}
        for p in self.log:
            k = (p.idempotency_key, p.chunk_index)
            counts[k] = counts.get(k, 0) + 1
        return counts


_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _escape_line(text: str) -> str:
    out = []
    for ch in text:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif 0xD800 <= ord(ch) <= 0xDFFF:  # lone surrogates cannot hit UTF-8
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return "".join(out)


def _unescape_line(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "u" and i + 6 <= len(text):
                out.append(chr(int(text[i + 2 : i + 6], 16)))
                i += 6
                continue
            out.append(_UNESCAPES.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class FileSink(MemorySink):
    """MemorySink whose accepted posts also land in a log file.

    One record per line: ``key<TAB>chunk_index<TAB>payload``. The log is
    reloaded on startup so deduplication survives a restart.
    """

    def __init__(self, sink_id: str, path: Path, dedupe: bool = True):
        super().__init__(sink_id=sink_id, dedupe=dedupe)
        self.path = Path(path)
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line:
                    continue
                key, chunk, payload = line.split("\t", 2)
                self.log.append(SinkPost(key, int(chunk), _unescape_line(payload)))

    def _record(self, post: SinkPost) -> None:
        before = len(self.log)
        super()._record(post)
        if len(self.log) > before:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            line = f"{post.idempotency_key}\t{post.chunk_index}\t{_escape_line(post.payload)}\n"
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)


def adapters_for(
    registry: dict[str, SinkDescriptor], base_dir: Path | None = None
) -> dict[str, SinkAdapter]:
    """File-backed adapters when a directory is given, in-memory otherwise."""
    adapters: dict[str, SinkAdapter] = {}
    for sink_id, desc in registry.items():
        if base_dir is not None:
            path = Path(base_dir) / f"{sink_id}.log"
            adapters[sink_id] = FileSink(sink_id, path, dedupe=desc.supports_lookup)
        else:
            adapters[sink_id] = MemorySink(sink_id=sink_id, dedupe=desc.supports_lookup)
    return adapters


def log_authors(log: Iterable[SinkPost], key_to_author: dict[str, str]) -> list[str]:
    """Project a receive log onto authors, for order assertions in tests."""
    return [key_to_author[p.idempotency_key] for p in log if p.idempotency_key in key_to_author]
