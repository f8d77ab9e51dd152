"""Write-ahead journal: length-prefixed records with per-record CRC.

On-disk format, little-endian:

    [payload length: u32] [payload bytes] [CRC32 of payload: u32]

The payload is canonical JSON ``{"seq": n, "op": kind, "data": {...}}``
with sorted keys. Sequence numbers strictly increase with no gaps within
one journal file; compaction rewrites the file and restarts at 1.

A record counts as committed only if its CRC validates. Scanning stops
at the first bad record: a torn tail (the file simply ends mid-record,
or the final record's CRC fails) is discarded silently, while a bad
record with more data after it is corruption and gets reported with its
byte offset so the operator knows the journal was cut short.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

from .errors import StorageError

_LEN = struct.Struct("<I")

OP_CREATE_TABLE = "create_table"
OP_ADD_COLUMN = "add_column"
OP_ADD_ENTRY = "add_entry"
OP_ANNOTATE = "annotate"
OP_QUEUE_STATE = "queue_state_change"

OP_KINDS = (OP_CREATE_TABLE, OP_ADD_COLUMN, OP_ADD_ENTRY, OP_ANNOTATE, OP_QUEUE_STATE)


@dataclass(frozen=True)
class JournalRecord:
    record_seq: int
    op_kind: str
    data: dict


@dataclass(frozen=True)
class JournalDamage:
    """Where and why a scan stopped before the end of the file."""

    kind: str            # "torn_tail" or "corruption"
    byte_offset: int     # start of the first bad record
    next_seq: int        # sequence number the bad record should have carried

    def __str__(self) -> str:
        return (
            f"journal {self.kind} at byte {self.byte_offset} "
            f"(record {self.next_seq}); earlier records kept"
        )


@dataclass
class JournalScan:
    records: list[JournalRecord]
    valid_bytes: int
    damage: JournalDamage | None


def encode_payload(seq: int, op_kind: str, data: dict) -> bytes:
    doc = {"seq": seq, "op": op_kind, "data": data}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def frame(payload: bytes) -> bytes:
    return _LEN.pack(len(payload)) + payload + _LEN.pack(zlib.crc32(payload))


def scan(path: Path) -> JournalScan:
    """Read every committed record; stop at the first bad one."""
    if not path.exists():
        return JournalScan([], 0, None)
    blob = path.read_bytes()
    records: list[JournalRecord] = []
    pos = 0
    next_seq = 1
    size = len(blob)
    while pos < size:
        start = pos
        bad = None
        if size - pos < _LEN.size:
            bad = "short length prefix"
            extent = size
        else:
            (length,) = _LEN.unpack_from(blob, pos)
            extent = pos + _LEN.size + length + _LEN.size
            if extent > size:
                bad = "short record body"
                extent = size
            else:
                payload = blob[pos + _LEN.size : pos + _LEN.size + length]
                (crc,) = _LEN.unpack_from(blob, pos + _LEN.size + length)
                if crc != zlib.crc32(payload):
                    bad = "checksum mismatch"
                else:
                    try:
                        doc = json.loads(payload.decode("utf-8"))
                        seq, op, data = doc["seq"], doc["op"], doc["data"]
                    except (ValueError, KeyError, UnicodeDecodeError):
                        bad = "unparsable payload"
                    else:
                        if records and seq != next_seq:
                            bad = f"sequence gap (got {seq}, expected {next_seq})"
                        elif op not in OP_KINDS:
                            bad = f"unknown op kind {op!r}"
        if bad is None:
            records.append(JournalRecord(seq, op, data))
            next_seq = seq + 1
            pos = extent
            continue
        # Bad record: silent if it is the last thing in the file, reported
        # corruption if committed-looking data follows it.
        kind = "torn_tail" if extent >= size else "corruption"
        return JournalScan(records, start, JournalDamage(kind, start, next_seq))
    return JournalScan(records, pos, None)


class Journal:
    """Single appender over one journal file.

    ``append`` frames, writes and (by default) fsyncs before returning;
    callers must not acknowledge a mutation until append has returned.
    """

    def __init__(self, path: Path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self._fh = None
        self._next_seq = 1

    @classmethod
    def open(cls, path: Path, fsync: bool = True) -> tuple[Journal, JournalScan]:
        """Scan an existing journal, trim any bad tail, position for append."""
        journal = cls(path, fsync=fsync)
        result = scan(journal.path)
        if journal.path.exists() and journal.path.stat().st_size > result.valid_bytes:
            with open(journal.path, "r+b") as fh:
                fh.truncate(result.valid_bytes)
        journal._next_seq = result.records[-1].record_seq + 1 if result.records else 1
        return journal, result

    def _handle(self):
        if self._fh is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "ab")
        return self._fh

    def append(self, op_kind: str, data: dict) -> int:
        """Commit one record; returns its sequence number."""
        if op_kind not in OP_KINDS:
            raise ValueError(f"unknown op kind {op_kind!r}")
        seq = self._next_seq
        try:
            fh = self._handle()
            fh.write(frame(encode_payload(seq, op_kind, data)))
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"journal append failed at {self.path}: {exc}") from exc
        self._next_seq = seq + 1
        return seq

    def rewrite(self, ops: list[tuple[str, dict]]) -> None:
        """Atomically replace the journal contents (snapshot compaction)."""
        self.close()
        tmp = self.path.with_suffix(".tmp")
        try:
            with open(tmp, "wb") as fh:
                for i, (op_kind, data) in enumerate(ops, start=1):
                    fh.write(frame(encode_payload(i, op_kind, data)))
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
            _fsync_dir(self.path.parent)
        except OSError as exc:
            raise StorageError(f"journal rewrite failed at {self.path}: {exc}") from exc
        self._next_seq = len(ops) + 1

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _fsync_dir(path: Path) -> None:
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    finally:
        os.close(fd)
