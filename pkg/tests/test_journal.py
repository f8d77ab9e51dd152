import random
import struct

import pytest

from fieldbook.journal import (
    OP_ADD_ENTRY,
    OP_ANNOTATE,
    OP_QUEUE_STATE,
    Journal,
    encode_payload,
    frame,
    scan,
)


def fresh(tmp_path, fsync=False):
    journal, result = Journal.open(tmp_path / "journal.log", fsync=fsync)
    return journal, result


def test_scan_of_missing_file_is_empty(tmp_path):
    result = scan(tmp_path / "journal.log")
    assert result.records == []
    assert result.damage is None


def test_append_then_scan_round_trips(tmp_path):
    journal, _ = fresh(tmp_path)
    for i in range(50):
        seq = journal.append(OP_ADD_ENTRY, {"n": i, "text": "héllo\n\t"})
        assert seq == i + 1
    journal.close()
    result = scan(journal.path)
    assert len(result.records) == 50
    assert result.damage is None
    assert [r.record_seq for r in result.records] == list(range(1, 51))
    assert result.records[7].data == {"n": 7, "text": "héllo\n\t"}
    assert result.records[7].op_kind == OP_ADD_ENTRY


def test_sequences_have_no_gaps(tmp_path):
    journal, _ = fresh(tmp_path)
    journal.append(OP_ANNOTATE, {})
    journal.append(OP_ANNOTATE, {})
    journal.close()
    # splice in a record with a skipped sequence number
    with open(journal.path, "ab") as fh:
        fh.write(frame(encode_payload(9, OP_ANNOTATE, {})))
        fh.write(frame(encode_payload(10, OP_ANNOTATE, {})))
    result = scan(journal.path)
    assert len(result.records) == 2
    assert result.damage is not None
    assert result.damage.kind == "corruption"


@pytest.mark.parametrize("cut", [1, 2, 3, 4, 5, 7, 11])
def test_torn_final_record_discarded_silently(tmp_path, cut):
    journal, _ = fresh(tmp_path)
    for i in range(10):
        journal.append(OP_ADD_ENTRY, {"n": i})
    journal.close()
    blob = journal.path.read_bytes()
    journal.path.write_bytes(blob[:-cut])
    result = scan(journal.path)
    assert len(result.records) == 9
    assert result.damage is not None
    assert result.damage.kind == "torn_tail"


def test_torn_tail_at_random_offsets_keeps_prefix_semantics(tmp_path):
    journal, _ = fresh(tmp_path)
    offsets = [0]
    for i in range(20):
        journal.append(OP_ADD_ENTRY, {"n": i})
        offsets.append(journal.path.stat().st_size)
    journal.close()
    blob = journal.path.read_bytes()
    rng = random.Random(3)
    for _ in range(50):
        cut = rng.randint(0, len(blob))
        journal.path.write_bytes(blob[:cut])
        result = scan(journal.path)
        # every record whose full frame fits in the prefix survives
        complete = max(i for i, off in enumerate(offsets) if off <= cut)
        assert len(result.records) == complete
        assert [r.data["n"] for r in result.records] == list(range(complete))


def test_mid_journal_corruption_reports_truncation_point(tmp_path):
    journal, _ = fresh(tmp_path)
    sizes = []
    for i in range(10):
        journal.append(OP_ADD_ENTRY, {"n": i})
        sizes.append(journal.path.stat().st_size)
    journal.close()
    blob = bytearray(journal.path.read_bytes())
    # flip one payload byte inside record 5 (after record 4's end)
    target = sizes[3] + 6
    blob[target] ^= 0xFF
    journal.path.write_bytes(bytes(blob))
    result = scan(journal.path)
    assert len(result.records) == 4
    assert result.damage is not None
    assert result.damage.kind == "corruption"
    assert result.damage.byte_offset == sizes[3]
    assert result.damage.next_seq == 5


def test_open_truncates_bad_tail_and_appends_cleanly(tmp_path):
    journal, _ = fresh(tmp_path)
    for i in range(5):
        journal.append(OP_ADD_ENTRY, {"n": i})
    journal.close()
    with open(journal.path, "ab") as fh:
        fh.write(b"\x99\x00\x00\x00garbage")
    journal2, result = fresh(tmp_path)
    assert len(result.records) == 5
    journal2.append(OP_ADD_ENTRY, {"n": 5})
    journal2.close()
    final = scan(journal2.path)
    assert final.damage is None
    assert [r.data["n"] for r in final.records] == [0, 1, 2, 3, 4, 5]
    assert [r.record_seq for r in final.records] == [1, 2, 3, 4, 5, 6]


def test_rewrite_compacts_and_restarts_sequences(tmp_path):
    journal, _ = fresh(tmp_path)
    for i in range(30):
        journal.append(OP_ADD_ENTRY, {"n": i})
    journal.rewrite([(OP_QUEUE_STATE, {"item": k}) for k in range(3)])
    journal.append(OP_ANNOTATE, {"after": True})
    journal.close()
    result = scan(journal.path)
    assert result.damage is None
    assert [r.record_seq for r in result.records] == [1, 2, 3, 4]
    assert [r.op_kind for r in result.records] == [
        OP_QUEUE_STATE, OP_QUEUE_STATE, OP_QUEUE_STATE, OP_ANNOTATE,
    ]


def test_record_format_is_length_payload_crc32_little_endian(tmp_path):
    import zlib

    journal, _ = fresh(tmp_path)
    journal.append(OP_ADD_ENTRY, {"k": 1})
    journal.close()
    blob = journal.path.read_bytes()
    (length,) = struct.unpack_from("<I", blob, 0)
    payload = blob[4 : 4 + length]
    (crc,) = struct.unpack_from("<I", blob, 4 + length)
    assert crc == zlib.crc32(payload)
    assert len(blob) == 4 + length + 4
    assert b'"op":"add_entry"' in payload


def test_unicode_and_surrogates_survive_payload_encoding(tmp_path):
    journal, _ = fresh(tmp_path)
    nasty = {"text": "a\ud800b\x00c\U0001f600"}
    journal.append(OP_ANNOTATE, nasty)
    journal.close()
    result = scan(journal.path)
    assert result.records[0].data == nasty
