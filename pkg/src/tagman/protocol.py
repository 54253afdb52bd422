"""Length-prefixed frame codec shared by the sync service and the daemon.

Frame::

    NNNN<payload>

``NNNN`` is the payload length in bytes as four ASCII digits, so a payload
is at most 9999 bytes.  The payload is UTF-8; its first line is the
message kind followed by tab-separated header fields, and each further
line is one tab-separated record.  Large record sets are split across
several request/response pairs by the callers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence

from .errors import FrameTooLarge, ProtocolError
from .store import Source, TagMapping

PREFIX_SIZE = 4
MAX_PAYLOAD = 9999

# kind -> (min header fields, max header fields, record width or None for no records)
SCHEMA = {
    # peer sync
    "Hello": (2, 2, None),
    "HelloAck": (1, 1, None),
    "Pull": (4, 4, None),
    "Push": (0, 0, 4),
    "Records": (1, 1, 4),
    "Ack": (1, 1, 1),
    "Error": (1, 2, None),
    # local daemon requests
    "Lookup": (2, 2, 1),
    "Results": (0, 0, 3),
    "AddTag": (2, 2, 1),
    "Examples": (3, 3, None),
    "Lines": (0, 0, 2),
    "Sync": (1, 1, 1),
    "Report": (2, 2, 1),
    "Import": (1, 1, None),
    "Share": (1, 1, None),
    "Index": (0, 0, 1),
}

SYNC_KINDS = frozenset({"Hello", "HelloAck", "Pull", "Push", "Records", "Ack", "Error"})


@dataclass(frozen=True)
class Message:
    kind: str
    fields: tuple[str, ...] = ()
    records: tuple[tuple[str, ...], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "records", tuple(tuple(r) for r in self.records))
        check(self)


def check(msg: Message) -> None:
    try:
        low, high, width = SCHEMA[msg.kind]
    except KeyError:
        raise ProtocolError(f"unknown message kind {msg.kind!r}", code="unknown-kind") from None
    if not low <= len(msg.fields) <= high:
        raise ProtocolError(f"{msg.kind} takes {low}-{high} fields, got {len(msg.fields)}")
    if width is None and msg.records:
        raise ProtocolError(f"{msg.kind} carries no records")
    for rec in msg.records:
        if len(rec) != width:
            raise ProtocolError(f"{msg.kind} records have {width} fields, got {len(rec)}")
    for value in (*msg.fields, *(v for rec in msg.records for v in rec)):
        if "\t" in value or "\n" in value:
            raise ProtocolError(f"field {value!r} contains a tab or newline")


def encode_payload(msg: Message) -> bytes:
    lines = ["\t".join((msg.kind, *msg.fields))]
    lines.extend("\t".join(rec) for rec in msg.records)
    return "\n".join(lines).encode("utf-8")


def decode_payload(payload: bytes) -> Message:
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError:
        raise ProtocolError("payload is not UTF-8") from None
    head, *rest = text.split("\n")
    kind, *fields = head.split("\t")
    return Message(kind, tuple(fields), tuple(tuple(line.split("\t")) for line in rest))


def encode_frame(msg: Message) -> bytes:
    payload = encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise FrameTooLarge(f"{msg.kind} payload is {len(payload)} bytes")
    return b"%04d" % len(payload) + payload


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            break
        buf += chunk
    return buf


def read_payload(stream: BinaryIO) -> bytes | None:
    """Next raw payload from ``stream``; None at a clean end of stream."""
    prefix = _read_exact(stream, PREFIX_SIZE)
    if not prefix:
        return None
    if len(prefix) < PREFIX_SIZE or not all(48 <= b <= 57 for b in prefix):
        raise ProtocolError(f"bad length prefix {prefix!r}", code="bad-frame")
    size = int(prefix)
    payload = _read_exact(stream, size)
    if len(payload) < size:
        raise ProtocolError("stream ended inside a frame", code="bad-frame")
    return payload


def read_message(stream: BinaryIO) -> Message | None:
    payload = read_payload(stream)
    return None if payload is None else decode_payload(payload)


def write_message(stream: BinaryIO, msg: Message) -> None:
    stream.write(encode_frame(msg))
    stream.flush()


def error(code: str, detail: str = "") -> Message:
    detail = detail.replace("\t", " ").replace("\n", " ")[:500]
    return Message("Error", (code, detail) if detail else (code,))


def mapping_record(m: TagMapping) -> tuple[str, str, str, str]:
    return (m.tag, m.command, str(m.source), str(m.created_at))


def record_mapping(rec: Sequence[str], source: Source | None = None) -> TagMapping:
    """Inverse of mapping_record; ``source`` re-stamps the provenance."""
    tag, command, src, created_at = rec
    try:
        return TagMapping(tag, command, source or Source.parse(src), int(created_at))
    except ValueError as exc:
        raise ProtocolError(f"bad record {rec!r}: {exc}") from None


def chunk_records(kind: str, fields: Sequence[str], records: Iterable[Sequence[str]]):
    """Pack records into as few messages of ``kind`` as fit one frame each.

    Yields ``(message, records_in_it)``.  An empty input yields one empty
    message.
    """
    base = len(encode_payload(Message(kind, tuple(fields))))
    batch: list[tuple[str, ...]] = []
    size = base
    for rec in records:
        rec = tuple(rec)
        rec_size = len("\t".join(rec).encode("utf-8")) + 1
        if base + rec_size > MAX_PAYLOAD:
            raise FrameTooLarge(f"record {rec!r} cannot fit in a frame")
        if size + rec_size > MAX_PAYLOAD:
            yield Message(kind, tuple(fields), batch), batch
            batch, size = [], base
        batch.append(rec)
        size += rec_size
    yield Message(kind, tuple(fields), batch), batch
