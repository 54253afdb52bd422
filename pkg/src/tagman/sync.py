"""Exchange published tag mappings with peer nodes.

Session on the serving side::

    Hello <node-id> <token>  ->  HelloAck <node-id>   (or Error auth-failed, then close)
    Push  + records          ->  Ack <newly added>
    Pull <filter> <cursor>   ->  Records <more> + records

A node shares its own published user tags plus everything it learned from
peers, except what came from the node it is talking to.  Received records
are re-stamped ``peer:<sender>`` and merged by set union, so syncing is
idempotent and nothing is ever deleted remotely.

The node object handed to the session (normally a
:class:`tagman.repository.Repository`) needs ``node_id``,
``check_token(peer_id, token)``, ``shareable(exclude_peer, filter_tags)`` and
``merge_peer_records(mappings, peer_id)``.
"""

from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable
from urllib.parse import unquote

from .errors import AuthError, ProtocolError, TagmanError
from .overlay import example_tag
from .protocol import (
    SYNC_KINDS,
    Message,
    chunk_records,
    decode_payload,
    error,
    mapping_record,
    record_mapping,
)
from .store import Source, normalize
from .transport import FrameServer, connect_tcp

log = logging.getLogger(__name__)

DEFAULT_PORT = 7317


@dataclass(frozen=True)
class PeerConfig:
    node_id: str
    address: str
    auth_token: str


def parse_peers(text: str) -> dict[str, PeerConfig]:
    """``node_id<TAB>host:port<TAB>token`` per line; ``#`` starts a comment."""
    peers = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise ValueError(f"peers line {lineno}: expected node_id, address and token")
        if parts[0] in peers:
            raise ValueError(f"peers line {lineno}: duplicate node id {parts[0]!r}")
        peers[parts[0]] = PeerConfig(*parts)
    return peers


def load_peers(path: str | os.PathLike) -> dict[str, PeerConfig]:
    try:
        return parse_peers(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        return {}


def dump_peers(peers: Iterable[PeerConfig]) -> str:
    return "".join(f"{p.node_id}\t{p.address}\t{p.auth_token}\n" for p in peers)


def _filter_field(tags: Iterable[str]) -> str:
    return " ".join(sorted({normalize(t) for t in tags}))


class Session:
    """Server side of one sync connection."""

    def __init__(self, node):
        self.node = node
        self.peer_id: str | None = None

    def handle_payload(self, payload: bytes) -> tuple[Message, bool]:
        try:
            msg = decode_payload(payload)
        except ProtocolError as exc:
            return error(exc.code, str(exc)), False
        try:
            return self.handle(msg)
        except ProtocolError as exc:
            return error(exc.code, str(exc)), False

    def handle(self, msg: Message) -> tuple[Message, bool]:
        if msg.kind not in SYNC_KINDS or msg.kind in ("HelloAck", "Records", "Ack", "Error"):
            return error("unexpected-kind", msg.kind), False
        if msg.kind == "Hello":
            if self.peer_id is not None:
                return error("unexpected-kind", "already authenticated"), False
            peer_id, token = msg.fields
            if not self.node.check_token(peer_id, token):
                log.warning("rejected hello from %r", peer_id)
                return error("auth-failed"), True
            self.peer_id = peer_id
            return Message("HelloAck", (self.node.node_id,)), False
        if self.peer_id is None:
            return error("unauthenticated"), False
        if msg.kind == "Push":
            mappings = [record_mapping(rec) for rec in msg.records]
            added = self.node.merge_peer_records(mappings, self.peer_id)
            return Message("Ack", (str(added),)), False
        return self._pull(*msg.fields), False

    def _pull(self, filter_text, cursor_tag, cursor_command, cursor_source):
        filter_tags = set(filter_text.split())
        cursor = (cursor_tag, cursor_command, cursor_source)
        records = [
            mapping_record(m)
            for m in self.node.shareable(self.peer_id, filter_tags)
            if m.sort_key() > cursor
        ]
        msg, batch = next(chunk_records("Records", ("1",), records))
        more = "1" if len(batch) < len(records) else "0"
        return Message("Records", (more,), msg.records)


def serve(node, address: str = f"127.0.0.1:{DEFAULT_PORT}") -> FrameServer:
    """Start the sync service in a background thread."""
    return FrameServer(address, lambda: Session(node)).start()


@dataclass(frozen=True)
class SyncReport:
    pushed: int
    pulled: int


def _expect(reply: Message, kind: str) -> Message:
    if reply.kind == "Error":
        code = reply.fields[0]
        if code == "auth-failed":
            raise AuthError("peer rejected our token")
        raise ProtocolError(f"peer answered Error {' '.join(reply.fields)}", code=code)
    if reply.kind != kind:
        raise ProtocolError(f"expected {kind}, peer sent {reply.kind}", code="unexpected-kind")
    return reply


def _hello(conn, node_id: str, peer: PeerConfig) -> None:
    reply = _expect(conn.request(Message("Hello", (node_id, peer.auth_token))), "HelloAck")
    if reply.fields[0] != peer.node_id:
        raise AuthError(f"peer at {peer.address} is {reply.fields[0]!r}, not {peer.node_id!r}")


def _pull_all(conn, filter_tags: Iterable[str]) -> list[tuple[str, ...]]:
    filter_text = _filter_field(filter_tags)
    cursor = ("", "", "")
    records: list[tuple[str, ...]] = []
    while True:
        reply = _expect(conn.request(Message("Pull", (filter_text, *cursor))), "Records")
        records.extend(reply.records)
        if reply.fields[0] == "0":
            return records
        if not reply.records:
            raise ProtocolError("peer sent an empty page with more to come")
        cursor = reply.records[-1][:3]


def synchronize(
    node,
    peer: PeerConfig,
    filter_tags: Iterable[str] = (),
    connect: Callable[[str], object] = connect_tcp,
) -> SyncReport:
    """Push our shareable mappings to ``peer`` and merge what it shares.

    ``pushed`` counts mappings the peer did not have yet and ``pulled``
    the ones new to us, so an immediate second run reports zeros.
    """
    filter_tags = {normalize(t) for t in filter_tags}
    conn = connect(peer.address)
    try:
        _hello(conn, node.node_id, peer)
        outgoing = [mapping_record(m) for m in node.shareable(peer.node_id, filter_tags)]
        pushed = 0
        if outgoing:
            for msg, _ in chunk_records("Push", (), outgoing):
                pushed += int(_expect(conn.request(msg), "Ack").fields[0])
        received = [record_mapping(rec, Source.peer(peer.node_id))
                    for rec in _pull_all(conn, filter_tags)]
    finally:
        conn.close()
    pulled = node.merge_peer_records(received, peer.node_id)
    log.info("synced with %s: pushed %d pulled %d", peer.node_id, pushed, pulled)
    return SyncReport(pushed, pulled)


@dataclass
class Suggestions:
    lines: list[str] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)


def suggest_from_peers(
    node,
    peers: Iterable[PeerConfig],
    command: str,
    connect: Callable[[str], object] = connect_tcp,
) -> Suggestions:
    """Example command lines that peers published for ``command``.

    Lines are ordered by how many peers offer them.  Unreachable or
    misbehaving peers are listed in ``failures`` and otherwise ignored.
    """
    tag = example_tag(command)
    counts: Counter[str] = Counter()
    out = Suggestions()
    for peer in peers:
        try:
            conn = connect(peer.address)
            try:
                _hello(conn, node.node_id, peer)
                lines = {unquote(rec[1]) for rec in _pull_all(conn, [tag])}
            finally:
                conn.close()
        except (TagmanError, OSError) as exc:
            out.failures[peer.node_id] = str(exc)
            continue
        counts.update(lines)
    out.lines = sorted(counts, key=lambda line: (-counts[line], line))
    return out
