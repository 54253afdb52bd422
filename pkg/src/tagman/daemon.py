"""The long-running tagman process.

It serves local requests on a loopback endpoint using the same frame
codec as peer sync, re-mines the shell history on a timer, and hosts the
sync service.  Every mutation is written through to disk, so a CLI in
direct mode reading the same files sees what the daemon sees.

Local requests and their replies::

    Lookup <limit> <dict> + tag records      -> Results + (command, score, tags)
    AddTag <command> <0|1> + tag records     -> Ack <added>
    Examples <command> <k> <0|1>             -> Lines + (origin, quoted line)
    Sync <peer-id> + filter tag records      -> Report <pushed> <pulled>
    Import <path>                            -> Ack <mappings>
    Share <quoted line>                      -> Ack <added>
    Index + directory records                -> Ack <mappings> + diagnostics
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping
from urllib.parse import quote, unquote

from . import sync
from .errors import (
    AuthError,
    CommandMapError,
    ConnectError,
    EmptyQuery,
    FrameTooLarge,
    ProtocolError,
    TagmanError,
)
from .protocol import Message, decode_payload, encode_frame, error
from .repository import Paths, Repository, default_node_id, load_dictionary
from .store import format_result
from .transport import FrameServer, TcpConnection, connect_tcp

log = logging.getLogger(__name__)

DEFAULT_LOCAL_ADDRESS = "127.0.0.1:7316"


@dataclass(frozen=True)
class DaemonConfig:
    store_path: Path
    user_store_path: Path
    history_path: Path
    peers_path: Path
    listen_address: str = f"127.0.0.1:{sync.DEFAULT_PORT}"
    local_address: str = DEFAULT_LOCAL_ADDRESS
    miner_interval_seconds: int = 60
    node_id: str = ""

    def __post_init__(self):
        if self.miner_interval_seconds < 1:
            raise ValueError("miner_interval_seconds must be at least 1")

    @property
    def paths(self) -> Paths:
        return Paths(self.store_path, self.user_store_path, self.history_path, self.peers_path)

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> "DaemonConfig":
        """Defaults from the environment, overridden by ``<store-dir>/daemon.conf``."""
        environ = os.environ if environ is None else environ
        paths = Paths.from_env(environ)
        config = cls(paths.store, paths.user_store, paths.history, paths.peers,
                     node_id=default_node_id(environ))
        conf = paths.store_dir / "daemon.conf"
        if conf.exists():
            config = config.updated(parse_config(conf.read_text(encoding="utf-8")))
        return config

    def updated(self, values: Mapping[str, str]) -> "DaemonConfig":
        known = {f.name: f.type for f in fields(self)}
        changes = {}
        for key, value in values.items():
            if key not in known:
                raise ValueError(f"unknown daemon setting {key!r}")
            if key.endswith("_path"):
                changes[key] = Path(value)
            elif key == "miner_interval_seconds":
                changes[key] = int(value)
            else:
                changes[key] = value
        return replace(self, **changes)


def parse_config(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"daemon.conf line {lineno}: expected key = value")
        values[key.strip()] = value.strip()
    return values


def dump_config(config: DaemonConfig) -> str:
    return "".join(f"{f.name} = {getattr(config, f.name)}\n" for f in fields(config))


def _lookup_lines(repo: Repository, tags, dict_spec: str, limit: int) -> list[str]:
    results = repo.lookup(tags, load_dictionary(dict_spec))
    if limit > 0:
        results = results[:limit]
    return [format_result(r) for r in results]


def handle_request(repo: Repository, msg: Message,
                   connect: Callable[[str], object] = connect_tcp) -> Message:
    """Answer one local request; never raises."""
    try:
        return _dispatch(repo, msg, connect)
    except EmptyQuery as exc:
        return error("empty-query", str(exc))
    except (AuthError, ConnectError) as exc:
        return error("sync-failed", str(exc))
    except (TagmanError, OSError, ValueError) as exc:
        log.warning("request %s failed: %s", msg.kind, exc)
        return error("failed", str(exc))


def _dispatch(repo: Repository, msg: Message, connect) -> Message:
    kind = msg.kind
    if kind == "Lookup":
        limit, dict_spec = msg.fields
        lines = _lookup_lines(repo, [r[0] for r in msg.records], dict_spec, int(limit))
        return Message("Results", (), [line.split("\t") for line in lines])
    if kind == "AddTag":
        command, publish = msg.fields
        added = repo.add_user_tags(command, [r[0] for r in msg.records], publish == "1")
        return Message("Ack", (str(added),))
    if kind == "Examples":
        command, k, peers = msg.fields
        repo.mine()
        records = [("mined", quote(line, safe="")) for line in repo.examples(command, int(k))]
        if peers == "1":
            found = sync.suggest_from_peers(repo, repo.peers.values(), command, connect)
            records += [("peer", quote(line, safe="")) for line in found.lines]
            records += [("failed", quote(f"{node}: {why}", safe=""))
                        for node, why in sorted(found.failures.items())]
        if not records and not repo.knows(command):
            return error("unknown-command", command)
        return Message("Lines", (), records)
    if kind == "Sync":
        (peer_id,) = msg.fields
        peer = repo.peers.get(peer_id)
        if peer is None:
            return error("unknown-peer", peer_id)
        report = sync.synchronize(repo, peer, [r[0] for r in msg.records], connect)
        return Message("Report", (str(report.pushed), str(report.pulled)))
    if kind == "Import":
        try:
            count = repo.import_map(msg.fields[0])
        except CommandMapError as exc:
            return error("import-failed", str(exc))
        return Message("Ack", (str(count),))
    if kind == "Share":
        return Message("Ack", (str(int(repo.share_example(unquote(msg.fields[0])))),))
    if kind == "Index":
        count, problems = repo.index_pages(r[0] for r in msg.records)
        return Message("Ack", (str(count),), [(p.replace("\t", " "),) for p in problems])
    return error("unknown-request", kind)


class LocalSession:
    def __init__(self, repo: Repository, connect=connect_tcp):
        self.repo = repo
        self.connect = connect

    def handle_payload(self, payload: bytes) -> tuple[Message, bool]:
        try:
            msg = decode_payload(payload)
        except ProtocolError as exc:
            if exc.code == "unknown-kind":
                return error("unknown-request", str(exc)), False
            return error(exc.code, str(exc)), False
        reply = handle_request(self.repo, msg, self.connect)
        try:
            encode_frame(reply)
        except FrameTooLarge:
            reply = error("too-large", "reply does not fit in one frame; lower the limit")
        return reply, False


class Daemon:
    """Running daemon; use :func:`run` to start one."""

    def __init__(self, config: DaemonConfig, connect: Callable[[str], object] = connect_tcp):
        self.config = config
        self.connect = connect
        self.repo = Repository.open(config.paths, node_id=config.node_id or None)
        self.local: FrameServer | None = None
        self.sync_server: FrameServer | None = None
        self._stop = threading.Event()
        self._miner: threading.Thread | None = None

    def start(self) -> "Daemon":
        self.local = FrameServer(self.config.local_address,
                                 lambda: LocalSession(self.repo, self.connect)).start()
        try:
            self.sync_server = sync.serve(self.repo, self.config.listen_address)
        except TagmanError:
            self.local.close()
            raise
        self._miner = threading.Thread(target=self._mine_loop, name="tagman-miner", daemon=True)
        self._miner.start()
        log.info("daemon %s up: local %s, sync %s", self.repo.node_id,
                 self.local.address, self.sync_server.address)
        return self

    def _mine_loop(self):
        while not self._stop.wait(self.config.miner_interval_seconds):
            try:
                added = self.repo.mine()
                if added:
                    log.info("mined %d new usage events", added)
            except Exception:
                log.exception("miner pass failed")

    def stop(self) -> None:
        self._stop.set()
        if self._miner is not None:
            self._miner.join()
        for server in (self.local, self.sync_server):
            if server is not None:
                server.close()
        self.repo.save()

    def request_stop(self) -> None:
        self._stop.set()

    def wait(self) -> None:
        self._stop.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def run(config: DaemonConfig, connect: Callable[[str], object] = connect_tcp) -> Daemon:
    return Daemon(config, connect).start()


class DaemonClient:
    """Client for a daemon's local endpoint."""

    def __init__(self, address: str = DEFAULT_LOCAL_ADDRESS, timeout: float = 30.0):
        self.conn = TcpConnection(address, timeout)

    def close(self):
        self.conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, msg: Message) -> Message:
        return self.conn.request(msg)

    def lookup(self, tags: Iterable[str], dict_spec: str = "", limit: int = 0) -> Message:
        return self.request(Message("Lookup", (str(limit), dict_spec), [(t,) for t in tags]))

    def add_tags(self, command: str, tags: Iterable[str], publish: bool = False) -> Message:
        return self.request(Message("AddTag", (command, "1" if publish else "0"),
                                    [(t,) for t in tags]))

    def examples(self, command: str, k: int, peers: bool = False) -> Message:
        return self.request(Message("Examples", (command, str(k), "1" if peers else "0")))

    def sync(self, peer_id: str, tags: Iterable[str] = ()) -> Message:
        return self.request(Message("Sync", (peer_id,), [(t,) for t in tags]))

    def import_map(self, path: str) -> Message:
        return self.request(Message("Import", (path,)))

    def share(self, command_line: str) -> Message:
        return self.request(Message("Share", (quote(command_line, safe=""),)))

    def index(self, dirs: Iterable[str]) -> Message:
        return self.request(Message("Index", (), [(d,) for d in dirs]))


def decode_lines(msg: Message) -> list[tuple[str, str]]:
    return [(origin, unquote(line)) for origin, line in msg.records]
