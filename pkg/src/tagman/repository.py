"""One node's on-disk state: system store, user overlay, mined events, peers.

Both the CLI (in direct mode) and the daemon work through a
:class:`Repository`; it also acts as the node for the sync service.
"""

from __future__ import annotations

import getpass
import hmac
import logging
import os
import socket
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from . import history, manpage, overlay, store, tagmap
from .errors import ManFormatError, NoHomeDirectory
from .history import EventLog
from .store import Source, SynonymDictionary, TagIndex, TagMapping
from .sync import PeerConfig, load_peers

log = logging.getLogger(__name__)


def store_path(environ: Mapping[str, str]) -> Path:
    if environ.get("TAGMAN_STORE"):
        return Path(environ["TAGMAN_STORE"])
    home = environ.get("HOME")
    if not home:
        raise NoHomeDirectory("TAGMAN_STORE is unset and HOME is unknown")
    return Path(home) / ".tagman" / "store.tags"


@dataclass(frozen=True)
class Paths:
    store: Path
    user_store: Path
    history: Path
    peers: Path

    @property
    def store_dir(self) -> Path:
        return self.store.parent

    @property
    def events(self) -> Path:
        return self.store_dir / "events.log"

    @property
    def checkpoint(self) -> Path:
        return self.store_dir / "miner.ckpt"

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> "Paths":
        environ = os.environ if environ is None else environ
        main = store_path(environ)
        return cls(
            store=main,
            user_store=overlay.resolve_store_path(environ),
            history=history.history_path(environ),
            peers=main.parent / "peers.conf",
        )


def default_user(environ: Mapping[str, str] | None = None) -> str:
    environ = os.environ if environ is None else environ
    name = environ.get("TAGMAN_USER") or environ.get("USER")
    if not name:
        try:
            name = getpass.getuser()
        except Exception:
            name = "user"
    return "".join(name.split()) or "user"


def default_node_id(environ: Mapping[str, str] | None = None) -> str:
    environ = os.environ if environ is None else environ
    return environ.get("TAGMAN_NODE_ID") or socket.gethostname() or "node"


def load_dictionary(spec: str | None) -> SynonymDictionary | None:
    """``None``/empty -> no dictionary, ``default`` -> built-in, else a file."""
    if not spec:
        return None
    if spec == "default":
        return SynonymDictionary.default()
    return SynonymDictionary.load(spec)


class Repository:
    def __init__(
        self,
        node_id: str = "local",
        user: str = "user",
        index: TagIndex | None = None,
        user_tags: overlay.UserTagFile | None = None,
        events: EventLog | None = None,
        peers: Mapping[str, PeerConfig] | None = None,
        paths: Paths | None = None,
    ):
        self.node_id = node_id
        self.index = index if index is not None else TagIndex()
        self.user_tags = user_tags if user_tags is not None else overlay.UserTagFile(user)
        self.events = events if events is not None else EventLog()
        self.peers = dict(peers or {})
        self.paths = paths
        self.lock = threading.RLock()
        self._view: TagIndex | None = None

    @classmethod
    def open(cls, paths: Paths, node_id: str | None = None, user: str | None = None) -> "Repository":
        index = store.load(paths.store) if paths.store.exists() else TagIndex()
        user = user or default_user()
        return cls(
            node_id=node_id or default_node_id(),
            user=user,
            index=index,
            user_tags=overlay.load(paths.user_store, user),
            events=EventLog.load(paths.events, paths.checkpoint),
            peers=load_peers(paths.peers),
            paths=paths,
        )

    @property
    def user(self) -> str:
        return self.user_tags.user

    # -- persistence ----------------------------------------------------

    def save_store(self) -> None:
        if self.paths:
            store.persist(self.index, self.paths.store)

    def save_user_tags(self) -> None:
        if self.paths:
            overlay.save(self.user_tags, self.paths.user_store)

    def save_events(self) -> None:
        if self.paths:
            self.events.save(self.paths.events, self.paths.checkpoint)

    def save(self) -> None:
        with self.lock:
            self.save_store()
            self.save_user_tags()
            self.save_events()

    # -- queries --------------------------------------------------------

    def merged(self) -> TagIndex:
        """System store plus user tags; cached until the next mutation."""
        with self.lock:
            if self._view is None:
                self._view = overlay.merged_view(self.index, self.user_tags)
            return self._view

    def _changed(self) -> None:
        self._view = None

    def lookup(self, tags: Iterable[str], dictionary: SynonymDictionary | None = None):
        with self.lock:
            view = self.merged()
            freqs = self.events.frequencies()
        return view.lookup(list(tags), dictionary, freqs)

    def knows(self, command: str) -> bool:
        with self.lock:
            return command in self.index.by_command or any(
                m.command == command for m in self.user_tags.mappings.values()
            )

    def examples(self, command: str, k: int = 5) -> list[str]:
        with self.lock:
            return history.example_usages(self.events.events, command, k)

    # -- mutations ------------------------------------------------------

    def add_user_tags(self, command: str, tags: Iterable[str], publish: bool = False) -> int:
        with self.lock:
            added = sum(self.user_tags.add(t, command, publish) for t in tags)
            self._changed()
            self.save_user_tags()
        return added

    def share_example(self, command_line: str) -> bool:
        with self.lock:
            added = self.user_tags.add_example(command_line, publish=True)
            self._changed()
            self.save_user_tags()
        return added

    def ingest(self, mappings: Iterable[TagMapping], seeds=()) -> int:
        with self.lock:
            added = self.index.update(mappings)
            self.events.extend(seeds)
            self._changed()
            self.save_store()
            self.save_events()
        return added

    def import_map(self, path: str | os.PathLike) -> int:
        """Ingest a command map file; returns the number of mappings it holds."""
        cmap = tagmap.parse_command_map(Path(path).read_text(encoding="utf-8"))
        mappings = tagmap.map_to_mappings(cmap)
        self.ingest(mappings, tagmap.seed_events(cmap))
        return len(mappings)

    def index_pages(self, dirs: Iterable[str | os.PathLike]) -> tuple[int, list[str]]:
        """Ingest TAGS of every man page below ``dirs``.

        Returns the mapping count and one diagnostic per unreadable page;
        bad pages are skipped.
        """
        mappings, seeds, problems = [], [], []
        for path in manpage.iter_man_files(dirs):
            try:
                doc = manpage.parse_man_page(path.read_text(encoding="utf-8"))
            except (ManFormatError, UnicodeDecodeError, OSError) as exc:
                problems.append(f"{path}: {exc}")
                continue
            for tag in manpage.extract_tags(doc):
                mappings.append(TagMapping.create(tag, doc.name))
            seeds.extend(history.UsageEvent.seed(line) for line in manpage.extract_examples(doc))
        self.ingest(mappings, seeds)
        return len(mappings), problems

    def mine(self, window: int = history.DEFAULT_WINDOW) -> int:
        """Scan new history lines; returns the number of new events."""
        if not self.paths:
            return 0
        lines = history.read_history(self.paths.history)
        with self.lock:
            view = self.merged()
            added = self.events.mine(
                lines, lambda tags: [r.command for r in view.lookup(tags)], window
            )
            self.save_events()
        return added

    # -- sync node ------------------------------------------------------

    def check_token(self, peer_id: str, token: str) -> bool:
        peer = self.peers.get(peer_id)
        return peer is not None and hmac.compare_digest(peer.auth_token, token)

    def shareable(self, exclude_peer: str | None, filter_tags: Iterable[str] = ()) -> list[TagMapping]:
        """Published user tags plus peer-learned tags, minus ``exclude_peer``'s."""
        wanted = set(filter_tags)
        excluded = Source.peer(exclude_peer) if exclude_peer else None
        with self.lock:
            out = overlay.publishable_set(self.user_tags)
            out.extend(
                m for m in self.index.mappings()
                if m.source.kind == "peer" and m.source != excluded
            )
        if wanted:
            out = [m for m in out if m.tag in wanted]
        out.sort(key=TagMapping.sort_key)
        return out

    def merge_peer_records(self, mappings: Iterable[TagMapping], peer_id: str) -> int:
        source = Source.peer(peer_id)
        with self.lock:
            added = self.index.update(
                TagMapping(m.tag, m.command, source, m.created_at) for m in mappings
            )
            if added:
                self._changed()
                self.save_store()
        return added
