"""Per-user tags layered over the system store.

The user's file lives wherever ``TAGMAN_USER_STORE`` points, falling back
to ``~/.tagman/user.tags``.  System man pages are never written to.  Each
mapping has a publish flag; only published mappings leave the machine.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping
from urllib.parse import quote

from .errors import CorruptStore, NoHomeDirectory
from .store import Source, TagIndex, TagMapping, atomic_write, merge_stores, normalize

EXAMPLE_PREFIX = "example:"
HEADER = "usertags 1"


def resolve_store_path(environ: Mapping[str, str]) -> Path:
    if environ.get("TAGMAN_USER_STORE"):
        return Path(environ["TAGMAN_USER_STORE"])
    home = environ.get("HOME")
    if not home:
        raise NoHomeDirectory("TAGMAN_USER_STORE is unset and HOME is unknown")
    return Path(home) / ".tagman" / "user.tags"


def example_tag(command: str) -> str:
    return normalize(EXAMPLE_PREFIX + command)


def encode_example(command_line: str) -> str:
    # mapping commands must be whitespace-free
    return quote(command_line.strip(), safe="")


@dataclass
class UserTagFile:
    user: str
    mappings: dict[tuple[str, str], TagMapping] = field(default_factory=dict)
    publish_flags: dict[tuple[str, str], bool] = field(default_factory=dict)

    @property
    def source(self) -> Source:
        return Source.user(self.user)

    def add(self, raw_tag: str, command: str, publish: bool = False,
            created_at: int | None = None) -> bool:
        """Add one tag; True if the (tag, command) pair is new.

        Re-adding a known pair only updates its publish flag.
        """
        m = TagMapping.create(raw_tag, command, self.source,
                              int(time.time()) if created_at is None else created_at)
        key = (m.tag, m.command)
        self.publish_flags[key] = publish
        if key in self.mappings:
            return False
        self.mappings[key] = m
        return True

    def add_example(self, command_line: str, publish: bool = True) -> bool:
        command = command_line.split()[0]
        return self.add(example_tag(command), encode_example(command_line), publish)

    def remove(self, raw_tag: str, command: str) -> bool:
        key = (normalize(raw_tag), command)
        self.publish_flags.pop(key, None)
        return self.mappings.pop(key, None) is not None

    def index(self) -> TagIndex:
        return TagIndex(self.mappings.values())

    def __len__(self):
        return len(self.mappings)


def add_user_tag(file: UserTagFile, raw_tag: str, command: str, publish: bool = False) -> UserTagFile:
    file.add(raw_tag, command, publish)
    return file


def merged_view(system: TagIndex, user: UserTagFile) -> TagIndex:
    return merge_stores(system, user.index())


def publishable_set(file: UserTagFile) -> list[TagMapping]:
    out = [m for key, m in file.mappings.items() if file.publish_flags.get(key)]
    out.sort(key=TagMapping.sort_key)
    return out


def dumps(file: UserTagFile) -> str:
    records = sorted(file.mappings.values(), key=TagMapping.sort_key)
    lines = [f"{HEADER} {file.user} {len(records)}"]
    for m in records:
        flag = "pub" if file.publish_flags.get((m.tag, m.command)) else "priv"
        lines.append(f"{m.tag}\t{m.command}\t{m.source}\t{m.created_at}\t{flag}")
    lines.append(f"end {len(records)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> UserTagFile:
    lines = text.splitlines()
    if not lines:
        raise CorruptStore("empty user tag file")
    head = lines[0].split(" ")
    if len(head) != 4 or " ".join(head[:2]) != HEADER or not head[3].isdigit():
        raise CorruptStore(f"bad header {lines[0]!r}")
    count = int(head[3])
    if len(lines) != count + 2 or lines[-1] != f"end {count}":
        raise CorruptStore(f"expected {count} records, file is truncated or padded")
    file = UserTagFile(head[2])
    for lineno, line in enumerate(lines[1:-1], start=2):
        try:
            tag, command, source, created_at, flag = line.split("\t")
            m = TagMapping(tag, command, Source.parse(source), int(created_at))
        except ValueError as exc:
            raise CorruptStore(f"line {lineno}: {exc}") from None
        if m.source != file.source or flag not in ("pub", "priv"):
            raise CorruptStore(f"line {lineno}: bad source or publish flag")
        file.mappings[(m.tag, m.command)] = m
        file.publish_flags[(m.tag, m.command)] = flag == "pub"
    return file


def save(file: UserTagFile, path: str | os.PathLike) -> None:
    atomic_write(path, dumps(file))


def load(path: str | os.PathLike, user: str) -> UserTagFile:
    """Read a user's file; a missing file is an empty overlay."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        return UserTagFile(user)
    return loads(text)
