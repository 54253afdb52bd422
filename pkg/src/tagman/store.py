"""Inverted tag index: normalized tag -> commands, with provenance.

The index is the searchable repository every other part of tagman reads
from.  A mapping is identified by ``(tag, command, source)``; the same tag
may point at many commands and a command carries many tags.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import CorruptStore, DictionaryError, EmptyAfterNormalization, EmptyQuery

_WS = re.compile(r"\s+")

FREQUENCY_WEIGHT = Fraction(1, 20)
FREQUENCY_CAP = Fraction(1, 2)

DEFAULT_DICTIONARY = """\
delete remove erase
copy duplicate
list show display
"""


def normalize(raw: str) -> str:
    """Case-fold and collapse whitespace runs to a single hyphen.

    >>> normalize("  remove   file ")
    'remove-file'
    """
    tag = _WS.sub("-", raw.casefold().strip())
    if not tag:
        raise EmptyAfterNormalization(f"tag {raw!r} is empty after normalization")
    return tag


def _check_command(command: str) -> None:
    if not command or any(c.isspace() for c in command):
        raise ValueError(f"invalid command identifier {command!r}")


@dataclass(frozen=True, order=True)
class Source:
    """Where a mapping came from: ``system``, ``user:<id>`` or ``peer:<id>``."""

    kind: str
    ident: str = ""

    def __post_init__(self):
        if self.kind == "system":
            if self.ident:
                raise ValueError("system source takes no identifier")
        elif self.kind in ("user", "peer"):
            if not self.ident or any(c.isspace() for c in self.ident):
                raise ValueError(f"invalid {self.kind} identifier {self.ident!r}")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    @classmethod
    def system(cls) -> "Source":
        return cls("system")

    @classmethod
    def user(cls, ident: str) -> "Source":
        return cls("user", ident)

    @classmethod
    def peer(cls, ident: str) -> "Source":
        return cls("peer", ident)

    @classmethod
    def parse(cls, text: str) -> "Source":
        kind, _, ident = text.partition(":")
        return cls(kind, ident)

    def __str__(self):
        return f"{self.kind}:{self.ident}" if self.ident else self.kind


SYSTEM = Source.system()


@dataclass(frozen=True)
class TagMapping:
    tag: str
    command: str
    source: Source = SYSTEM
    created_at: int = 0
    raw_tag: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.raw_tag:
            object.__setattr__(self, "raw_tag", self.tag)
        if self.tag != normalize(self.raw_tag):
            raise ValueError(f"tag {self.tag!r} is not normalize({self.raw_tag!r})")
        _check_command(self.command)

    @classmethod
    def create(cls, raw_tag: str, command: str, source: Source = SYSTEM,
               created_at: int | None = None) -> "TagMapping":
        if created_at is None:
            created_at = int(time.time())
        return cls(normalize(raw_tag), command, source, created_at, raw_tag)

    @property
    def key(self) -> tuple[str, str, Source]:
        return (self.tag, self.command, self.source)

    def sort_key(self):
        return (self.tag, self.command, str(self.source))


@dataclass(frozen=True)
class RankedResult:
    command: str
    score: Fraction
    matched_tags: tuple[str, ...]
    via_dictionary: bool = False


def format_score(score: Fraction) -> str:
    if score.denominator == 1:
        return str(score.numerator)
    return format(float(score), "g")


def format_result(result: RankedResult) -> str:
    return f"{result.command}\t{format_score(result.score)}\t{','.join(result.matched_tags)}"


class SynonymDictionary:
    """Groups of interchangeable words used to widen a query with no hits."""

    def __init__(self, groups: Iterable[Iterable[str]] = ()):
        self.groups: list[frozenset[str]] = []
        self._group_of: dict[str, frozenset[str]] = {}
        for group in groups:
            words = frozenset(normalize(w) for w in group)
            if not words:
                continue
            for word in words:
                if word in self._group_of:
                    raise DictionaryError(f"{word!r} appears in two synonym groups")
            self.groups.append(words)
            for word in words:
                self._group_of[word] = words

    @classmethod
    def parse(cls, text: str) -> "SynonymDictionary":
        return cls(line.split() for line in text.splitlines() if line.strip())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SynonymDictionary":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> "SynonymDictionary":
        return cls.parse(DEFAULT_DICTIONARY)

    def expand(self, word: str) -> frozenset[str]:
        return self._group_of.get(word, frozenset((word,)))


class TagIndex:
    """Inverted index from normalized tags to commands.

    ``postings`` maps tag -> command -> source -> created_at and
    ``by_command`` maps command -> tags; the two are kept exact inverses.
    All access goes through one lock, so readers never observe a mapping
    half-applied.
    """

    def __init__(self, mappings: Iterable[TagMapping] = ()):
        self.postings: dict[str, dict[str, dict[Source, int]]] = {}
        self.by_command: dict[str, set[str]] = {}
        self._lock = threading.RLock()
        for m in mappings:
            self.add(m)

    def add(self, m: TagMapping) -> bool:
        """Insert a mapping; returns False when it was already present."""
        with self._lock:
            sources = self.postings.setdefault(m.tag, {}).setdefault(m.command, {})
            self.by_command.setdefault(m.command, set()).add(m.tag)
            old = sources.get(m.source)
            if old is None:
                sources[m.source] = m.created_at
                return True
            if m.created_at < old:
                sources[m.source] = m.created_at
            return False

    def remove(self, tag: str, command: str, source: Source) -> bool:
        with self._lock:
            commands = self.postings.get(tag)
            if not commands or command not in commands:
                return False
            sources = commands[command]
            if sources.pop(source, None) is None:
                return False
            if not sources:
                del commands[command]
                tags = self.by_command[command]
                tags.discard(tag)
                if not tags:
                    del self.by_command[command]
            if not commands:
                del self.postings[tag]
            return True

    def update(self, mappings: Iterable[TagMapping]) -> int:
        with self._lock:
            return sum(self.add(m) for m in mappings)

    def __contains__(self, key) -> bool:
        tag, command, source = key
        with self._lock:
            return source in self.postings.get(tag, {}).get(command, {})

    def __iter__(self) -> Iterator[TagMapping]:
        return iter(self.mappings())

    def __len__(self):
        with self._lock:
            return sum(
                len(sources)
                for commands in self.postings.values()
                for sources in commands.values()
            )

    def __eq__(self, other):
        if not isinstance(other, TagIndex):
            return NotImplemented
        return self.mappings() == other.mappings()

    def __repr__(self):
        return f"<TagIndex {len(self)} mappings>"

    def mappings(self) -> list[TagMapping]:
        """Consistent snapshot of all mappings in a stable order."""
        with self._lock:
            out = [
                TagMapping(tag, command, source, created_at)
                for tag, commands in self.postings.items()
                for command, sources in commands.items()
                for source, created_at in sources.items()
            ]
        out.sort(key=TagMapping.sort_key)
        return out

    def commands(self) -> set[str]:
        with self._lock:
            return set(self.by_command)

    def tags_for(self, command: str) -> set[str]:
        with self._lock:
            return set(self.by_command.get(command, ()))

    def copy(self) -> "TagIndex":
        return TagIndex(self.mappings())

    def _score(self, tags: Iterable[str], frequencies, via_dictionary):
        matches: dict[str, list[str]] = {}
        for tag in sorted(set(tags)):
            for command in self.postings.get(tag, ()):
                matches.setdefault(command, []).append(tag)
        results = []
        for command, matched in matches.items():
            bonus = min(FREQUENCY_CAP, FREQUENCY_WEIGHT * frequencies.get(command, 0))
            results.append(
                RankedResult(command, len(matched) + bonus, tuple(matched), via_dictionary)
            )
        results.sort(key=lambda r: (-r.score, r.command))
        return results

    def lookup(
        self,
        query_tags: Iterable[str],
        dictionary: SynonymDictionary | None = None,
        frequencies: Mapping[str, int] | None = None,
    ) -> list[RankedResult]:
        """Rank commands by how many distinct query tags they carry.

        Usage frequency adds at most 0.5, so it only reorders commands
        with equal match counts.  The dictionary is consulted only when
        no query tag matches exactly.
        """
        query = set()
        for raw in query_tags:
            if raw.strip():
                query.add(normalize(raw))
        if not query:
            raise EmptyQuery("no query tags")
        frequencies = frequencies or {}
        with self._lock:
            results = self._score(query, frequencies, False)
            if results or dictionary is None:
                return results
            expanded = set().union(*(dictionary.expand(t) for t in query))
            return self._score(expanded, frequencies, True)


def merge_stores(a: TagIndex, b: TagIndex) -> TagIndex:
    merged = a.copy()
    merged.update(b.mappings())
    return merged


HEADER = "tagstore 1"


def dumps(index: TagIndex) -> str:
    records = index.mappings()
    lines = [f"{HEADER} {len(records)}"]
    lines.extend(
        f"{m.tag}\t{m.command}\t{m.source}\t{m.created_at}" for m in records
    )
    lines.append(f"end {len(records)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> TagIndex:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CorruptStore("empty store file")
    head = lines[0].split(" ")
    if len(head) != 3 or " ".join(head[:2]) != HEADER or not head[2].isdigit():
        raise CorruptStore(f"bad header {lines[0]!r}")
    count = int(head[2])
    if len(lines) != count + 2 or lines[-1] != f"end {count}":
        raise CorruptStore(f"expected {count} records, file is truncated or padded")
    index = TagIndex()
    for lineno, line in enumerate(lines[1:-1], start=2):
        fields = line.split("\t")
        try:
            tag, command, source, created_at = fields
            index.add(TagMapping(tag, command, Source.parse(source), int(created_at)))
        except ValueError as exc:
            raise CorruptStore(f"line {lineno}: {exc}") from None
    if len(index) != count:
        raise CorruptStore("duplicate records")
    return index


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Replace ``path`` so readers see either the old or the new content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def persist(index: TagIndex, path: str | os.PathLike) -> None:
    atomic_write(path, dumps(index))


def load(path: str | os.PathLike) -> TagIndex:
    return loads(Path(path).read_text(encoding="utf-8"))
