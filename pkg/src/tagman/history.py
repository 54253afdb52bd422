"""Mine a shell history for tag searches and the commands that followed.

A search line (``tagman search ...``, ``tagman --tags ...`` or
``man -tags ...``) opens a window over the next few executed lines.  The
first of those whose command is among the search results is recorded
together with the query tags; every other executed line becomes a plain
usage event.  Pipelines give command co-occurrence pairs.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import EmptyAfterNormalization
from .store import atomic_write, normalize

DEFAULT_WINDOW = 5
SEED = -1

# flags of the search subcommand that take a value
_VALUE_FLAGS = {"--dict", "--limit"}


@dataclass(frozen=True)
class UsageEvent:
    query_tags: tuple[str, ...]
    command: str
    command_line: str
    observed_at: int

    @classmethod
    def seed(cls, command_line: str) -> "UsageEvent":
        command_line = command_line.strip()
        return cls((), command_line.split()[0], command_line, SEED)


@dataclass(frozen=True, order=True)
class CoOccurrence:
    first: str
    second: str
    count: int


def _search_tags(tokens: list[str]) -> list[str] | None:
    """Query tags when ``tokens`` is a tag-search invocation, else None."""
    if len(tokens) >= 2 and tokens[0] == "man" and tokens[1] == "-tags":
        args = tokens[2:]
    elif len(tokens) >= 2 and tokens[0] == "tagman" and tokens[1] in ("search", "--tags", "-tags"):
        args = tokens[2:]
    else:
        return None
    tags = []
    skip = False
    for arg in args:
        if skip:
            skip = False
        elif arg in _VALUE_FLAGS:
            skip = True
        elif not arg.startswith("-"):
            try:
                tags.append(normalize(arg))
            except EmptyAfterNormalization:
                pass
    return list(dict.fromkeys(tags))


def _history_lines(lines: Iterable[str]):
    """(index, stripped line) for lines that hold a command."""
    for i, line in enumerate(lines):
        text = line.strip()
        if text and not text.startswith("#"):
            yield i, text


def scan_history(
    lines: Sequence[str],
    resolve: Callable[[list[str]], Iterable[str]],
    window: int = DEFAULT_WINDOW,
    start: int = 0,
) -> list[UsageEvent]:
    """Turn history lines into usage events.

    ``resolve`` maps query tags to the commands the search offered.  A
    newer search replaces a still-open one.  Only events at line index
    ``start`` or later are returned; earlier lines are still read so a
    search just before ``start`` can claim a command after it.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    events = []
    pending = None  # (tags, offered commands, lines left)
    for i, text in _history_lines(lines):
        tokens = text.split()
        tags = _search_tags(tokens)
        if tags is not None:
            pending = (tuple(tags), set(resolve(tags)), window) if tags else None
            continue
        query: tuple[str, ...] = ()
        if pending is not None:
            tags, offered, left = pending
            if tokens[0] in offered:
                query = tags
                pending = None
            else:
                pending = (tags, offered, left - 1) if left > 1 else None
        if i >= start:
            events.append(UsageEvent(query, tokens[0], text, i))
    return events


def cooccurrences(lines: Iterable[str]) -> list[CoOccurrence]:
    counts: Counter[tuple[str, str]] = Counter()
    for _, text in _history_lines(lines):
        commands = [seg.split()[0] for seg in text.split("|") if seg.strip()]
        counts.update(zip(commands, commands[1:]))
    return [CoOccurrence(a, b, n) for (a, b), n in sorted(counts.items())]


def example_usages(events: Iterable[UsageEvent], command: str, k: int) -> list[str]:
    """Most frequent distinct command lines for ``command``.

    Ties go to the most recently observed line, then alphabetical order.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    counts: Counter[str] = Counter()
    latest: dict[str, int] = {}
    for ev in events:
        if ev.command == command:
            counts[ev.command_line] += 1
            latest[ev.command_line] = max(latest.get(ev.command_line, SEED), ev.observed_at)
    ranked = sorted(counts, key=lambda line: (-counts[line], -latest[line], line))
    return ranked[:k]


def selection_frequencies(events: Iterable[UsageEvent]) -> dict[str, int]:
    return dict(Counter(ev.command for ev in events if ev.query_tags))


# -- persistence ------------------------------------------------------------

def dump_events(events: Iterable[UsageEvent]) -> str:
    return "".join(
        f"{ev.observed_at}\t{ev.command}\t{' '.join(ev.query_tags)}\t{ev.command_line}\n"
        for ev in events
    )


def load_events(text: str) -> list[UsageEvent]:
    events = []
    for line in text.splitlines():
        if not line:
            continue
        observed_at, command, tags, command_line = line.split("\t", 3)
        events.append(UsageEvent(tuple(tags.split()), command, command_line, int(observed_at)))
    return events


def read_checkpoint(path: str | os.PathLike) -> int:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        return 0
    key, _, value = text.strip().partition(" ")
    if key != "line-index" or not value.isdigit():
        raise ValueError(f"bad checkpoint file {path}")
    return int(value)


def write_checkpoint(path: str | os.PathLike, index: int) -> None:
    atomic_write(path, f"line-index {index}\n")


class EventLog:
    """Mined events plus the history position they cover.

    Events from history lines are unique per line index, so re-mining a
    range that was already recorded (after a crash between writing the
    events and the checkpoint) never counts a line twice.
    """

    def __init__(self, events: Iterable[UsageEvent] = (), checkpoint: int = 0):
        self.events: list[UsageEvent] = []
        self._lines: set[int] = set()
        self._seeds: set[str] = set()
        self.checkpoint = checkpoint
        self.extend(events)

    def extend(self, events: Iterable[UsageEvent]) -> int:
        added = 0
        for ev in events:
            if ev.observed_at == SEED:
                if ev.command_line in self._seeds:
                    continue
                self._seeds.add(ev.command_line)
            else:
                if ev.observed_at in self._lines:
                    continue
                self._lines.add(ev.observed_at)
            self.events.append(ev)
            added += 1
        return added

    def mine(self, lines: Sequence[str], resolve, window: int = DEFAULT_WINDOW) -> int:
        start = self.checkpoint
        if start > len(lines):
            # the history was truncated or rotated; its line indexes start over
            start = 0
            self._lines.clear()
        added = self.extend(scan_history(lines, resolve, window, start))
        self.checkpoint = len(lines)
        return added

    def frequencies(self) -> dict[str, int]:
        return selection_frequencies(self.events)

    @classmethod
    def load(cls, events_path, checkpoint_path) -> "EventLog":
        try:
            text = Path(events_path).read_text(encoding="utf-8")
        except FileNotFoundError:
            text = ""
        return cls(load_events(text), read_checkpoint(checkpoint_path))

    def save(self, events_path, checkpoint_path) -> None:
        # events first: a crash before the checkpoint only causes a re-scan
        atomic_write(events_path, dump_events(self.events))
        write_checkpoint(checkpoint_path, self.checkpoint)


def read_history(path: str | os.PathLike) -> list[str]:
    try:
        with open(path, encoding="utf-8", errors="replace") as fh:
            return fh.read().splitlines()
    except FileNotFoundError:
        return []


def history_path(environ: Mapping[str, str] | None = None) -> Path:
    environ = os.environ if environ is None else environ
    if environ.get("TAGMAN_HISTORY"):
        return Path(environ["TAGMAN_HISTORY"])
    return Path(environ.get("HOME") or Path.home()) / ".bash_history"
