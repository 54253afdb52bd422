"""Independent reference computations the tests check tagman against.

Nothing here imports the code under test except plain data types, so a
bug in tagman cannot hide in its own oracle.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

# -- man pages --------------------------------------------------------------

HEADING_KINDS = {
    "NAME": "NAME", "SYNOPSIS": "SYNOPSIS", "DESCRIPTION": "DESCRIPTION",
    "OPTIONS": "OPTIONS", "DIAGNOSTICS": "DIAGNOSTICS", "BUGS": "BUGS",
    "TAGS": "TAGS", "USAGE HISTORY": "USAGE_HISTORY", "EXAMPLE USAGE": "EXAMPLE_USAGE",
}


def scan_headings(text: str) -> list[str]:
    """Headings of every ``.SH`` line, quotes removed."""
    out = []
    for line in text.splitlines():
        if line.startswith(".SH "):
            out.append(line[4:].strip().strip('"'))
    return out


def scan_kinds(text: str) -> list[str]:
    return [HEADING_KINDS.get(h, "OTHER") for h in scan_headings(text)]


def scan_tags(text: str) -> list[str]:
    """Tokens of the TAGS section, skipping macro lines, first occurrence kept."""
    tags: list[str] = []
    inside = False
    for line in text.splitlines():
        if line.startswith(".SH "):
            inside = line[4:].strip().strip('"') == "TAGS"
            continue
        if inside and not line.startswith("."):
            for token in line.split():
                if token not in tags:
                    tags.append(token)
    return tags


def non_macro_lines(text: str) -> Counter:
    return Counter(line for line in text.splitlines()[1:] if not line.startswith("."))


# -- tag lookup -------------------------------------------------------------

def norm(raw: str) -> str:
    return "-".join(raw.casefold().split())


def brute_force_rank(pairs, query, frequencies=None, groups=None):
    """Rank (command, score, matched, via_dictionary) by exhaustive scoring.

    ``pairs`` is any iterable of (tag, command); tags already normalized.
    """
    pairs = set(pairs)
    frequencies = frequencies or {}
    commands = sorted({c for _, c in pairs})
    query = {norm(q) for q in query if q.strip()}

    def score(tags, via):
        out = []
        for command in commands:
            matched = sorted(t for t in tags if (t, command) in pairs)
            if matched:
                bonus = min(Fraction(1, 2), Fraction(frequencies.get(command, 0), 20))
                out.append((command, len(matched) + bonus, tuple(matched), via))
        out.sort(key=lambda r: (-r[1], r[0]))
        return out

    exact = score(query, False)
    if exact or groups is None:
        return exact
    expanded = set()
    for q in query:
        hit = [g for g in groups if q in {norm(w) for w in g}]
        expanded |= {norm(w) for w in hit[0]} if hit else {q}
    return score(expanded, True)


# -- history ----------------------------------------------------------------

@dataclass
class PlantedHistory:
    lines: list[str]
    tag_commands: dict[str, set[str]]
    # (query tags, command, line, index) in order
    events: list[tuple[tuple[str, ...], str, str, int]] = field(default_factory=list)
    line_pairs: dict[int, list[tuple[str, str]]] = field(default_factory=dict)

    @property
    def pairs(self) -> Counter:
        return Counter(p for pairs in self.line_pairs.values() for p in pairs)

    @property
    def frequencies(self) -> Counter:
        return Counter(cmd for q, cmd, _, _ in self.events if q)


VOCAB = {
    "delete": {"rm", "rmdir"},
    "remove": {"rm"},
    "copy": {"cp"},
    "list": {"ls"},
    "search": {"grep", "find"},
    "archive": {"tar"},
    "processes": {"ps", "top"},
}
NOISE = ["echo", "cd", "vim", "make", "git", "python3", "ssh", "sed", "awk", "sort", "uniq", "wc"]
ARGS = ["-l", "-rf", "x", "build/", "*.py", "src", "--help", "-n 3", "foo bar"]


def plant_history(n_lines: int, window: int, rng: random.Random) -> PlantedHistory:
    """Generate a history with known search->execute plantings and pipelines."""
    hist = PlantedHistory([], {t: set(c) for t, c in VOCAB.items()})
    all_commands = sorted(set().union(*VOCAB.values()) | set(NOISE))

    def emit_command(cmd: str, query=()):
        line = " ".join([cmd] + rng.sample(ARGS, rng.randint(0, 2)))
        if rng.random() < 0.3:
            segs = [cmd] + [rng.choice(all_commands) for _ in range(rng.randint(1, 3))]
            line = " | ".join([line] + [f"{s} {rng.choice(ARGS)}" for s in segs[1:]])
            hist.line_pairs[len(hist.lines)] = list(zip(segs, segs[1:]))
        hist.events.append((tuple(query), cmd, line, len(hist.lines)))
        hist.lines.append(line)

    def emit_filler():
        hist.lines.append(rng.choice(["", "# a comment", "   ", "#1700000000"]))

    while len(hist.lines) < n_lines:
        roll = rng.random()
        if roll < 0.35:
            emit_command(rng.choice(all_commands))
        elif roll < 0.45:
            emit_filler()
        else:
            tags = rng.sample(sorted(VOCAB), rng.randint(1, 2))
            offered = set().union(*(VOCAB[t] for t in tags))
            style = rng.randrange(3)
            if style == 0:
                hist.lines.append("man -tags " + " ".join(tags))
            elif style == 1:
                hist.lines.append("tagman search " + " ".join(tags) + " --limit 5")
            else:
                hist.lines.append("tagman --tags " + " ".join(t.upper() for t in tags))
            outsiders = [c for c in all_commands if c not in offered]
            satisfied = rng.random() < 0.75
            noise = rng.randint(0, window - 1) if satisfied else window
            for _ in range(noise):
                if rng.random() < 0.2:
                    emit_filler()
                emit_command(rng.choice(outsiders))
            if satisfied:
                emit_command(rng.choice(sorted(offered)), query=tags)
    # the history is causal, so cutting it keeps the ground truth exact
    del hist.lines[n_lines:]
    hist.events = [ev for ev in hist.events if ev[3] < n_lines]
    hist.line_pairs = {i: p for i, p in hist.line_pairs.items() if i < n_lines}
    return hist


def count_pipe_pairs(lines) -> Counter:
    pairs: Counter = Counter()
    for line in lines:
        if line.strip().startswith("#"):
            continue
        cmds = [seg.split()[0] for seg in line.split("|") if seg.split()]
        for i in range(len(cmds) - 1):
            pairs[(cmds[i], cmds[i + 1])] += 1
    return pairs

