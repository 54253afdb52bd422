"""Reader and writer for man pages carrying the tagging sections.

Only the minimal keyword grammar is understood: a ``.TH`` title header on
the first line, ``.SH`` section markers, and everything else kept verbatim
as body text.  Three headings get special meaning::

    .SH TAGS            whitespace-separated tags for the command
    .SH USAGE HISTORY   pointer to the per-user tag store
    .SH EXAMPLE USAGE   one example command line per line

No roff rendering is attempted.
"""

from __future__ import annotations

import enum
import os
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from .errors import DuplicateExtendedSection, MalformedTitleHeader, MissingTitleHeader


class SectionKind(enum.Enum):
    NAME = "NAME"
    SYNOPSIS = "SYNOPSIS"
    DESCRIPTION = "DESCRIPTION"
    OPTIONS = "OPTIONS"
    DIAGNOSTICS = "DIAGNOSTICS"
    BUGS = "BUGS"
    TAGS = "TAGS"
    USAGE_HISTORY = "USAGE HISTORY"
    EXAMPLE_USAGE = "EXAMPLE USAGE"
    OTHER = None

    @classmethod
    def from_heading(cls, heading: str) -> "SectionKind":
        try:
            kind = cls(heading)
        except ValueError:
            return cls.OTHER
        return kind


EXTENDED_KINDS = frozenset(
    {SectionKind.TAGS, SectionKind.USAGE_HISTORY, SectionKind.EXAMPLE_USAGE}
)


@dataclass(frozen=True)
class TitleHeader:
    name: str
    section: int = 1
    date: str = ""
    # trailing .TH arguments (source, manual); kept so pages roundtrip
    extra: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name or any(c.isspace() for c in self.name):
            raise MalformedTitleHeader(f"bad command name {self.name!r}")
        if not 1 <= self.section <= 9:
            raise MalformedTitleHeader(f"section {self.section} not in 1-9")


@dataclass
class Section:
    heading: str
    body: list[str] = field(default_factory=list)

    @property
    def kind(self) -> SectionKind:
        return SectionKind.from_heading(self.heading)


@dataclass
class ManDocument:
    title: TitleHeader
    sections: list[Section] = field(default_factory=list)
    # lines between .TH and the first .SH
    preamble: list[str] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.title.name

    def section(self, kind: SectionKind) -> Section | None:
        for sec in self.sections:
            if sec.kind is kind:
                return sec
        return None

    def kinds(self) -> list[SectionKind]:
        return [sec.kind for sec in self.sections]


def _strip_quotes(text: str) -> str:
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1]
    return text


def _parse_title(line: str, lineno: int) -> TitleHeader:
    try:
        args = shlex.split(line[3:], posix=True)
    except ValueError as exc:
        raise MalformedTitleHeader(f"line {lineno}: {exc}") from None
    if len(args) < 2:
        raise MalformedTitleHeader(f"line {lineno}: .TH needs a name and a section")
    try:
        section = int(args[1])
    except ValueError:
        raise MalformedTitleHeader(
            f"line {lineno}: section {args[1]!r} is not an integer"
        ) from None
    date = args[2] if len(args) > 2 else ""
    return TitleHeader(args[0], section, date, tuple(args[3:]))


def _is_title(line: str) -> bool:
    return line == ".TH" or line.startswith(".TH ")


def parse_man_page(source: str | TextIO) -> ManDocument:
    """Parse an extended man page from a string or text stream."""
    text = source if isinstance(source, str) else source.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    if not lines or not _is_title(lines[0]):
        if any(_is_title(line) for line in lines):
            raise MissingTitleHeader("content before the .TH line")
        raise MissingTitleHeader("no .TH line")

    doc = ManDocument(_parse_title(lines[0], 1))
    seen_extended: set[SectionKind] = set()
    current = doc.preamble
    for lineno, line in enumerate(lines[1:], start=2):
        if _is_title(line):
            raise MalformedTitleHeader(f"line {lineno}: second .TH line")
        if line.startswith(".SH "):
            sec = Section(_strip_quotes(line[4:].strip()))
            if sec.kind in EXTENDED_KINDS:
                if sec.kind in seen_extended:
                    raise DuplicateExtendedSection(
                        f"line {lineno}: second {sec.heading} section"
                    )
                seen_extended.add(sec.kind)
            doc.sections.append(sec)
            current = sec.body
        else:
            current.append(line)
    return doc


def _quote_arg(arg: str) -> str:
    if arg == "" or any(c.isspace() for c in arg):
        return f'"{arg}"'
    return arg


def serialize_man_page(doc: ManDocument) -> str:
    title = doc.title
    args = [title.name, str(title.section)]
    if title.date or title.extra:
        args.append(title.date)
    args.extend(title.extra)
    out = [".TH " + " ".join(_quote_arg(a) for a in args)]
    out.extend(doc.preamble)
    for sec in doc.sections:
        heading = sec.heading
        if heading != heading.strip() or heading == "":
            heading = f'"{heading}"'
        out.append(f".SH {heading}")
        out.extend(sec.body)
    return "\n".join(out) + "\n"


def _text_lines(section: Section | None) -> Iterator[str]:
    if section is None:
        return
    for line in section.body:
        if not line.startswith("."):
            yield line


def extract_tags(doc: ManDocument) -> list[str]:
    """Tags listed in the TAGS section, in order of first appearance."""
    tags: dict[str, None] = {}
    for line in _text_lines(doc.section(SectionKind.TAGS)):
        for token in line.split():
            tags.setdefault(token)
    return list(tags)


def extract_usage_pointer(doc: ManDocument) -> str | None:
    for line in _text_lines(doc.section(SectionKind.USAGE_HISTORY)):
        if line.strip():
            return line.strip()
    return None


def extract_examples(doc: ManDocument) -> list[str]:
    return [
        line.strip()
        for line in _text_lines(doc.section(SectionKind.EXAMPLE_USAGE))
        if line.strip()
    ]


def man_path(environ: dict[str, str] | None = None) -> list[Path]:
    """Directories listed in TAGMAN_PATH, in search order."""
    environ = os.environ if environ is None else environ
    value = environ.get("TAGMAN_PATH", "")
    return [Path(p) for p in value.split(":") if p]


def iter_man_files(dirs: Iterable[str | os.PathLike]) -> Iterator[Path]:
    """Yield man page files below each directory, directory order first."""
    for top in dirs:
        top = Path(top)
        if not top.is_dir():
            continue
        found = []
        for root, subdirs, files in os.walk(top):
            subdirs.sort()
            for name in files:
                suffix = name.rpartition(".")[2]
                if (len(suffix) == 1 and suffix in "123456789") or suffix == "man":
                    found.append(Path(root) / name)
        yield from sorted(found)
