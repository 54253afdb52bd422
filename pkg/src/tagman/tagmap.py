"""Developer-supplied command/tag maps (``.tagmap.xml``).

Layout::

    <commandmap version="1">
      <command name="rm">
        <description>remove files or directories</description>
        <tag>delete</tag>
        <tag>remove</tag>
        <example>rm -rf build/</example>
      </command>
    </commandmap>

``description`` is optional, at least one ``tag`` is required and
``example`` may repeat.  Anything else is rejected.
"""

from __future__ import annotations

import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import TextIO

from .errors import EmptyAfterNormalization, SchemaViolation, XmlSyntaxError
from .history import UsageEvent
from .store import SYSTEM, TagMapping, normalize

VERSION = 1


@dataclass
class CommandEntry:
    command: str
    tags: list[str]
    description: str = ""
    examples: list[str] = field(default_factory=list)


@dataclass
class CommandTagMap:
    entries: list[CommandEntry] = field(default_factory=list)
    version: int = VERSION

    def __post_init__(self):
        validate(self)

    def entry(self, command: str) -> CommandEntry | None:
        for e in self.entries:
            if e.command == command:
                return e
        return None


def validate(cmap: CommandTagMap) -> None:
    if cmap.version != VERSION:
        raise SchemaViolation(f"unsupported version {cmap.version}")
    seen = set()
    for entry in cmap.entries:
        name = entry.command
        if not name or any(c.isspace() for c in name):
            raise SchemaViolation(f"invalid command name {name!r}")
        if name in seen:
            raise SchemaViolation(f"duplicate command {name!r}")
        seen.add(name)
        if not entry.tags:
            raise SchemaViolation(f"command {name!r} has no tags")
        normalized = set()
        for tag in entry.tags:
            try:
                tag = normalize(tag)
            except EmptyAfterNormalization:
                raise SchemaViolation(f"command {name!r} has an empty tag") from None
            if tag in normalized:
                raise SchemaViolation(f"command {name!r} repeats tag {tag!r}")
            normalized.add(tag)
        if any(not ex.strip() for ex in entry.examples):
            raise SchemaViolation(f"command {name!r} has an empty example")


def _check_attrs(elem: ET.Element, allowed: set[str]) -> None:
    extra = set(elem.attrib) - allowed
    if extra:
        raise SchemaViolation(f"<{elem.tag}> has unknown attributes {sorted(extra)}")


def _leaf_text(elem: ET.Element) -> str:
    _check_attrs(elem, set())
    if len(elem):
        raise SchemaViolation(f"<{elem.tag}> must contain text only")
    return (elem.text or "").strip()


def _parse_command(elem: ET.Element) -> CommandEntry:
    _check_attrs(elem, {"name"})
    if "name" not in elem.attrib:
        raise SchemaViolation("<command> is missing its name attribute")
    entry = CommandEntry(elem.attrib["name"].strip(), [])
    have_description = False
    for child in elem:
        if child.tag == "tag":
            entry.tags.append(_leaf_text(child))
        elif child.tag == "example":
            entry.examples.append(_leaf_text(child))
        elif child.tag == "description":
            if have_description:
                raise SchemaViolation(f"command {entry.command!r} has two descriptions")
            have_description = True
            entry.description = _leaf_text(child)
        else:
            raise SchemaViolation(f"unknown element <{child.tag}> in <command>")
    return entry


def parse_command_map(source: str | TextIO) -> CommandTagMap:
    text = source if isinstance(source, str) else source.read()
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlSyntaxError(str(exc)) from None
    if root.tag != "commandmap":
        raise SchemaViolation(f"root element is <{root.tag}>, expected <commandmap>")
    _check_attrs(root, {"version"})
    try:
        version = int(root.attrib.get("version", ""))
    except ValueError:
        raise SchemaViolation("missing or non-integer version") from None
    entries = []
    for child in root:
        if child.tag != "command":
            raise SchemaViolation(f"unknown element <{child.tag}> in <commandmap>")
        entries.append(_parse_command(child))
    return CommandTagMap(entries, version)


def serialize_command_map(cmap: CommandTagMap) -> str:
    root = ET.Element("commandmap", version=str(cmap.version))
    for entry in cmap.entries:
        elem = ET.SubElement(root, "command", name=entry.command)
        if entry.description:
            ET.SubElement(elem, "description").text = entry.description
        for tag in entry.tags:
            ET.SubElement(elem, "tag").text = tag
        for example in entry.examples:
            ET.SubElement(elem, "example").text = example
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def map_to_mappings(cmap: CommandTagMap, now: int | None = None) -> list[TagMapping]:
    if now is None:
        now = int(time.time())
    return [
        TagMapping.create(tag, entry.command, SYSTEM, now)
        for entry in cmap.entries
        for tag in entry.tags
    ]


def seed_events(cmap: CommandTagMap) -> list[UsageEvent]:
    """Developer examples as usage events with no query tags."""
    return [
        UsageEvent.seed(example)
        for entry in cmap.entries
        for example in entry.examples
    ]
