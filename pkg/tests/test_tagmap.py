import io

import pytest
from hypothesis import given, strategies as st

from conftest import RM_MAP
from tagman.errors import CommandMapError, SchemaViolation, XmlSyntaxError
from tagman.history import UsageEvent
from tagman.store import SYSTEM, TagIndex
from tagman.tagmap import (
    CommandEntry,
    CommandTagMap,
    map_to_mappings,
    parse_command_map,
    seed_events,
    serialize_command_map,
)


def test_rm_rmdir_fixture():
    cmap = parse_command_map(RM_MAP.read_text())
    assert [(e.command, e.tags) for e in cmap.entries] == [
        ("rm", ["delete", "remove"]), ("rmdir", ["delete"])]
    assert cmap.entry("rm").examples == ["rm -rf build/"]
    assert cmap.entry("rmdir").description == "remove empty directories"
    assert cmap.entry("ls") is None
    mappings = map_to_mappings(cmap, now=100)
    assert len(mappings) == 3
    assert {(m.tag, m.command, m.source, m.created_at) for m in mappings} == {
        ("delete", "rm", SYSTEM, 100), ("remove", "rm", SYSTEM, 100), ("delete", "rmdir", SYSTEM, 100)}
    assert [r.command for r in TagIndex(mappings).lookup(["delete"])] == ["rm", "rmdir"]


def test_reads_streams():
    assert parse_command_map(io.StringIO(RM_MAP.read_text())) == parse_command_map(RM_MAP.read_text())


def test_empty_map():
    cmap = parse_command_map('<commandmap version="1"/>')
    assert cmap.entries == []
    assert map_to_mappings(cmap) == []


def test_tags_are_normalized_into_mappings():
    cmap = parse_command_map(
        '<commandmap version="1"><command name="ls"><tag> List  Files </tag></command></commandmap>')
    assert cmap.entries[0].tags == ["List  Files"]
    assert [m.tag for m in map_to_mappings(cmap)] == ["list-files"]


def test_fifty_commands():
    body = "".join(
        f'<command name="cmd{i}">' + "".join(f"<tag>t{j}</tag>" for j in range(i % 4 + 1)) + "</command>"
        for i in range(50))
    cmap = parse_command_map(f'<commandmap version="1">{body}</commandmap>')
    assert len(cmap.entries) == 50
    assert len(map_to_mappings(cmap)) == sum(i % 4 + 1 for i in range(50))


def test_seed_events():
    events = seed_events(parse_command_map(RM_MAP.read_text()))
    assert events == [UsageEvent.seed("rm -rf build/")]
    assert events[0].command == "rm" and events[0].query_tags == ()


@pytest.mark.parametrize("text, exc", [
    ("<commandmap version='1'>", XmlSyntaxError),
    ("not xml", XmlSyntaxError),
    ("", XmlSyntaxError),
    ("<map version='1'/>", SchemaViolation),
    ("<commandmap/>", SchemaViolation),
    ("<commandmap version='2'/>", SchemaViolation),
    ("<commandmap version='x'/>", SchemaViolation),
    ("<commandmap version='1' extra='y'/>", SchemaViolation),
    ("<commandmap version='1'><cmd/></commandmap>", SchemaViolation),
    ("<commandmap version='1'><command><tag>a</tag></command></commandmap>", SchemaViolation),
    ("<commandmap version='1'><command name='rm'/></commandmap>", SchemaViolation),
    ("<commandmap version='1'><command name='rm'><tag> </tag></command></commandmap>", SchemaViolation),
    ("<commandmap version='1'><command name='rm'><tag>A</tag><tag>a</tag></command></commandmap>",
     SchemaViolation),
    ("<commandmap version='1'><command name='rm'><tag>a</tag></command>"
     "<command name='rm'><tag>b</tag></command></commandmap>", SchemaViolation),
    ("<commandmap version='1'><command name='rm'><tag>a</tag><bogus/></command></commandmap>",
     SchemaViolation),
    ("<commandmap version='1'><command name='rm'><tag x='1'>a</tag></command></commandmap>",
     SchemaViolation),
    ("<commandmap version='1'><command name='rm'><tag>a<b/></tag></command></commandmap>",
     SchemaViolation),
    ("<commandmap version='1'><command name='rm'><tag>a</tag><example/></command></commandmap>",
     SchemaViolation),
    ("<commandmap version='1'><command name='r m'><tag>a</tag></command></commandmap>",
     SchemaViolation),
])
def test_invalid_maps(text, exc):
    with pytest.raises(exc):
        parse_command_map(text)
    assert issubclass(exc, CommandMapError)


def test_constructor_validates():
    with pytest.raises(SchemaViolation):
        CommandTagMap([CommandEntry("rm", [])])


_word = st.text("abcdefghij-", min_size=1, max_size=6).filter(lambda s: s.strip("-"))
_text = st.text(st.characters(whitelist_categories=("L", "N", "P", "Zs")), max_size=20).map(
    lambda s: " ".join(s.split()))


@st.composite
def command_maps(draw):
    names = draw(st.lists(_word, unique=True, max_size=6))
    entries = [
        CommandEntry(
            name,
            draw(st.lists(_word, min_size=1, max_size=4, unique=True)),
            draw(_text),
            draw(st.lists(_text.filter(bool), max_size=2)),
        )
        for name in names
    ]
    return CommandTagMap(entries)


@given(command_maps())
def test_roundtrip(cmap):
    text = serialize_command_map(cmap)
    again = parse_command_map(text)
    assert again == cmap
    assert serialize_command_map(again) == text
    assert len(map_to_mappings(cmap)) == sum(len(e.tags) for e in cmap.entries)
