from dataclasses import replace

import pytest

from conftest import MAN_DIR, RM_MAP
from tagman import cli
from tagman.daemon import Daemon, DaemonConfig
from tagman.manpage import extract_tags, iter_man_files, parse_man_page
from tagman.sync import PeerConfig, dump_peers


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def imported(capsys):
    assert run(capsys, "import", str(RM_MAP)) == (0, "3 mappings\n", "")


def test_search(capsys, imported):
    assert run(capsys, "search", "delete") == (0, "rm\t1\tdelete\nrmdir\t1\tdelete\n", "")
    assert run(capsys, "search", "delete", "remove")[1] == "rm\t2\tdelete,remove\nrmdir\t1\tdelete\n"
    assert run(capsys, "search", "delete", "--limit", "1")[1] == "rm\t1\tdelete\n"


def test_no_results_exit_one(capsys, imported):
    assert run(capsys, "search", "nothing")[:2] == (1, "")


def test_dictionary(capsys, imported, tmp_path):
    assert run(capsys, "search", "erase")[0] == 1
    assert run(capsys, "search", "erase", "--dict", "default")[1] == "rm\t2\tdelete,remove\nrmdir\t1\tdelete\n"
    words = tmp_path / "words"
    words.write_text("zap delete\n")
    assert run(capsys, "search", "zap", "--dict", str(words))[1] == "rm\t1\tdelete\nrmdir\t1\tdelete\n"
    assert run(capsys, "search", "zap", "--dict", str(tmp_path / "missing"))[0] == 1


@pytest.mark.parametrize("argv", [
    [], ["search"], ["frobnicate"], ["search", "x", "--limit", "many"], ["search", "  "],
    ["search", "x", "--limit", "-1"], ["tag", "rm"], ["examples", "rm", "-k", "0"],
    ["examples", "rm", "--share", "ls -l"],
])
def test_usage_errors(capsys, argv):
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def test_tag(capsys):
    assert run(capsys, "tag", "rm", "wipe") == (0, "1 added\n", "")
    assert run(capsys, "tag", "rm", "wipe") == (0, "0 added\n", "")
    assert run(capsys, "search", "wipe")[1] == "rm\t1\twipe\n"


def test_tags_compat_spelling(capsys, imported):
    assert run(capsys, "--tags", "delete") == run(capsys, "search", "delete")
    assert run(capsys, "-tags", "Delete")[1] == "rm\t1\tdelete\nrmdir\t1\tdelete\n"


def test_import_errors(capsys, tmp_path):
    bad = tmp_path / "bad.tagmap.xml"
    bad.write_text("<commandmap version='1'><command name='x'/></commandmap>")
    code, out, err = run(capsys, "import", str(bad))
    assert code == 1 and out == "" and "no tags" in err
    assert run(capsys, "import", str(tmp_path / "none.xml"))[0] == 1


def test_index(capsys, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(capsys, "index", str(empty)) == (0, "0 mappings\n", "")
    expected = sum(len(extract_tags(parse_man_page(p.read_text()))) for p in iter_man_files([MAN_DIR]))
    assert expected > 0
    assert run(capsys, "index", str(MAN_DIR)) == (0, f"{expected} mappings\n", "")
    assert run(capsys, "search", "archive")[1].startswith("tar\t")


def test_index_reports_bad_pages(capsys, tmp_path):
    (tmp_path / "bad.1").write_text("no title here\n")
    (tmp_path / "ok.1").write_text(".TH ok 1\n.SH TAGS\nfine\n")
    code, out, err = run(capsys, "index", str(tmp_path))
    assert (code, out) == (1, "1 mappings\n")
    assert "bad.1" in err


def test_index_uses_tagman_path(capsys, monkeypatch):
    monkeypatch.setenv("TAGMAN_PATH", str(MAN_DIR))
    assert run(capsys, "index")[1] == run(capsys, "index", str(MAN_DIR))[1]


def test_examples(capsys, imported, isolated_env):
    (isolated_env / ".bash_history").write_text("tagman search delete\nrm -r old\nls\nrm -r old\n")
    assert run(capsys, "examples", "rm", "-k", "2") == (0, "rm -r old\nrm -rf build/\n", "")
    assert run(capsys, "examples", "cp")[0] == 1


def test_export(capsys, imported):
    run(capsys, "tag", "rm", "wipe")
    run(capsys, "examples", "rm", "--share", "rm -i x")
    code, out, _ = run(capsys, "export", "--user")
    assert code == 0
    assert "<tag>wipe</tag>" in out and "example:" not in out
    full = run(capsys, "export")[1]
    assert full.count("<command ") == 2 and "<tag>delete</tag>" in full


def test_unknown_peer(capsys):
    code, out, err = run(capsys, "sync", "nobody")
    assert code == 1 and "unknown peer" in err


def peer_daemon(tmp_path, node_id, secret, peer_of):
    """A second node with its own files, trusting ``peer_of``."""
    root = tmp_path / node_id
    root.mkdir()
    config = DaemonConfig(root / "store.tags", root / "user.tags", root / "history", root / "peers.conf",
                          listen_address="127.0.0.1:0", local_address="127.0.0.1:0", node_id=node_id)
    config.peers_path.write_text(dump_peers([PeerConfig(peer_of, "127.0.0.1:1", secret)]))
    return Daemon(config).start()


def test_sync_direct_mode(capsys, tmp_path, isolated_env):
    beta = peer_daemon(tmp_path, "beta", "s3cret", "alpha")
    try:
        peers = isolated_env / ".tagman" / "peers.conf"
        peers.parent.mkdir(parents=True, exist_ok=True)
        peers.write_text(dump_peers([PeerConfig("beta", beta.sync_server.address, "s3cret")]))
        run(capsys, "tag", "rm", "wipe", "--publish")
        run(capsys, "tag", "rm", "private")
        assert run(capsys, "sync", "beta") == (0, "pushed 1 pulled 0\n", "")
        assert run(capsys, "sync", "beta") == (0, "pushed 0 pulled 0\n", "")
        assert [r.command for r in beta.repo.lookup(["wipe"])] == ["rm"]
        assert beta.repo.lookup(["private"]) == []
        peers.write_text(dump_peers([PeerConfig("beta", beta.sync_server.address, "wrong")]))
        code, _, err = run(capsys, "sync", "beta")
        assert code == 1 and "failed" in err
    finally:
        beta.stop()


def test_commands_through_daemon(capsys, monkeypatch):
    d = Daemon(replace(DaemonConfig.from_env(), local_address="127.0.0.1:0",
                       listen_address="127.0.0.1:0")).start()
    try:
        direct = [run(capsys, "import", str(RM_MAP)), run(capsys, "search", "delete")]
        monkeypatch.setenv("TAGMAN_DAEMON", d.local.address)
        assert run(capsys, "import", str(RM_MAP)) == direct[0]
        assert run(capsys, "search", "delete") == direct[1]
        assert run(capsys, "tag", "rm", "wipe") == (0, "1 added\n", "")
        assert run(capsys, "search", "wipe")[1] == "rm\t1\twipe\n"
        assert run(capsys, "examples", "rm") == (0, "rm -rf build/\n", "")
        assert run(capsys, "examples", "rm", "--share", "rm -i y") == (0, "1 added\n", "")
        assert run(capsys, "index", str(MAN_DIR))[1] != "0 mappings\n"
        assert run(capsys, "sync", "nobody")[0] == 1
        assert run(capsys, "daemon")[0] == 1
    finally:
        d.stop()


def test_unreachable_daemon_falls_back(capsys, monkeypatch, imported):
    monkeypatch.setenv("TAGMAN_DAEMON", "127.0.0.1:1")
    assert run(capsys, "search", "delete")[0] == 0
