"""``tagman`` command line.

Finds commands by tag, manages personal tags and talks to peers.  When a
daemon answers on its local endpoint requests go through it; otherwise
the store files are used directly.  ``tagman --tags delete`` is accepted
as a spelling of ``tagman search delete``.

Exit status: 0 on success with results, 1 on a domain failure or no
results, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, daemon, manpage, overlay, store, tagmap
from .errors import (
    AuthError,
    CommandMapError,
    ConnectError,
    EmptyQuery,
    ProtocolError,
    TagmanError,
)
from .protocol import Message
from .repository import Paths, Repository, load_dictionary
from .sync import synchronize, suggest_from_peers

OK, FAIL, USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tagman", description="Find and share commands by tag.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("search", help="list commands carrying the given tags")
    p.add_argument("tags", nargs="+")
    p.add_argument("--dict", dest="dictionary", default="",
                   help="synonym file, or 'default' for the built-in one")
    p.add_argument("--limit", type=int, default=10)

    p = sub.add_parser("tag", help="add personal tags to a command")
    p.add_argument("command")
    p.add_argument("tags", nargs="+")
    p.add_argument("--publish", action="store_true", help="share these tags with peers")

    p = sub.add_parser("import", help="ingest a .tagmap.xml command map")
    p.add_argument("path")

    p = sub.add_parser("index", help="ingest TAGS sections of man pages (default: $TAGMAN_PATH)")
    p.add_argument("dirs", nargs="*")

    p = sub.add_parser("examples", help="show example usage of a command")
    p.add_argument("command")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--peers", action="store_true", help="also ask peers")
    p.add_argument("--share", metavar="LINE", help="publish LINE as an example for peers")

    p = sub.add_parser("sync", help="exchange published tags with a peer")
    p.add_argument("peer_id")
    p.add_argument("--tags", default="", help="comma-separated tags to limit the exchange")

    p = sub.add_parser("daemon", help="run the daemon in the foreground")
    p.add_argument("--config", help="daemon.conf to use instead of <store-dir>/daemon.conf")

    p = sub.add_parser("export", help="print the tag store as a command map")
    p.add_argument("--user", action="store_true", help="only personal tags")
    return parser


def _daemon_client(environ, paths: Paths) -> daemon.DaemonClient | None:
    address = environ.get("TAGMAN_DAEMON")
    if address is None:
        conf = paths.store_dir / "daemon.conf"
        address = daemon.DEFAULT_LOCAL_ADDRESS
        if conf.exists():
            address = daemon.parse_config(conf.read_text(encoding="utf-8")).get(
                "local_address", address)
    if address.lower() in ("", "none", "off"):
        return None
    try:
        return daemon.DaemonClient(address, timeout=30.0)
    except ConnectError:
        return None


def _fail(message: str) -> int:
    print(f"tagman: {message}", file=sys.stderr)
    return FAIL


def _error_text(reply: Message) -> str:
    return " ".join(reply.fields)


def cmd_search(args, repo_factory, client) -> int:
    if args.limit < 0:
        print("tagman: --limit must not be negative", file=sys.stderr)
        return USAGE
    if not any(t.strip() for t in args.tags):
        print("tagman: no usable tags given", file=sys.stderr)
        return USAGE
    dict_spec = args.dictionary
    if dict_spec and dict_spec != "default":
        dict_spec = str(Path(dict_spec).resolve())
    if client is not None:
        reply = client.lookup(args.tags, dict_spec, args.limit)
        if reply.kind != "Results":
            return _fail(_error_text(reply))
        lines = ["\t".join(rec) for rec in reply.records]
    else:
        try:
            dictionary = load_dictionary(dict_spec)
        except (OSError, ValueError) as exc:
            return _fail(f"cannot load dictionary: {exc}")
        try:
            results = repo_factory().lookup(args.tags, dictionary)
        except EmptyQuery as exc:
            print(f"tagman: {exc}", file=sys.stderr)
            return USAGE
        if args.limit:
            results = results[:args.limit]
        lines = [store.format_result(r) for r in results]
    for line in lines:
        print(line)
    return OK if lines else FAIL


def cmd_tag(args, repo_factory, client) -> int:
    try:
        if client is not None:
            reply = client.add_tags(args.command, args.tags, args.publish)
            if reply.kind != "Ack":
                return _fail(_error_text(reply))
            added = int(reply.fields[0])
        else:
            added = repo_factory().add_user_tags(args.command, args.tags, args.publish)
    except OSError as exc:
        return _fail(f"cannot write user store: {exc}")
    except ValueError as exc:
        print(f"tagman: {exc}", file=sys.stderr)
        return USAGE
    print(f"{added} added")
    return OK


def cmd_import(args, repo_factory, client) -> int:
    path = str(Path(args.path).resolve())
    if client is not None:
        reply = client.import_map(path)
        if reply.kind != "Ack":
            return _fail(_error_text(reply))
        count = int(reply.fields[0])
    else:
        try:
            count = repo_factory().import_map(path)
        except (CommandMapError, OSError) as exc:
            return _fail(f"{args.path}: {exc}")
    print(f"{count} mappings")
    return OK


def cmd_index(args, repo_factory, client) -> int:
    dirs = [str(Path(d).resolve()) for d in args.dirs] or [str(d) for d in manpage.man_path()]
    if client is not None:
        reply = client.index(dirs)
        if reply.kind != "Ack":
            return _fail(_error_text(reply))
        count, problems = int(reply.fields[0]), [rec[0] for rec in reply.records]
    else:
        count, problems = repo_factory().index_pages(dirs)
    for problem in problems:
        print(f"tagman: {problem}", file=sys.stderr)
    print(f"{count} mappings")
    return FAIL if problems else OK


def cmd_examples(args, repo_factory, client) -> int:
    if args.k < 1:
        print("tagman: -k must be at least 1", file=sys.stderr)
        return USAGE
    if args.share:
        if args.share.split()[:1] != [args.command]:
            print(f"tagman: shared line must start with {args.command!r}", file=sys.stderr)
            return USAGE
        if client is not None:
            reply = client.share(args.share)
            if reply.kind != "Ack":
                return _fail(_error_text(reply))
            added = int(reply.fields[0])
        else:
            added = int(repo_factory().share_example(args.share))
        print(f"{added} added")
        return OK
    failures: list[str] = []
    if client is not None:
        reply = client.examples(args.command, args.k, args.peers)
        if reply.kind != "Lines":
            return _fail(_error_text(reply))
        mined, peer_lines = [], []
        for origin, line in daemon.decode_lines(reply):
            {"mined": mined, "peer": peer_lines, "failed": failures}[origin].append(line)
    else:
        repo = repo_factory()
        repo.mine()
        mined = repo.examples(args.command, args.k)
        peer_lines = []
        if args.peers:
            found = suggest_from_peers(repo, repo.peers.values(), args.command)
            peer_lines = found.lines
            failures = [f"{node}: {why}" for node, why in sorted(found.failures.items())]
    for failure in failures:
        print(f"tagman: peer {failure}", file=sys.stderr)
    lines = mined + [line for line in peer_lines if line not in mined]
    for line in lines:
        print(line)
    return OK if lines else FAIL


def cmd_sync(args, repo_factory, client) -> int:
    tags = [t for t in args.tags.split(",") if t.strip()]
    if client is not None:
        reply = client.sync(args.peer_id, tags)
        if reply.kind != "Report":
            if reply.fields[0] == "unknown-peer":
                return _fail(f"unknown peer {args.peer_id!r}")
            return _fail(_error_text(reply))
        pushed, pulled = reply.fields
    else:
        repo = repo_factory()
        peer = repo.peers.get(args.peer_id)
        if peer is None:
            return _fail(f"unknown peer {args.peer_id!r}")
        try:
            report = synchronize(repo, peer, tags)
        except (ConnectError, AuthError, ProtocolError) as exc:
            return _fail(f"sync with {args.peer_id} failed: {exc}")
        pushed, pulled = report.pushed, report.pulled
    print(f"pushed {pushed} pulled {pulled}")
    return OK


def cmd_daemon(args, repo_factory, client) -> int:
    if client is not None:
        client.close()
        return _fail("a daemon is already running")
    config = daemon.DaemonConfig.from_env()
    if args.config:
        config = config.updated(daemon.parse_config(Path(args.config).read_text(encoding="utf-8")))
    try:
        running = daemon.run(config)
    except TagmanError as exc:
        return _fail(str(exc))
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: running.request_stop())
    print(f"tagman daemon {running.repo.node_id}: local {running.local.address}, "
          f"sync {running.sync_server.address}", flush=True)
    running.wait()
    running.stop()
    return OK


def cmd_export(args, repo_factory, client) -> int:
    repo = repo_factory()
    index = repo.user_tags.index() if args.user else repo.merged()
    entries = []
    for command in sorted(index.commands()):
        tags = sorted(t for t in index.tags_for(command) if not t.startswith(overlay.EXAMPLE_PREFIX))
        if tags:
            entries.append(tagmap.CommandEntry(command, tags))
    sys.stdout.write(tagmap.serialize_command_map(tagmap.CommandTagMap(entries)))
    return OK


COMMANDS = {
    "search": cmd_search,
    "tag": cmd_tag,
    "import": cmd_import,
    "index": cmd_index,
    "examples": cmd_examples,
    "sync": cmd_sync,
    "daemon": cmd_daemon,
    "export": cmd_export,
}

# subcommands that do not need the daemon
_LOCAL_ONLY = {"export"}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("--tags", "-tags"):
        argv[0] = "search"
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        paths = Paths.from_env()
    except TagmanError as exc:
        return _fail(str(exc))

    def repo_factory() -> Repository:
        return Repository.open(paths)

    client = None
    if args.subcommand not in _LOCAL_ONLY:
        client = _daemon_client(os.environ, paths)
    try:
        return COMMANDS[args.subcommand](args, repo_factory, client)
    except (TagmanError, OSError) as exc:
        return _fail(str(exc))
    finally:
        if client is not None and args.subcommand != "daemon":
            client.close()


if __name__ == "__main__":
    sys.exit(main())
