"""Carry framed messages over TCP, or in memory for tests and simulations.

A *session* is any object with ``handle_payload(bytes) -> (Message, close)``.
Servers create one session per connection; a client only needs
``request(message) -> message`` and ``close()``.
"""

from __future__ import annotations

import contextlib
import io
import socket
import socketserver
import threading
from typing import Callable

from .errors import BindError, ConnectError, ProtocolError
from .protocol import Message, encode_frame, error, read_message, read_payload, write_message


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address {address!r} is not host:port")
    return host or "127.0.0.1", int(port)


class _FrameHandler(socketserver.StreamRequestHandler):
    def handle(self):
        server: FrameServer = self.server
        session = server.session_factory()
        while True:
            try:
                payload = read_payload(self.rfile)
            except ProtocolError as exc:
                # framing is lost; nothing after this can be trusted
                write_message(self.wfile, error(exc.code, str(exc)))
                return
            except OSError:
                return
            if payload is None:
                return
            with server.busy():
                reply, close = session.handle_payload(payload)
                try:
                    write_message(self.wfile, reply)
                except OSError:
                    return
            if close:
                return


class FrameServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: str, session_factory: Callable[[], object]):
        self.session_factory = session_factory
        self._inflight = 0
        self._idle = threading.Condition()
        self._thread: threading.Thread | None = None
        try:
            super().__init__(parse_address(address), _FrameHandler)
        except OSError as exc:
            raise BindError(f"cannot listen on {address}: {exc}") from None

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    @contextlib.contextmanager
    def busy(self):
        with self._idle:
            self._inflight += 1
        try:
            yield
        finally:
            with self._idle:
                self._inflight -= 1
                self._idle.notify_all()

    def start(self) -> "FrameServer":
        self._thread = threading.Thread(target=self.serve_forever, args=(0.05,),
                                        name=f"frames@{self.address}", daemon=True)
        self._thread.start()
        return self

    def close(self, timeout: float = 10.0) -> None:
        """Stop accepting and wait for requests being handled to finish."""
        self.shutdown()
        self.server_close()
        with self._idle:
            self._idle.wait_for(lambda: self._inflight == 0, timeout)
        if self._thread is not None:
            self._thread.join(timeout)


class TcpConnection:
    def __init__(self, address: str, timeout: float = 10.0):
        self.address = address
        try:
            self._sock = socket.create_connection(parse_address(address), timeout=timeout)
        except (OSError, ValueError) as exc:
            raise ConnectError(f"cannot connect to {address}: {exc}") from None
        self._file = self._sock.makefile("rwb")

    def request(self, msg: Message) -> Message:
        try:
            write_message(self._file, msg)
            reply = read_message(self._file)
        except OSError as exc:
            raise ConnectError(f"connection to {self.address} failed: {exc}") from None
        if reply is None:
            raise ProtocolError("connection closed by peer", code="closed")
        return reply

    def close(self):
        try:
            self._file.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect_tcp(address: str) -> TcpConnection:
    return TcpConnection(address)


class InMemoryNetwork:
    """A set of addressable sessions reachable without sockets.

    Every frame in either direction is encoded, appended to ``wire`` as
    ``(direction, address, bytes)`` and decoded again, so tests see
    exactly what a socket would carry.
    """

    def __init__(self):
        self.endpoints: dict[str, Callable[[], object]] = {}
        self.wire: list[tuple[str, str, bytes]] = []
        self.down: set[str] = set()

    def listen(self, address: str, session_factory: Callable[[], object]) -> None:
        self.endpoints[address] = session_factory

    def connect(self, address: str) -> "InMemoryConnection":
        if address not in self.endpoints or address in self.down:
            raise ConnectError(f"cannot connect to {address}: unreachable")
        return InMemoryConnection(self, address, self.endpoints[address]())

    def send_raw(self, address: str, frame: bytes) -> bytes:
        """Push raw bytes at a fresh session; returns the reply frame, or b"" for no frame."""
        session = self.endpoints[address]()
        stream = io.BytesIO(frame)
        try:
            payload = read_payload(stream)
        except ProtocolError as exc:
            return encode_frame(error(exc.code, str(exc)))
        if payload is None:
            return b""
        reply, _ = session.handle_payload(payload)
        return encode_frame(reply)


class InMemoryConnection:
    def __init__(self, network: InMemoryNetwork, address: str, session):
        self.network = network
        self.address = address
        self.session = session
        self.closed = False

    def request(self, msg: Message) -> Message:
        if self.closed:
            raise ProtocolError("connection closed by peer", code="closed")
        frame = encode_frame(msg)
        self.network.wire.append((">", self.address, frame))
        reply, close = self.session.handle_payload(read_payload(io.BytesIO(frame)))
        out = encode_frame(reply)
        self.network.wire.append(("<", self.address, out))
        self.closed = close
        return read_message(io.BytesIO(out))

    def close(self):
        self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
