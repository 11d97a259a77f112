"""Length-prefixed binary protocol for serving an oracle over TCP or stdio.

Wire format (all integers u32 little-endian)::

    client -> server   b"EVBO" + version(=1)
    server -> client   n_classes, width, height
    client -> server   msg_len, then 3*w*h float32 LE (row-major, channel-interleaved)
    server -> client   label

A server that does not like the handshake closes the connection without
replying; the client reports that as :class:`~evolba.oracle.OracleError`.
"""
from __future__ import annotations

import logging
import socket
import socketserver
import struct
import subprocess
import threading
from typing import BinaryIO

import numpy as np

from .oracle import Oracle, OracleError

log = logging.getLogger(__name__)

MAGIC = b"EVBO"
PROTOCOL_VERSION = 1
_U32 = struct.Struct("<I")


class ProtocolError(OracleError):
    pass


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    while n:
        chunk = stream.read(n)
        if not chunk:
            raise ProtocolError("connection closed by peer")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def encode_image(x: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(x, dtype="<f4").tobytes()
    return _U32.pack(len(payload)) + payload


class OracleConnection:
    """Server side of one client session; ``handle`` runs until the peer disconnects."""

    def __init__(self, oracle: Oracle, rfile: BinaryIO, wfile: BinaryIO, lock: threading.Lock | None = None):
        if oracle.shape is None:
            raise ValueError("served oracles need a fixed input shape")
        self.oracle = oracle
        self.rfile = rfile
        self.wfile = wfile
        self.lock = lock or threading.Lock()

    def handshake(self) -> None:
        hello = _read_exact(self.rfile, 8)
        if hello[:4] != MAGIC:
            raise ProtocolError(f"bad handshake magic {hello[:4]!r}")
        (version,) = _U32.unpack(hello[4:])
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        h, w, _ = self.oracle.shape
        self.wfile.write(struct.pack("<III", self.oracle.n_classes, w, h))
        self.wfile.flush()

    def handle(self) -> None:
        try:
            self.handshake()
        except ProtocolError as exc:
            log.warning("rejecting client: %s", exc)
            return
        h, w, c = self.oracle.shape
        expected = 4 * h * w * c
        while True:
            head = self.rfile.read(4)
            if not head:
                return
            if len(head) < 4:
                head += _read_exact(self.rfile, 4 - len(head))
            (msg_len,) = _U32.unpack(head)
            if msg_len != expected:
                log.warning("dropping client: message of %d bytes, expected %d", msg_len, expected)
                return
            x = np.frombuffer(_read_exact(self.rfile, msg_len), dtype="<f4").astype(np.float64)
            x = x.reshape(h, w, c)
            with self.lock:
                label = self.oracle.classify(np.clip(x, 0.0, 1.0))
                served = self.oracle.budget.used
            if served % 1000 == 0:
                log.info("served %d queries", served)
            self.wfile.write(_U32.pack(label))
            self.wfile.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        OracleConnection(self.server.oracle, self.rfile, self.wfile, self.server.lock).handle()


class OracleServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, oracle: Oracle, host: str = "127.0.0.1", port: int = 0):
        self.oracle = oracle
        self.lock = threading.Lock()
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve_stdio(oracle: Oracle, rfile: BinaryIO, wfile: BinaryIO) -> None:
    OracleConnection(oracle, rfile, wfile).handle()


class RemoteOracle(Oracle):
    """Client for an oracle served over the binary protocol."""

    def __init__(self, rfile: BinaryIO, wfile: BinaryIO, closer=None):
        self._rfile = rfile
        self._wfile = wfile
        self._closer = closer
        n_classes, w, h = self._handshake()
        super().__init__((h, w, 3))
        self.n_classes = n_classes

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 10.0) -> "RemoteOracle":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise OracleError(f"cannot reach oracle at {host}:{port}: {exc}") from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        rfile = sock.makefile("rb")
        wfile = sock.makefile("wb")

        def close():
            rfile.close()
            wfile.close()
            sock.close()

        return cls(rfile, wfile, close)

    @classmethod
    def spawn(cls, argv: list[str]) -> "RemoteOracle":
        """Start a stdio server subprocess (e.g. ``evolba oracle-serve --stdio ...``)."""
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

        def close():
            proc.stdin.close()
            proc.wait(timeout=10)
            proc.stdout.close()

        return cls(proc.stdout, proc.stdin, close)

    def _handshake(self) -> tuple[int, int, int]:
        try:
            self._wfile.write(MAGIC + _U32.pack(PROTOCOL_VERSION))
            self._wfile.flush()
            return struct.unpack("<III", _read_exact(self._rfile, 12))
        except ProtocolError as exc:
            raise ProtocolError(f"handshake rejected: {exc}") from exc
        except OSError as exc:
            raise OracleError(f"handshake failed: {exc}") from exc

    def _label(self, x):
        try:
            self._wfile.write(encode_image(x))
            self._wfile.flush()
            (label,) = _U32.unpack(_read_exact(self._rfile, 4))
        except (socket.timeout, OSError) as exc:
            raise OracleError(f"remote classify failed: {exc}") from exc
        return label

    def close(self) -> None:
        if self._closer is not None:
            self._closer()
            self._closer = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
