"""TCP front end for a chunk server: one frame in, one frame out."""

from __future__ import annotations

import logging
import socketserver
import threading

from ..errors import WireProtocolError
from . import wire
from .server import ChunkServer

log = logging.getLogger("hoard.dataplane.tcp")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        server: ChunkServer = self.server.chunk_server  # type: ignore[attr-defined]

        def read_exactly(n: int) -> bytes:
            parts = []
            remaining = n
            while remaining > 0:
                data = self.request.recv(remaining)
                if not data:
                    raise ConnectionResetError
                parts.append(data)
                remaining -= len(data)
            return b"".join(parts)

        while True:
            try:
                frame = wire.read_frame(read_exactly)
            except ConnectionResetError:
                return
            except WireProtocolError as e:
                log.warning("dropping connection: %s", e)
                return
            response = server.handle_frame(frame)
            self.request.sendall(wire.encode_frame(response))


class ChunkTcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], chunk_server: ChunkServer):
        super().__init__(address, _Handler)
        self.chunk_server = chunk_server

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
