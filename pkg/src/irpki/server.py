"""Built-in static publication server.

Serves generated repository trees over plain HTTP with an in-process
access log (so tests can count requests and bytes) and an optional
per-connection token-bucket rate limit (so bandwidth-constrained fetches
are reproducible without an external web server). Missing paths fail
fast with 404; private key material and tree metadata are never served.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

_CHUNK = 16384
_DENIED_PARTS = {"private", "tree.json", "tree-improved.json", "convert-report.json"}


@dataclass
class AccessRecord:
    path: str
    status: int
    body_bytes: int
    duration: float


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "RepositoryServer"

    def log_message(self, fmt, *args):  # quiet; the access log replaces this
        pass

    def setup(self):
        super().setup()
        self._conn_started = time.monotonic()
        self._conn_sent = 0

    def do_GET(self):
        started = time.monotonic()
        data = self.server.lookup(self.path)
        if data is None:
            self.send_response(404)
            self.send_header("Content-Length", "0")
            self.end_headers()
            self.server.record(AccessRecord(self.path, 404, 0, time.monotonic() - started))
            return
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        try:
            self._send_paced(data)
        except (BrokenPipeError, ConnectionResetError):
            pass
        self.server.record(AccessRecord(self.path, 200, len(data), time.monotonic() - started))

    def _send_paced(self, data: bytes) -> None:
        rate = self.server.rate_limit_bits
        if not rate:
            self.wfile.write(data)
            return
        for offset in range(0, len(data), _CHUNK):
            chunk = data[offset : offset + _CHUNK]
            self.wfile.write(chunk)
            self.wfile.flush()
            self._conn_sent += len(chunk)
            due = self._conn_started + self._conn_sent * 8 / rate
            delay = due - time.monotonic()
            if delay > 0:
                time.sleep(delay)


class RepositoryServer:
    """HTTP front for one or more repository trees.

    Trees are mounted by name: `GET /<name>/<relative path>` maps into the
    tree's directory. Files are served from an in-memory cache of the
    directory contents, refreshed whenever a tree is (re)mounted or
    `refresh()` is called after on-disk changes.
    """

    def __init__(self, bind: tuple[str, int] = ("127.0.0.1", 0), rate_limit_bits: float | None = None):
        self.rate_limit_bits = rate_limit_bits
        self._trees: dict[str, Path] = {}
        self._cache: dict[str, bytes] = {}
        self._lock = threading.Lock()
        self.access_log: list[AccessRecord] = []
        self._httpd = ThreadingHTTPServer(bind, _Handler)
        self._httpd.daemon_threads = True
        self._httpd.lookup = self.lookup  # type: ignore[attr-defined]
        self._httpd.record = self.record  # type: ignore[attr-defined]
        self._httpd.rate_limit_bits = rate_limit_bits  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def add_tree(self, name: str, root: Path | str) -> None:
        with self._lock:
            self._trees[name] = Path(root)
        self.refresh()

    def refresh(self) -> None:
        """Re-read all mounted trees from disk."""
        cache: dict[str, bytes] = {}
        with self._lock:
            trees = dict(self._trees)
        for name, root in trees.items():
            for path in sorted(root.rglob("*")):
                if not path.is_file():
                    continue
                rel = path.relative_to(root)
                if _DENIED_PARTS & set(rel.parts):
                    continue
                cache[f"/{name}/{rel.as_posix()}"] = path.read_bytes()
        with self._lock:
            self._cache = cache

    def lookup(self, path: str) -> bytes | None:
        with self._lock:
            return self._cache.get(path)

    def record(self, entry: AccessRecord) -> None:
        with self._lock:
            self.access_log.append(entry)

    def requests_for(self, suffix: str) -> list[AccessRecord]:
        with self._lock:
            return [r for r in self.access_log if r.path.endswith(suffix)]

    def bytes_served(self) -> int:
        with self._lock:
            return sum(r.body_bytes for r in self.access_log)

    def start(self) -> "RepositoryServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "RepositoryServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()
