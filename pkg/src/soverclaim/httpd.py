"""Real-HTTP frontends for the same Routers the simulated network
drives: a threading HTTP server per service, and an HttpNetwork client
that duck-types SimNetwork so every component runs unchanged across
both transports. Supports server-sent event streaming for /events.
"""

from __future__ import annotations

import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qsl, urlsplit

import requests as requests_lib

from .errors import DeliveryFailed
from .transport import Request, Response, Router


class _RouterHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    router: Router = None  # type: ignore[assignment]
    sse_sources: dict = {}

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _dispatch(self, method: str) -> None:
        parts = urlsplit(self.path)
        if method == "GET" and parts.path in self.sse_sources:
            self._stream_events(dict(parse_qsl(parts.query)))
            return
        request = Request(
            method=method,
            path=parts.path,
            query=dict(parse_qsl(parts.query)),
            body=self._read_body(),
        )
        try:
            response = self.router.dispatch(request)
        except Exception as exc:  # route bugs answer 500, never hang
            response = Response.error(500, type(exc).__name__, str(exc))
        self.send_response(response.status)
        self.send_header("Content-Type", response.content_type)
        self.send_header("Content-Length", str(len(response.body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(response.body)

    def _stream_events(self, query: dict) -> None:
        source = self.sse_sources[urlsplit(self.path).path]
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        after = int(query.get("after", "0"))
        try:
            while True:
                events = source(after, 20.0)
                if not events:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                for event in events:
                    after = max(after, event["id"])
                    frame = (
                        f"id: {event['id']}\n"
                        f"event: {event['event']}\n"
                        f"data: {_json_compact(event)}\n\n"
                    )
                    self.wfile.write(frame.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            return

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")

    def do_DELETE(self) -> None:
        self._dispatch("DELETE")

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()


def _json_compact(obj) -> str:
    from .encoding import canonical_json

    return canonical_json(obj).decode("utf-8")


class HttpService:
    """One router served over HTTP on host:port."""

    def __init__(self, router: Router, host: str = "127.0.0.1", port: int = 0, sse_sources: dict | None = None) -> None:
        handler = type(
            "BoundHandler",
            (_RouterHandler,),
            {"router": router, "sse_sources": sse_sources or {}},
        )
        self.server = ThreadingHTTPServer((host, port), handler)
        self.server.daemon_threads = True
        self.host = host
        self.port = self.server.server_address[1]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "HttpService":
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()


class HttpNetwork:
    """SimNetwork-compatible client/registrar over real HTTP.

    register() binds a server on the port named in the address; request()
    speaks HTTP to whatever address it is given.
    """

    def __init__(self, timeout: float = 30.0) -> None:
        self.timeout = timeout
        self._services: dict[str, HttpService] = {}
        self._sse: dict[str, dict] = {}
        self._session = requests_lib.Session()
        self._health_cache: dict[str, tuple[float, bool]] = {}

    # -- registrar ------------------------------------------------------

    def register(self, address: str, router: Router, region: str = "local") -> None:
        parts = urlsplit(address)
        service = HttpService(
            router,
            host=parts.hostname or "127.0.0.1",
            port=parts.port or 0,
            sse_sources=self._sse.get(address),
        )
        service.start()
        self._services[address] = service

    def add_sse_source(self, address: str, path: str, source) -> None:
        self._sse.setdefault(address, {})[path] = source

    def deregister(self, address: str) -> None:
        service = self._services.pop(address, None)
        if service:
            service.stop()

    def is_registered(self, address: str) -> bool:
        if address in self._services:
            return True
        now = time.monotonic()
        cached = self._health_cache.get(address)
        if cached and now - cached[0] < 1.0:
            return cached[1]
        try:
            ok = self._session.get(f"{address}/health", timeout=1.0).status_code == 200
        except requests_lib.RequestException:
            ok = False
        self._health_cache[address] = (now, ok)
        return ok

    def region_of(self, address: str) -> str:
        return "local"

    # -- client ----------------------------------------------------------

    def request(self, dst: str, request: Request, src_region: str = "local", faults: bool = True) -> Response:
        url = dst.rstrip("/") + request.path
        try:
            if request.method.upper() == "GET":
                raw = self._session.get(url, params=request.query, timeout=self.timeout)
            else:
                raw = self._session.request(
                    request.method.upper(),
                    url,
                    params=request.query,
                    data=request.body,
                    timeout=self.timeout,
                    headers={"Content-Type": request.content_type},
                )
        except requests_lib.RequestException as exc:
            raise DeliveryFailed(f"{request.method} {url}: {exc}") from exc
        return Response(
            status=raw.status_code,
            body=raw.content,
            content_type=raw.headers.get("Content-Type", "application/json"),
        )

    def post(self, dst: str, path: str, obj, src_region: str = "local", faults: bool = True) -> Response:
        from .encoding import canonical_json

        return self.request(
            dst, Request(method="POST", path=path, body=canonical_json(obj)), src_region, faults
        )

    def get(self, dst: str, path: str, query: dict | None = None, src_region: str = "local") -> Response:
        return self.request(dst, Request(method="GET", path=path, query=query or {}), src_region)
