"""Message transport shared by every simulated service.

Services expose a Router of (method, path) handlers. The same router can
be driven two ways: in-process through SimNetwork (with configurable
per-link latency, jitter, loss and duplication — used by tests and the
latency harness) or over real HTTP (see httpd.py — used by deployed
processes). Addresses are opaque strings such as "net://validator-0".
"""

from __future__ import annotations

import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .encoding import canonical_json
from .errors import DeliveryFailed


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str] = field(default_factory=dict)
    body: bytes = b""
    content_type: str = "application/json"


@dataclass
class Response:
    status: int
    body: bytes = b""
    content_type: str = "application/json"

    @classmethod
    def json(cls, obj: Any, status: int = 200) -> "Response":
        return cls(status=status, body=canonical_json(obj))

    @classmethod
    def error(cls, status: int, kind: str, detail: str = "") -> "Response":
        return cls.json({"error": kind, "detail": detail}, status=status)


class Router:
    """Minimal method+path dispatcher with {name} path parameters."""

    def __init__(self) -> None:
        self._routes: list[tuple[str, re.Pattern[str], Callable[..., Response]]] = []

    def add(self, method: str, pattern: str, handler: Callable[..., Response]) -> None:
        regex = re.compile(
            "^" + re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", pattern) + "$"
        )
        self._routes.append((method.upper(), regex, handler))

    def dispatch(self, request: Request) -> Response:
        for method, regex, handler in self._routes:
            if method != request.method.upper():
                continue
            match = regex.match(request.path)
            if match:
                return handler(request, **match.groupdict())
        return Response.error(404, "NotFound", f"{request.method} {request.path}")


@dataclass
class LinkProfile:
    delay: float = 0.0  # one-way seconds
    jitter: float = 0.0


class SimNetwork:
    """In-process network: synchronous request/response with injected
    one-way latency per region pair, plus loss/duplication fault knobs."""

    def __init__(self, seed: int | None = None) -> None:
        self._routers: dict[str, tuple[Router, str]] = {}
        self._links: dict[tuple[str, str], LinkProfile] = {}
        self._default_link = LinkProfile()
        self.loss_rate = 0.0
        self.dup_rate = 0.0
        self._rng = random.Random(seed)
        self._taps: list[Callable[[str, str, Request], None]] = []
        # Optional targeted fault: called per delivery, True drops it.
        self.intercept: Callable[[str, str, Request], bool] | None = None
        self._lock = threading.Lock()

    # -- topology ------------------------------------------------------

    def register(self, address: str, router: Router, region: str = "local") -> None:
        with self._lock:
            self._routers[address] = (router, region)

    def deregister(self, address: str) -> None:
        with self._lock:
            self._routers.pop(address, None)

    def is_registered(self, address: str) -> bool:
        return address in self._routers

    def set_link(self, src_region: str, dst_region: str, delay: float, jitter: float = 0.0) -> None:
        self._links[(src_region, dst_region)] = LinkProfile(delay, jitter)

    def set_default_link(self, delay: float, jitter: float = 0.0) -> None:
        self._default_link = LinkProfile(delay, jitter)

    def add_tap(self, tap: Callable[[str, str, Request], None]) -> None:
        """Observe every request's raw bytes (eavesdropper harness)."""
        self._taps.append(tap)

    def region_of(self, address: str) -> str:
        entry = self._routers.get(address)
        return entry[1] if entry else "local"

    # -- traffic -------------------------------------------------------

    def _one_way(self, src_region: str, dst_region: str) -> float:
        if src_region == dst_region:
            return 0.0
        profile = self._links.get((src_region, dst_region), self._default_link)
        if profile.delay <= 0:
            return 0.0
        return max(0.0, profile.delay + self._rng.uniform(-profile.jitter, profile.jitter))

    def request(
        self,
        dst: str,
        request: Request,
        src_region: str = "local",
        faults: bool = True,
    ) -> Response:
        """Deliver a request and wait for the response.

        Loss drops the request (DeliveryFailed); duplication invokes the
        handler twice and returns the second response, which is how a
        retransmitted message reaches an at-least-once consumer.
        """
        entry = self._routers.get(dst)
        if entry is None:
            raise DeliveryFailed(f"no service at {dst}")
        router, dst_region = entry

        for tap in self._taps:
            tap(src_region, dst, request)

        delay = self._one_way(src_region, dst_region)
        if delay:
            time.sleep(delay)

        if faults and self.intercept is not None and self.intercept(src_region, dst, request):
            raise DeliveryFailed(f"message to {dst} intercepted")
        if faults and self.loss_rate and self._rng.random() < self.loss_rate:
            raise DeliveryFailed(f"message to {dst} lost")

        response = router.dispatch(request)
        if faults and self.dup_rate and self._rng.random() < self.dup_rate:
            response = router.dispatch(request)

        back = self._one_way(dst_region, src_region)
        if back:
            time.sleep(back)
        return response

    def post(self, dst: str, path: str, obj: Any, src_region: str = "local", faults: bool = True) -> Response:
        return self.request(
            dst,
            Request(method="POST", path=path, body=canonical_json(obj)),
            src_region=src_region,
            faults=faults,
        )

    def get(self, dst: str, path: str, query: dict[str, str] | None = None, src_region: str = "local") -> Response:
        return self.request(
            dst,
            Request(method="GET", path=path, query=query or {}),
            src_region=src_region,
        )
