"""Persistent HTTP client used by the fuzz loop, checkers and replay."""

from __future__ import annotations

import http.client
import json
import socket
import time
from urllib.parse import urlencode, urlsplit

from .rendering import ReadyRequest
from .responses import ResponseRecord


class TargetUnreachable(Exception):
    """The target did not answer the startup probe."""


class HttpClient:
    """One keep-alive connection to the target; sequential use only.

    A write-side failure (stale keep-alive connection) is retried once on a
    fresh connection: the server never saw the request.  Failures after the
    request went out are reported as transport outcomes, never retried,
    since the target may already have acted on the request.
    """

    def __init__(self, base_url: str, timeout: float = 10.0, auth_token: str | None = None):
        parts = urlsplit(base_url)
        if parts.scheme not in ("http", "") or not parts.netloc and not parts.path:
            raise ValueError(f"unsupported target url {base_url!r}")
        netloc = parts.netloc or parts.path
        host, _, port = netloc.partition(":")
        self._host = host
        self._port = int(port) if port else 80
        self._timeout = timeout
        self._auth_token = auth_token
        self._conn: http.client.HTTPConnection | None = None

    def _connect(self) -> http.client.HTTPConnection:
        if self._conn is None:
            conn = http.client.HTTPConnection(self._host, self._port, timeout=self._timeout)
            conn.connect()
            conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._conn = conn
        return self._conn

    def _drop(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def send(self, request: ReadyRequest) -> ResponseRecord:
        path = request.path
        if request.query:
            path = f"{path}?{urlencode(request.query)}"
        headers = dict(request.headers)
        body = None
        if request.body:
            body = json.dumps(request.body).encode()
            headers["Content-Type"] = "application/json"
        if self._auth_token and "Authorization" not in headers:
            headers["Authorization"] = f"Bearer {self._auth_token}"

        started = time.perf_counter()
        for attempt in (0, 1):
            conn = None
            try:
                conn = self._connect()
                conn.request(request.method, path, body=body, headers=headers)
            except (ConnectionError, BrokenPipeError, socket.timeout,
                    http.client.HTTPException, OSError) as exc:
                self._drop()
                if attempt == 0:
                    continue
                return ResponseRecord.transport(f"send failed: {exc}")
            try:
                response = conn.getresponse()
                payload = response.read()
            except (ConnectionError, socket.timeout, http.client.HTTPException, OSError) as exc:
                self._drop()
                return ResponseRecord.transport(f"read failed: {exc}")
            latency = time.perf_counter() - started
            return ResponseRecord.from_status(
                response.status,
                payload.decode("utf-8", errors="replace"),
                latency,
            )
        raise AssertionError("unreachable")  # pragma: no cover

    def check_reachable(self) -> None:
        """Probe the target once; any HTTP status counts as reachable."""
        probe = ReadyRequest("GET", "/")
        record = self.send(probe)
        if record.status is None:
            raise TargetUnreachable(
                f"no response from {self._host}:{self._port} ({record.body})"
            )

    def close(self) -> None:
        self._drop()

    def __enter__(self) -> "HttpClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
