"""Reference HTTP stub for the answer and description-score endpoints.

``POST /v1/answer`` takes ``{"frame_ref", "question_id", "question", "labels"}``
and replies ``{"answer": str, "confidence": float}``. Any other POST path is
treated as the description scorer: ``{"prompt", "image_ref"}`` in,
``{"score": int}`` out.

Behaviour is driven by a mutable :class:`StubBehavior`, so tests can switch
the stub into error, delay or malformed modes between requests.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


@dataclass
class StubBehavior:
    # question_id -> answer; unlisted questions get the first offered label
    answers: dict = field(default_factory=dict)
    # (frame_ref, question_id) -> answer, takes precedence over ``answers``
    frame_answers: dict = field(default_factory=dict)
    status: int = 200
    delay_ms: float = 0.0
    malformed: bool = False
    # respond with ``status`` only for the first N requests, then succeed
    fail_first: int | None = None
    score: object = 65
    requests: list = field(default_factory=list)


class _Handler(BaseHTTPRequestHandler):
    server_version = "hqa-stub/1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _reply(self, status, payload=None, raw=None):
        body = raw if raw is not None else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        try:
            self.wfile.write(body)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self):
        b: StubBehavior = self.server.behavior
        length = int(self.headers.get("Content-Length") or 0)
        try:
            req = json.loads(self.rfile.read(length).decode("utf-8") or "{}")
        except ValueError:
            return self._reply(400, {"error": "bad json"})
        with self.server.lock:
            b.requests.append((self.path, req))
            n = len(b.requests)
        if b.delay_ms:
            time.sleep(b.delay_ms / 1000.0)
        failing = b.status != 200 and (b.fail_first is None or n <= b.fail_first)
        if failing:
            return self._reply(b.status, {"error": f"stub status {b.status}"})
        if b.malformed:
            return self._reply(200, raw=b"<html>not json</html>")

        if self.path.rstrip("/").endswith("/v1/answer"):
            if not isinstance(req.get("question_id"), str) or not isinstance(req.get("labels"), list):
                return self._reply(400, {"error": "question_id and labels are required"})
            key = (req.get("frame_ref"), req["question_id"])
            if key in b.frame_answers:
                ans = b.frame_answers[key]
            elif req["question_id"] in b.answers:
                ans = b.answers[req["question_id"]]
            elif req["labels"]:
                ans = req["labels"][0]
            else:
                return self._reply(400, {"error": "empty label list"})
            return self._reply(200, {"answer": ans, "confidence": 1.0})
        return self._reply(200, {"score": b.score})


class StubServer:
    """Threaded stub on 127.0.0.1; use as a context manager."""

    def __init__(self, behavior=None, host="127.0.0.1", port=0):
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.behavior = behavior or StubBehavior()
        self.httpd.lock = threading.Lock()
        self._thread = None

    @property
    def behavior(self) -> StubBehavior:
        return self.httpd.behavior

    @property
    def url(self):
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()

    def serve_forever(self):
        self.httpd.serve_forever()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
