"""Scripted captioning service for tests and offline runs.

A script maps ``image_ref`` to a list of outcomes consumed in order; each is
a caption string or ``{"error": msg}`` (``{"drop": true}`` closes the
connection without answering). Once a list is used up its last outcome
repeats. Refs not in the script get ``default_caption``, or an error when
that is ``None``. Every handled request is appended to ``log`` so a session
can be replayed against a fresh server with :meth:`MockLabelService.replay`.
"""

from __future__ import annotations

import argparse
import json
import socketserver
import threading
from collections import defaultdict

from .autolabel import AutoLabelRequest, AutoLabelResponse

MODEL_TAG = "mock-captioner"


class DroppedConnection(ConnectionError):
    pass


class MockLabelService:
    def __init__(self, script: dict | None = None, default_caption: str | None = "a mock caption",
                 latency_ms: float = 1.0):
        self.script = {k: list(v) if isinstance(v, list) else [v] for k, v in (script or {}).items()}
        self.default_caption = default_caption
        self.latency_ms = latency_ms
        self.log: list[dict] = []
        self._calls: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "MockLabelService":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(d.get("script", {}), d.get("default_caption", "a mock caption"),
                   d.get("latency_ms", 1.0))

    def outcome(self, req: AutoLabelRequest):
        with self._lock:
            n = self._calls[req.image_ref]
            self._calls[req.image_ref] += 1
            steps = self.script.get(req.image_ref)
            out = self.default_caption if steps is None else steps[min(n, len(steps) - 1)]
            if out is None:
                out = {"error": f"unknown image {req.image_ref}"}
            self.log.append({"image_ref": req.image_ref, "prompt": req.prompt, "call": n,
                             "outcome": out})
        return out

    def handle(self, payload: bytes) -> bytes:
        req = AutoLabelRequest.from_wire(payload)
        out = self.outcome(req)
        if isinstance(out, dict):
            if out.get("drop"):
                raise DroppedConnection("mock dropped the connection")
            return (json.dumps({"error": out.get("error", "error")}) + "\n").encode("utf-8")
        return AutoLabelResponse(str(out), MODEL_TAG, self.latency_ms).to_wire()

    def calls(self, image_ref: str) -> int:
        return self._calls[image_ref]

    @classmethod
    def replay(cls, log) -> "MockLabelService":
        """Service that answers each ref with the outcomes recorded in ``log``, in order."""
        script: dict[str, list] = defaultdict(list)
        for e in sorted(log, key=lambda e: (e["image_ref"], e["call"])):
            script[e["image_ref"]].append(e["outcome"])
        return cls(dict(script), default_caption=None)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        line = self.rfile.readline()
        if not line:
            return
        try:
            reply = self.server.service.handle(line)
        except DroppedConnection:
            return
        except (ValueError, KeyError) as exc:
            reply = (json.dumps({"error": f"bad request: {exc}"}) + "\n").encode("utf-8")
        self.wfile.write(reply)


class MockServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, service: MockLabelService, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.service = service
        self._thread = None

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"tcp://{host}:{port}"

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Serve scripted captions over TCP.")
    ap.add_argument("--script", help="JSON file with script/default_caption/latency_ms")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    args = ap.parse_args(argv)
    service = MockLabelService.from_file(args.script) if args.script else MockLabelService()
    with MockServer(service, args.host, args.port) as srv:
        print(f"serving on {srv.endpoint}", flush=True)
        try:
            threading.Event().wait()
        except KeyboardInterrupt:
            pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
