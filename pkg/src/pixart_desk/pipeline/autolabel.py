"""Client for an external image-captioning service.

Wire format: one JSON object per line in each direction. Requests are
``{"image_ref": ..., "prompt": ...}``; responses are
``{"caption": ..., "model_tag": ..., "latency_ms": ...}`` or ``{"error": ...}``.
"""

from __future__ import annotations

import json
import socket
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Protocol

from ..dataops.manifest import Manifest, ManifestRecord

DEFAULT_PROMPT = "Describe this image and its style in a very detailed manner"


@dataclass(frozen=True)
class AutoLabelRequest:
    image_ref: str
    prompt: str = DEFAULT_PROMPT

    def to_wire(self) -> bytes:
        return (json.dumps(asdict(self), sort_keys=True) + "\n").encode("utf-8")

    @classmethod
    def from_wire(cls, data: bytes) -> "AutoLabelRequest":
        d = json.loads(data.decode("utf-8"))
        return cls(str(d["image_ref"]), str(d.get("prompt", DEFAULT_PROMPT)))


@dataclass(frozen=True)
class AutoLabelResponse:
    caption: str
    model_tag: str = ""
    latency_ms: float = 0.0

    def to_wire(self) -> bytes:
        return (json.dumps(asdict(self), sort_keys=True) + "\n").encode("utf-8")


class ServiceError(Exception):
    """The service answered, but with an error or an unusable response."""


def parse_response(data: bytes) -> AutoLabelResponse:
    try:
        d = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ServiceError(f"malformed response: {exc}") from None
    if not isinstance(d, dict):
        raise ServiceError("malformed response: not an object")
    if "error" in d:
        raise ServiceError(str(d["error"]))
    caption = str(d.get("caption", "")).strip()
    if not caption:
        raise ServiceError("empty caption")
    return AutoLabelResponse(caption, str(d.get("model_tag", "")), float(d.get("latency_ms", 0.0)))


class Transport(Protocol):
    def request(self, payload: bytes) -> bytes: ...


class InProcessTransport:
    """Calls ``handler(payload) -> bytes`` directly; handlers may raise ``OSError``."""

    def __init__(self, handler: Callable[[bytes], bytes]):
        self.handler = handler

    def request(self, payload: bytes) -> bytes:
        return self.handler(payload)


class TcpTransport:
    """One connection per request; reads a single response line."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.host, self.port, self.timeout = host, int(port), timeout

    @classmethod
    def from_endpoint(cls, endpoint: str, timeout: float = 30.0) -> "TcpTransport":
        addr = endpoint.removeprefix("tcp://")
        host, _, port = addr.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"endpoint must look like tcp://host:port, got {endpoint!r}")
        return cls(host, int(port), timeout)

    def request(self, payload: bytes) -> bytes:
        with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
            sock.sendall(payload)
            with sock.makefile("rb") as fh:
                line = fh.readline()
        if not line:
            raise ConnectionError("connection closed without a response")
        return line


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff: retry ``k`` (1-based) waits ``base * factor**(k-1)`` seconds."""

    base: float = 1.0
    factor: float = 2.0
    max_retries: int = 5

    def delay(self, retry: int) -> float:
        return self.base * self.factor ** (retry - 1)


@dataclass
class LabelOutcome:
    sample_id: str
    retries: int
    ok: bool
    caption: str = ""
    model_tag: str = ""
    latency_ms: float = 0.0
    reason: str = ""


@dataclass
class AutoLabelResult:
    manifest: Manifest
    quarantined: list[tuple[ManifestRecord, str]] = field(default_factory=list)
    outcomes: list[LabelOutcome] = field(default_factory=list)

    @property
    def retry_counts(self) -> dict[str, int]:
        return {o.sample_id: o.retries for o in self.outcomes}


def label_one(rec: ManifestRecord, transport: Transport, prompt: str, policy: RetryPolicy,
              sleep: Callable[[float], None]) -> LabelOutcome:
    image_ref = rec.image_path or rec.latent_path or rec.sample_id
    payload = AutoLabelRequest(image_ref, prompt).to_wire()
    reason = ""
    for attempt in range(policy.max_retries + 1):
        if attempt:
            sleep(policy.delay(attempt))
        try:
            resp = parse_response(transport.request(payload))
        except (OSError, ServiceError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            continue
        return LabelOutcome(rec.sample_id, attempt, True, resp.caption, resp.model_tag, resp.latency_ms)
    return LabelOutcome(rec.sample_id, policy.max_retries, False,
                        reason=f"retries exhausted after {policy.max_retries + 1} attempts; last: {reason}")


def autolabel(manifest: Manifest, transport: Transport, prompt: str = DEFAULT_PROMPT,
              concurrency: int = 4, policy: RetryPolicy = RetryPolicy(),
              sleep: Callable[[float], None] = time.sleep) -> AutoLabelResult:
    """Re-caption every record (including previously quarantined ones).

    At most ``concurrency`` requests are in flight. Output order follows the
    input manifest regardless of completion order; records whose retries run
    out are quarantined with the last error as the reason.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    records = list(manifest.records) + [r for r, _ in manifest.quarantined]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        outcomes = list(pool.map(lambda r: label_one(r, transport, prompt, policy, sleep), records))
    labeled, quarantined = [], []
    for rec, out in zip(records, outcomes):
        if out.ok:
            labeled.append(replace(rec, caption=out.caption))
        else:
            quarantined.append((rec, out.reason))
    return AutoLabelResult(Manifest(labeled, quarantined, manifest.base_dir), quarantined, outcomes)


def write_outcomes(outcomes, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(json.dumps(asdict(o), sort_keys=True) + "\n")
