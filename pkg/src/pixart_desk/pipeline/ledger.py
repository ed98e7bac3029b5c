"""Line-delimited JSON run ledger."""

from __future__ import annotations

import hashlib
import json
import os

from ..errors import ContractError


def run_id_for(config: dict, seed: int) -> str:
    blob = json.dumps({"config": config, "seed": seed}, sort_keys=True, default=str)
    return hashlib.blake2b(blob.encode("utf-8"), digest_size=6).hexdigest()


class RunLedger:
    """Append-only record of a run.

    Entries carry a ``type``: ``run`` (header with the effective config),
    ``stage``, ``step``, ``checkpoint`` or ``notice``. When ``path`` is given,
    every entry is flushed to disk as it is written.
    """

    def __init__(self, path=None, run_id: str = "", config: dict | None = None, seed: int = 0,
                 append: bool = False):
        self.path = None if path is None else os.fspath(path)
        self.entries: list[dict] = []
        self._last_step: dict[str, int] = {}
        self.run_id = run_id or run_id_for(config or {}, seed)
        if self.path and append and os.path.exists(self.path):
            for e in read_ledger(self.path):
                self.entries.append(e)
                if e["type"] == "step":
                    self._last_step[e["stage_key"]] = e["step"]
        else:
            if self.path:
                os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
                open(self.path, "w").close()
            self._write({"type": "run", "run_id": self.run_id, "seed": seed, "config": config or {}})

    def _write(self, entry: dict) -> None:
        self.entries.append(entry)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True, default=str) + "\n")

    def stage(self, stage_key: str, start_step: int = 0, **info) -> None:
        """Open a segment for ``stage_key``; its steps count up from ``start_step``."""
        self._last_step[stage_key] = start_step - 1
        self._write({"type": "stage", "stage_key": stage_key, "start_step": start_step, **info})

    def step(self, stage_key: str, step: int, **fields) -> None:
        last = self._last_step.get(stage_key)
        if last is not None and step <= last:
            raise ContractError(f"ledger steps must increase: {step} after {last} in {stage_key}")
        self._last_step[stage_key] = step
        self._write({"type": "step", "stage_key": stage_key, "step": int(step), **fields})

    def checkpoint(self, stage_key: str, step: int, path: str) -> None:
        self._write({"type": "checkpoint", "stage_key": stage_key, "step": int(step), "path": path})

    def notice(self, message: str) -> None:
        self._write({"type": "notice", "message": message})

    def steps(self, stage_key: str | None = None) -> list[dict]:
        return [e for e in self.entries if e["type"] == "step"
                and (stage_key is None or e["stage_key"] == stage_key)]

    def losses(self, stage_key: str) -> list[float]:
        return [e["loss"] for e in self.steps(stage_key)]


def read_ledger(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
