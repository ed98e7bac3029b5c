"""Line-delimited JSON dataset manifests."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from ..errors import DataError
from .buckets import Bucket, assign_bucket


@dataclass
class ManifestRecord:
    sample_id: str
    caption: str
    native_height: int
    native_width: int
    bucket_id: int | None = None
    image_path: str | None = None
    latent_path: str | None = None
    class_label: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestRecord":
        try:
            return cls(sample_id=str(d["sample_id"]), caption=str(d.get("caption", "")),
                       native_height=int(d["native_height"]), native_width=int(d["native_width"]),
                       bucket_id=None if d.get("bucket_id") is None else int(d["bucket_id"]),
                       image_path=d.get("image_path"), latent_path=d.get("latent_path"),
                       class_label=None if d.get("class_label") is None else int(d["class_label"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed manifest record {d!r}: {exc}") from None


@dataclass
class Manifest:
    records: list[ManifestRecord]
    quarantined: list[tuple[ManifestRecord, str]] = field(default_factory=list)
    base_dir: str = "."

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def with_buckets(self, buckets: list[Bucket]) -> "Manifest":
        """Assign every record to the nearest bucket by aspect ratio."""
        recs = []
        for r in self.records:
            rr = ManifestRecord(**asdict(r))
            rr.bucket_id = assign_bucket(r.native_height, r.native_width, buckets)
            recs.append(rr)
        return Manifest(recs, list(self.quarantined), self.base_dir)

    def check_buckets(self, buckets: list[Bucket]) -> None:
        ids = {b.id for b in buckets}
        bad = [r.sample_id for r in self.records if r.bucket_id not in ids]
        if bad:
            raise DataError(f"{len(bad)} records reference unknown buckets, e.g. {bad[:3]}")


def parse_records(lines, base_dir: str = ".") -> Manifest:
    records, quarantined = [], []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest line {lineno}: {exc}") from None
        rec = ManifestRecord.from_dict(d)
        if rec.sample_id in seen:
            raise DataError(f"duplicate sample_id {rec.sample_id!r} on line {lineno}")
        seen.add(rec.sample_id)
        if not rec.caption.strip():
            quarantined.append((rec, "empty caption"))
        else:
            records.append(rec)
    return Manifest(records, quarantined, base_dir)


def load_manifest(path) -> Manifest:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_records(fh, os.path.dirname(os.path.abspath(path)))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None


def save_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
