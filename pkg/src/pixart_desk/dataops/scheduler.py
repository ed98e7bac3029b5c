"""Single-bucket batches with alternating bucket order."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator

from ..errors import SchedulingError
from ..tensorcore import make_rng
from .buckets import Bucket
from .manifest import Manifest, ManifestRecord


@dataclass
class Batch:
    bucket_id: int
    records: list[ManifestRecord]

    @property
    def sample_ids(self) -> list[str]:
        return [r.sample_id for r in self.records]


@dataclass
class EpochPlan:
    batches: list[Batch]
    remainders: dict[int, list[str]] = field(default_factory=dict)

    def __iter__(self) -> Iterator[Batch]:
        return iter(self.batches)

    def __len__(self) -> int:
        return len(self.batches)

    @property
    def dropped(self) -> int:
        return sum(len(v) for v in self.remainders.values())


def batch_scheduler(manifest: Manifest, buckets: list[Bucket], batch_size: int, seed: int,
                    epoch: int = 0) -> EpochPlan:
    """Plan one epoch.

    Records are shuffled within their bucket, cut into full batches (the
    remainder of each bucket is dropped and reported), and the batches are
    ordered so consecutive batches never share a bucket while two or more
    buckets still have batches left. Among eligible buckets the one with the
    most batches left goes next, ties broken by a seeded priority.
    """
    if batch_size < 1:
        raise SchedulingError("batch_size must be >= 1")
    manifest.check_buckets(buckets)
    rng = make_rng(seed, "batch_scheduler", epoch)
    by_bucket: dict[int, list[ManifestRecord]] = defaultdict(list)
    for r in manifest.records:
        by_bucket[r.bucket_id].append(r)

    queues: dict[int, list[list[ManifestRecord]]] = {}
    remainders: dict[int, list[str]] = {}
    for bid in sorted(by_bucket):
        recs = by_bucket[bid]
        order = rng.permutation(len(recs))
        recs = [recs[i] for i in order]
        n_full = len(recs) // batch_size
        queues[bid] = [recs[i * batch_size:(i + 1) * batch_size] for i in range(n_full)]
        if len(recs) % batch_size:
            remainders[bid] = [r.sample_id for r in recs[n_full * batch_size:]]
    if not any(queues.values()):
        raise SchedulingError(f"no bucket has at least batch_size={batch_size} records")

    ids = sorted(queues)
    priority = {bid: int(p) for bid, p in zip(ids, rng.permutation(len(ids)))}
    batches: list[Batch] = []
    last = None
    while any(queues.values()):
        live = [b for b in ids if queues[b]]
        eligible = [b for b in live if b != last] or live
        pick = max(eligible, key=lambda b: (len(queues[b]), -priority[b]))
        batches.append(Batch(pick, queues[pick].pop(0)))
        last = pick
    return EpochPlan(batches, remainders)


def cycle_batches(manifest: Manifest, buckets: list[Bucket], batch_size: int,
                  seed: int) -> Iterator[tuple[int, Batch]]:
    """Endless ``(epoch, batch)`` stream; each epoch is replanned with its own stream."""
    epoch = 0
    while True:
        for b in batch_scheduler(manifest, buckets, batch_size, seed, epoch):
            yield epoch, b
        epoch += 1
