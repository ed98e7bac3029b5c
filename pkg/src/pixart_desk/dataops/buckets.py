"""Multi-aspect resolution buckets.

Target aspect ratios are log-spaced over ``[ratio_min, ratio_max]``. Each
target owns the half-open slice of log-aspect space halfway to its
neighbours (the last slice is closed, so the ends are reachable); among
grid points ``(h, w)`` (multiples of ``quantum``) whose aspect falls in that
slice, the one with the smallest ``|h*w - target_area|`` is chosen, ties going
to the aspect closest to the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

AREA_TOLERANCE = 0.125


@dataclass(frozen=True)
class Bucket:
    id: int
    height: int
    width: int

    @property
    def aspect(self) -> float:
        return self.width / self.height

    @property
    def area(self) -> int:
        return self.height * self.width

    def to_dict(self) -> dict:
        return {"id": self.id, "height": self.height, "width": self.width}


def target_ratios(count: int, ratio_min: float, ratio_max: float) -> np.ndarray:
    if count == 1:
        return np.array([math.sqrt(ratio_min * ratio_max)])
    return np.exp(np.linspace(math.log(ratio_min), math.log(ratio_max), count))


def _windows(ratios: np.ndarray, ratio_min: float, ratio_max: float):
    logs = np.log(ratios)
    lo = np.empty_like(logs)
    hi = np.empty_like(logs)
    lo[0], hi[-1] = math.log(ratio_min), math.log(ratio_max)
    mids = 0.5 * (logs[1:] + logs[:-1])
    lo[1:], hi[:-1] = mids, mids
    return lo, hi


def best_in_window(target_area: int, quantum: int, ratio: float, lo: float, hi: float,
                   closed: bool = False):
    """Grid point with aspect in ``[exp(lo), exp(hi))`` closest in area to the target.

    ``closed`` includes the upper end of the window.

    Returns ``None`` when the window contains no grid point.
    """
    eps = 1e-12
    best = None
    best_key = None
    h_max = int(math.sqrt(target_area / math.exp(lo)) * 1.5 / quantum) + 2
    for hq in range(1, h_max + 1):
        h = hq * quantum
        w_lo = max(1, math.ceil(h * math.exp(lo) / quantum - eps))
        w_hi = math.floor(h * math.exp(hi) / quantum + eps)
        if not closed and w_hi >= 1 and abs(math.log(w_hi * quantum / h) - hi) < 1e-9:
            w_hi -= 1
        if w_hi < w_lo:
            continue
        # area is monotone in w, so only the two grid points around target_area/h matter
        w_star = target_area / h / quantum
        for wq in {min(max(math.floor(w_star), w_lo), w_hi), min(max(math.ceil(w_star), w_lo), w_hi)}:
            w = wq * quantum
            key = (abs(h * w - target_area), abs(math.log(w / h) - math.log(ratio)), h)
            if best_key is None or key < best_key:
                best, best_key = (h, w), key
    return best


def make_buckets(target_area: int, count: int = 40, ratio_min: float = 0.25,
                 ratio_max: float = 4.0, quantum: int = 16) -> list[Bucket]:
    if count < 1:
        raise ConfigError("bucket count must be >= 1")
    if quantum < 1 or target_area < quantum * quantum:
        raise ConfigError(f"target_area {target_area} smaller than quantum^2 = {quantum * quantum}")
    if not 0 < ratio_min <= ratio_max:
        raise ConfigError("need 0 < ratio_min <= ratio_max")
    ratios = target_ratios(count, ratio_min, ratio_max)
    lo, hi = _windows(ratios, ratio_min, ratio_max)
    buckets = []
    for i, r in enumerate(ratios):
        hw = best_in_window(target_area, quantum, r, lo[i], hi[i], closed=i == count - 1)
        if hw is None or abs(hw[0] * hw[1] - target_area) > AREA_TOLERANCE * target_area:
            raise ConfigError(
                f"no {quantum}-aligned size within {AREA_TOLERANCE:.1%} of area {target_area} "
                f"for aspect ratio {r:.4f}")
        buckets.append(Bucket(i, *hw))
    if len({(b.height, b.width) for b in buckets}) != len(buckets):
        raise ConfigError("bucket sizes collide; reduce count or quantum")
    return buckets


def square_bucket(size: int) -> list[Bucket]:
    return [Bucket(0, size, size)]


def assign_bucket(native_h: float, native_w: float, buckets) -> int:
    """Id of the bucket nearest in log-aspect; ties go to the smaller id.

    Distances within 1e-12 count as ties so geometric-mean aspects resolve
    deterministically despite rounding.
    """
    if not buckets:
        raise ConfigError("no buckets to assign to")
    la = math.log(native_w / native_h)
    best_id, best_d = None, math.inf
    for b in sorted(buckets, key=lambda b: b.id):
        d = abs(la - math.log(b.aspect))
        if d < best_d - 1e-12:
            best_id, best_d = b.id, d
    return best_id
