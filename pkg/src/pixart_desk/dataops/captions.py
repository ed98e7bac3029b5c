"""Noun-concept statistics over caption corpora.

Nouns come from a small deterministic rule-based tagger: a closed lexicon of
function words, common verbs and adjectives, plus suffix rules. Absolute
counts therefore depend on this tagger; only the counting semantics
(distinct, valid above a strict threshold, per-image average) are fixed.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

TOKEN_RE = re.compile(r"[a-z]+(?:'[a-z]+)?")

FUNCTION_WORDS = frozenset("""
a an the this that these those some any each every no all both either neither
i me my mine you your yours he him his she her hers it its we us our ours they
them their theirs who whom whose which what there here where when why how
and or but nor so yet for if then than because while although though as
of in on at by with from to into onto upon over under above below between among
through across behind beside besides near inside outside around against along
about after before during without within toward towards beneath off out up down
is am are was were be been being has have had having do does did doing
can could may might must shall should will would not very too also just only
more most less least much many few several such own same other another
one two three four five six seven eight nine ten
""".split())

COMMON_VERBS = frozenset("""
sit sits sat stand stands stood lie lies lay look looks show shows shown hold holds
held wear wears wore appear appears seem seems make makes made take takes took
give gives gave go goes went come comes came get gets got see sees saw play plays
feature features create creates add adds set sets run runs walk walks
""".split())

COMMON_ADJECTIVES = frozenset("""
red blue green yellow black white gray grey brown orange purple pink golden silver
big small large little tall short long wide narrow old new young bright dark light
beautiful pretty cute happy sad calm quiet busy empty full open closed clear soft
hard warm cold hot cool fresh wet dry high low deep shallow round flat smooth rough
detailed vibrant vivid serene rustic modern ancient colorful realistic abstract
""".split())

ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "less", "ish", "ic", "ical", "al", "ary")
VERB_SUFFIXES = ("ing", "ed", "ize", "ise")
ADV_SUFFIX = "ly"
NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ity", "ism", "ship", "hood", "ance", "ence")

# Reference rows (valid distinct, distinct, total nouns, nouns/image) quoted for
# comparison in reports; not reproducible without the original corpora.
REFERENCE_TABLE = {
    "LAION": {"VN": 210_000, "DN": 2_461_000, "total": 72.0e6, "average": 6.4},
    "LAION-LLaVA": {"VN": 85_000, "DN": 646_000, "total": 233.9e6, "average": 20.9},
    "SAM-LLaVA": {"VN": 23_000, "DN": 124_000, "total": 327.9e6, "average": 29.3},
    "Internal": {"VN": 152_000, "DN": 582_000, "total": 136.6e6, "average": 12.2},
}


def is_noun(word: str) -> bool:
    if len(word) < 2 or word in FUNCTION_WORDS or word in COMMON_VERBS or word in COMMON_ADJECTIVES:
        return False
    if "'" in word:
        return False
    if word.endswith(NOUN_SUFFIXES):
        return True
    if word.endswith(ADV_SUFFIX) and len(word) > 4:
        return False
    if word.endswith(VERB_SUFFIXES) and len(word) > 4:
        return False
    if word.endswith(ADJ_SUFFIXES) and len(word) > 5:
        return False
    return True


def extract_nouns(caption: str) -> list[str]:
    return [w for w in TOKEN_RE.findall(caption.lower()) if is_noun(w)]


@dataclass
class CaptionStats:
    distinct_nouns: int = 0
    valid_nouns: int = 0
    total_nouns: int = 0
    num_records: int = 0
    avg_per_image: float = 0.0
    valid_threshold: int = 10
    histogram: Counter = field(default_factory=Counter)

    @property
    def valid_ratio(self) -> float:
        return self.valid_nouns / self.distinct_nouns if self.distinct_nouns else 0.0

    def to_dict(self) -> dict:
        return {"DN": self.distinct_nouns, "VN": self.valid_nouns, "total": self.total_nouns,
                "records": self.num_records, "average": self.avg_per_image,
                "VN/DN": self.valid_ratio, "valid_threshold": self.valid_threshold}


def stats_from_histogram(histogram: Counter, num_records: int, valid_threshold: int = 10) -> CaptionStats:
    total = sum(histogram.values())
    return CaptionStats(
        distinct_nouns=len(histogram),
        valid_nouns=sum(1 for c in histogram.values() if c > valid_threshold),
        total_nouns=total,
        num_records=num_records,
        avg_per_image=total / num_records if num_records else 0.0,
        valid_threshold=valid_threshold,
        histogram=Counter(histogram),
    )


def caption_stats(captions, valid_threshold: int = 10) -> CaptionStats:
    """A noun is *valid* when it occurs strictly more than ``valid_threshold`` times."""
    hist: Counter = Counter()
    n = 0
    for cap in captions:
        n += 1
        hist.update(extract_nouns(cap))
    return stats_from_histogram(hist, n, valid_threshold)


def merge_stats(parts, valid_threshold: int = 10) -> CaptionStats:
    """Combine shard-level statistics by histogram addition."""
    hist: Counter = Counter()
    n = 0
    for p in parts:
        hist.update(p.histogram)
        n += p.num_records
    return stats_from_histogram(hist, n, valid_threshold)


REPORT_COLUMNS = ("VN/DN", "Total Noun", "Average")


def stats_report(stats_a: CaptionStats, stats_b: CaptionStats,
                 names: tuple[str, str] = ("A", "B")) -> dict:
    """Side-by-side comparison with ``b - a`` deltas."""
    def row(s: CaptionStats) -> dict:
        return {"VN/DN": s.valid_ratio, "VN": s.valid_nouns, "DN": s.distinct_nouns,
                "Total Noun": s.total_nouns, "Average": s.avg_per_image}

    a, b = row(stats_a), row(stats_b)
    delta = {k: b[k] - a[k] for k in a}
    return {"columns": list(REPORT_COLUMNS), "rows": {names[0]: a, names[1]: b, "delta": delta}}


def format_report(report: dict) -> str:
    w = max(16, *(len(n) + 2 for n in report["rows"]))
    lines = [f"{'Dataset':<{w}}{'VN/DN':>28}{'Total Noun':>14}{'Average':>12}"]
    for name, r in report["rows"].items():
        if name == "delta":
            vn = f"{r['VN/DN']:+.1%}"
            lines.append(f"{name:<{w}}{vn:>28}{r['Total Noun']:>+14d}{r['Average']:>+12.2f}")
        else:
            vn = f"{r['VN']}/{r['DN']} = {r['VN/DN']:.1%}"
            lines.append(f"{name:<{w}}{vn:>28}{r['Total Noun']:>14d}{r['Average']:>12.2f}")
    return "\n".join(lines)
