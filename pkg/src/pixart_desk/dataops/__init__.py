from .buckets import AREA_TOLERANCE, Bucket, assign_bucket, make_buckets, square_bucket, target_ratios
from .captions import (
    REFERENCE_TABLE,
    REPORT_COLUMNS,
    CaptionStats,
    caption_stats,
    extract_nouns,
    format_report,
    merge_stats,
    stats_report,
)
from .codec import LatentCodec, QuantizingCodec, SpaceToDepthCodec, fit_to_bucket
from .manifest import Manifest, ManifestRecord, load_manifest, parse_records, save_manifest
from .scheduler import Batch, EpochPlan, batch_scheduler, cycle_batches

__all__ = [
    "AREA_TOLERANCE", "Bucket", "assign_bucket", "make_buckets", "square_bucket",
    "target_ratios", "REFERENCE_TABLE", "REPORT_COLUMNS", "CaptionStats", "caption_stats",
    "extract_nouns", "format_report", "merge_stats", "stats_report", "LatentCodec",
    "QuantizingCodec", "SpaceToDepthCodec", "fit_to_bucket", "Manifest", "ManifestRecord",
    "load_manifest", "parse_records", "save_manifest", "Batch", "EpochPlan",
    "batch_scheduler", "cycle_batches",
]
