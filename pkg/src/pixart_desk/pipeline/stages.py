"""Stage runner and multi-stage training plans."""

from __future__ import annotations

import os
import time
from dataclasses import MISSING, asdict, dataclass, field, fields, replace

import numpy as np

from ..dataops.buckets import make_buckets, square_bucket
from ..dataops.codec import fit_to_bucket
from ..dataops.manifest import load_manifest
from ..dataops.scheduler import cycle_batches
from ..diffusion.losses import training_loss
from ..diffusion.schedule import DiffusionSchedule
from ..errors import ConfigError, DataError, NumericAbort
from ..model.config import DIT_CLASS_CONDITIONAL, T2I_ADALN_SINGLE, VARIANTS, ModelConfig
from ..model.network import PixArtModel
from ..reparam.checkpoint import Checkpoint, load, save
from ..reparam.surgery import reparameterize
from ..tensorcore import backward, make_rng
from .ledger import RunLedger, run_id_for
from .optim import AdamW
from .text import HashingTextEmbedder

PIXEL_DEPENDENCY = "pixel_dependency"
TEXT_IMAGE_ALIGN = "text_image_align"
HIGH_AESTHETICS = "high_aesthetics"
STAGE_NAMES = (PIXEL_DEPENDENCY, TEXT_IMAGE_ALIGN, HIGH_AESTHETICS)

SCRATCH, PREVIOUS, CHECKPOINT, REPARAM = "scratch", "previous", "checkpoint", "reparam"
ABLATION_LABEL = "w/o re-param"


class PlanError(ConfigError):
    pass


def parse_init(spec: str) -> tuple[str, str | None]:
    """``scratch`` | ``previous`` | ``reparam`` | ``checkpoint:<path>`` | ``reparam:<path>``."""
    kind, _, path = str(spec).partition(":")
    if kind not in (SCRATCH, PREVIOUS, CHECKPOINT, REPARAM):
        raise ConfigError(f"unknown init_from {spec!r}")
    if kind == CHECKPOINT and not path:
        raise ConfigError("init_from checkpoint needs a path: 'checkpoint:<path>'")
    if kind in (SCRATCH, PREVIOUS) and path:
        raise ConfigError(f"init_from {kind!r} takes no path")
    return kind, path or None


@dataclass(frozen=True)
class StageConfig:
    """One training stage.

    ``resolution`` is the latent edge length; the bucket target area is its
    square. ``checkpoint_every = 0`` writes only the final checkpoint.
    ``overfit`` repeats the first batch with frozen timesteps and noise.
    """

    name: str
    manifest_path: str = ""
    resolution: int = 8
    steps: int = 100
    batch_size: int = 8
    lr: float = 2e-5
    weight_decay: float = 0.03
    multi_aspect: bool = False
    init_from: str = SCRATCH
    variant: str = T2I_ADALN_SINGLE
    checkpoint_every: int = 0
    bucket_count: int = 40
    grad_clip: float = 1.0
    t_star: int = 500
    overfit: bool = False

    def __post_init__(self):
        if self.name not in STAGE_NAMES:
            raise ConfigError(f"stage name must be one of {STAGE_NAMES}, got {self.name!r}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.steps < 1:
            raise ConfigError(f"steps must be > 0, got {self.steps}")
        if self.batch_size < 1 or self.resolution < 1:
            raise ConfigError("batch_size and resolution must be positive")
        if self.weight_decay < 0 or self.checkpoint_every < 0:
            raise ConfigError("weight_decay and checkpoint_every must be >= 0")
        if self.multi_aspect and self.name != HIGH_AESTHETICS:
            raise ConfigError(f"multi_aspect is only allowed for {HIGH_AESTHETICS}, not {self.name}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        parse_init(self.init_from)

    @classmethod
    def from_dict(cls, d: dict) -> "StageConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown stage keys: {sorted(extra)}")
        out = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            kind = type(f.default) if f.default is not MISSING else str
            try:
                if kind is bool:
                    if not isinstance(v, bool):
                        raise ValueError(f"expected true/false, got {v!r}")
                elif kind in (int, float):
                    v = kind(v)
                    if kind is int and v != float(d[f.name]):
                        raise ValueError(f"expected an integer, got {d[f.name]!r}")
                else:
                    v = str(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"stage key {f.name}: {exc}") from None
            out[f.name] = v
        return cls(**out)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Identity of the training recipe, independent of where the manifest lives."""
        d = self.to_dict()
        d["manifest_path"] = os.path.basename(d["manifest_path"])
        return run_id_for(d, 0)


@dataclass
class StageResult:
    stage: StageConfig
    stage_key: str
    checkpoint: Checkpoint
    checkpoint_path: str | None
    losses: list[float]
    label: str = ""
    surgery: dict | None = None
    dropped_per_epoch: int = 0


def stage_buckets(stage: StageConfig, patch_size: int):
    if stage.multi_aspect:
        return make_buckets(stage.resolution ** 2, count=stage.bucket_count, quantum=patch_size)
    if stage.resolution % patch_size:
        raise ConfigError(f"resolution {stage.resolution} not divisible by patch size {patch_size}")
    return square_bucket(stage.resolution)


class LatentStore:
    """Loads latents lazily (encoding images through ``codec``) and caches them."""

    def __init__(self, manifest, channels: int, codec=None):
        self.manifest = manifest
        self.channels = channels
        self.codec = codec
        self._cache: dict[str, np.ndarray] = {}

    def get(self, rec) -> np.ndarray:
        x = self._cache.get(rec.sample_id)
        if x is None:
            try:
                if rec.latent_path:
                    x = np.load(self.manifest.resolve(rec.latent_path))
                elif rec.image_path:
                    if self.codec is None:
                        raise DataError(f"record {rec.sample_id} has only an image and no codec is set")
                    x = self.codec.encode(np.load(self.manifest.resolve(rec.image_path)))
                else:
                    raise DataError(f"record {rec.sample_id} has neither latent_path nor image_path")
            except OSError as exc:
                raise DataError(f"cannot load data for {rec.sample_id}: {exc}") from None
            x = np.asarray(x, dtype=np.float64)
            if x.ndim != 3 or x.shape[0] != self.channels:
                raise DataError(f"record {rec.sample_id}: latent shape {x.shape}, "
                                f"expected ({self.channels}, H, W)")
            self._cache[rec.sample_id] = x
        return x


def _derived_seed(seed: int, *streams) -> int:
    return int(make_rng(seed, *streams).integers(0, 2 ** 31 - 1))


def _path_tag(path: str | None) -> str:
    return os.path.basename(path) if path else ""


def init_model(stage: StageConfig, model_config: ModelConfig, seed: int,
               previous: Checkpoint | None = None):
    """Build the stage's starting model; returns ``(model, init_tag, surgery_report)``."""
    kind, path = parse_init(stage.init_from)
    if kind == SCRATCH:
        cfg = model_config.with_variant(stage.variant)
        return PixArtModel(cfg, seed=_derived_seed(seed, "init", stage.name)), SCRATCH, None
    if kind == PREVIOUS or (kind == CHECKPOINT):
        src = previous if kind == PREVIOUS else load(path)
        if src is None:
            raise PlanError(f"stage {stage.name} wants the previous stage's output but there is none")
        if src.config.variant != stage.variant:
            raise PlanError(f"stage {stage.name} is {stage.variant} but its init checkpoint is "
                            f"{src.config.variant}")
        tag = PREVIOUS if kind == PREVIOUS else f"{CHECKPOINT}:{_path_tag(path)}"
        return PixArtModel(src.config, src.weights), tag, None
    src = previous if path is None else load(path)
    if src is None:
        raise PlanError(f"stage {stage.name} wants to reparameterize the previous stage but there is none")
    if stage.variant != T2I_ADALN_SINGLE:
        raise PlanError(f"reparam produces {T2I_ADALN_SINGLE}; stage {stage.name} is {stage.variant}")
    target_cfg = replace(src.config, variant=T2I_ADALN_SINGLE,
                         text_dim=model_config.text_dim, max_text_tokens=model_config.max_text_tokens)
    ckpt, report = reparameterize(src, t_star=stage.t_star,
                                  seed=_derived_seed(seed, "reparam", stage.name),
                                  target_config=target_cfg)
    tag = REPARAM if path is None else f"{REPARAM}:{_path_tag(path)}"
    return PixArtModel(ckpt.config, ckpt.weights), tag, report


def run_stage(stage: StageConfig, model: PixArtModel | None = None, seed: int = 0, *,
              model_config: ModelConfig | None = None, out_dir=None, ledger: RunLedger | None = None,
              stage_key: str | None = None, previous: Checkpoint | None = None,
              resume: Checkpoint | str | None = None, provider=None, codec=None,
              schedule: DiffusionSchedule | None = None, label: str = "",
              last_good: str | None = None) -> StageResult:
    """Train one stage and return its final checkpoint.

    Every step draws its randomness from ``(seed, stage name, step)`` and the
    batch stream is a pure function of ``seed``, so resuming from a checkpoint
    written at step ``N`` continues exactly as an uninterrupted run would.
    """
    stage_key = stage_key or stage.name
    schedule = schedule or DiffusionSchedule.make()
    ledger = ledger if ledger is not None else RunLedger(config={"stage": stage.to_dict()}, seed=seed)
    surgery = None
    start = 0
    if resume is not None:
        ck = load(resume) if not isinstance(resume, Checkpoint) else resume
        model = PixArtModel(ck.config, ck.weights)
        init_tag = ck.metadata.get("init_from", "resume")
        start = int(ck.metadata.get("step", 0))
        if ck.metadata.get("stage") != stage.name:
            raise ConfigError(f"resume checkpoint belongs to stage {ck.metadata.get('stage')!r}")
    elif model is None:
        model, init_tag, surgery = init_model(stage, model_config or ModelConfig(), seed, previous)
    else:
        init_tag = "given"
    cfg = model.config
    if cfg.variant != stage.variant:
        raise ConfigError(f"model variant {cfg.variant} does not match stage variant {stage.variant}")

    manifest = load_manifest(stage.manifest_path)
    if not manifest.records:
        raise DataError(f"manifest {stage.manifest_path} has no usable records")
    buckets = stage_buckets(stage, cfg.patch_size)
    manifest = manifest.with_buckets(buckets)
    bucket_of = {b.id: b for b in buckets}
    store = LatentStore(manifest, cfg.latent_channels, codec)
    is_dit = cfg.variant == DIT_CLASS_CONDITIONAL
    if is_dit and any(r.class_label is None for r in manifest.records):
        raise DataError("class-conditional stage needs class_label on every record")
    if provider is None:
        provider = HashingTextEmbedder(cfg.text_dim, cfg.max_text_tokens)
    elif not is_dit and provider.text_dim != cfg.text_dim:
        raise ConfigError(f"text provider dim {provider.text_dim} != model text_dim {cfg.text_dim}")

    opt = AdamW(model.params, lr=stage.lr, weight_decay=stage.weight_decay, clip_norm=stage.grad_clip)
    if resume is not None and ck.optimizer:
        opt.load_state(ck.optimizer, int(ck.metadata.get("optimizer_step", start)))

    base_meta = {"stage": stage.name, "stage_digest": stage.digest(), "seed": seed, "init_from": init_tag, "label": label}
    ledger.stage(stage_key, name=stage.name, label=label, init_from=init_tag,
                 config=stage.to_dict(), model=cfg.to_dict(), start_step=start,
                 buckets=[b.to_dict() for b in buckets])
    if out_dir is not None:
        out_dir = os.fspath(out_dir)
        os.makedirs(out_dir, exist_ok=True)

    def snapshot(step: int) -> Checkpoint:
        meta = dict(base_meta, step=step, optimizer_step=opt.step_count)
        return Checkpoint(cfg, model.state_dict(), meta, opt.state())

    if isinstance(resume, (str, os.PathLike)):
        last_good = os.fspath(resume)

    def write(step: int, name: str) -> str | None:
        nonlocal last_good
        if out_dir is None:
            return None
        path = os.path.join(out_dir, name)
        save(snapshot(step), path)
        ledger.checkpoint(stage_key, step, path)
        last_good = path
        return path

    stream = cycle_batches(manifest, buckets, stage.batch_size, seed)
    first = None
    for _ in range(start):
        _, b = next(stream)
        first = first or b
    losses = []
    for step in range(start, stage.steps):
        epoch, batch = next(stream)
        first = first or batch
        if stage.overfit:
            batch = first
        bucket = bucket_of[batch.bucket_id]
        x0 = np.stack([fit_to_bucket(store.get(r), bucket.height, bucket.width) for r in batch.records])
        rng = make_rng(seed, "train", stage.name, 0 if stage.overfit else step)
        t0 = time.perf_counter()
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                model.zero_grad()
                if is_dit:
                    labels = np.array([r.class_label for r in batch.records])
                    loss = training_loss(model, x0, None, rng, schedule, class_labels=labels)
                else:
                    cond = provider.encode([r.caption for r in batch.records])
                    loss = training_loss(model, x0, cond, rng, schedule)
                backward(loss)
                grad_norm = opt.step()
                if not all(np.isfinite(p.data).all() for p in model.params.values()):
                    raise FloatingPointError("non-finite weights after update")
        except FloatingPointError as exc:
            ledger.notice(f"numeric abort in {stage_key} at step {step}: {exc}")
            raise NumericAbort(f"non-finite value at step {step} of {stage_key}: {exc}",
                               last_good_checkpoint=last_good) from None
        wall_ms = (time.perf_counter() - t0) * 1000.0
        loss_v = float(loss.data)
        losses.append(loss_v)
        ledger.step(stage_key, step, loss=loss_v, lr=stage.lr, bucket_id=batch.bucket_id,
                    grad_norm=grad_norm, epoch=epoch, wall_ms=wall_ms)
        done = step + 1
        if stage.checkpoint_every and done % stage.checkpoint_every == 0 and done < stage.steps:
            write(done, f"step_{done:06d}.ckpt")

    final = snapshot(stage.steps)
    final_path = None
    if out_dir is not None:
        final_path = os.path.join(out_dir, "final.ckpt")
        save(final, final_path)
        ledger.checkpoint(stage_key, stage.steps, final_path)
    return StageResult(stage, stage_key, final, final_path, losses, label,
                       None if surgery is None else surgery.to_dict())


# -- plans ---------------------------------------------------------------------------


@dataclass
class PlanResult:
    final_checkpoint: Checkpoint | None
    stages: list[StageResult] = field(default_factory=list)
    ledger: RunLedger | None = None
    notices: list[str] = field(default_factory=list)


def stage_labels(stages) -> list[str]:
    """``w/o re-param`` for any non-first stage trained from scratch."""
    return [ABLATION_LABEL if i > 0 and parse_init(s.init_from)[0] == SCRATCH else ""
            for i, s in enumerate(stages)]


def validate_plan(stages) -> None:
    """Check the init chain, variants and inputs before anything trains."""
    prev_variant = None
    for i, s in enumerate(stages):
        kind, path = parse_init(s.init_from)
        where = f"stage {i} ({s.name})"
        if not s.manifest_path or not os.path.exists(s.manifest_path):
            raise PlanError(f"{where}: manifest {s.manifest_path!r} not found")
        if path is not None and not os.path.exists(path):
            raise PlanError(f"{where}: init checkpoint {path!r} not found")
        if i == 0 and kind == PREVIOUS or (i == 0 and kind == REPARAM and path is None):
            raise PlanError(f"{where}: first stage cannot initialize from a previous stage")
        if i > 0 and kind == CHECKPOINT or (i > 0 and kind == REPARAM and path is not None):
            raise PlanError(f"{where}: chain broken, init_from must reference stage {i - 1} "
                            f"('previous' or 'reparam') or be 'scratch' for an ablation")
        if kind == PREVIOUS and s.variant != prev_variant:
            raise PlanError(f"{where}: variant {s.variant} differs from stage {i - 1} ({prev_variant})")
        if kind == REPARAM:
            if s.variant != T2I_ADALN_SINGLE:
                raise PlanError(f"{where}: reparam needs variant {T2I_ADALN_SINGLE}")
            if path is None and prev_variant != DIT_CLASS_CONDITIONAL:
                raise PlanError(f"{where}: reparam needs a {DIT_CLASS_CONDITIONAL} previous stage")
        prev_variant = s.variant


def run_plan(stages, model_config: ModelConfig | None = None, seed: int = 0, out_dir=None, *,
             resume: bool = False, provider=None, codec=None, schedule=None,
             ledger: RunLedger | None = None, effective_config: dict | None = None,
             log=None) -> PlanResult:
    """Run stages in order, each initialized from its predecessor.

    With ``resume``, stages whose final checkpoint already exists under
    ``out_dir`` are loaded instead of retrained.
    """
    stages = list(stages)
    model_config = model_config or ModelConfig()
    log = log or (lambda msg: None)
    if ledger is None:
        config = effective_config or {"model": model_config.to_dict(),
                                      "stages": [s.to_dict() for s in stages]}
        path = None if out_dir is None else os.path.join(os.fspath(out_dir), "ledger.jsonl")
        ledger = RunLedger(path, config=config, seed=seed, append=resume)
    result = PlanResult(None, [], ledger)
    if not stages:
        msg = "empty plan: nothing to run"
        ledger.notice(msg)
        result.notices.append(msg)
        log(msg)
        return result
    validate_plan(stages)
    labels = stage_labels(stages)
    previous = previous_path = None
    for i, (stage, label) in enumerate(zip(stages, labels)):
        key = f"{i}_{stage.name}"
        sdir = None if out_dir is None else os.path.join(os.fspath(out_dir), key)
        final_path = None if sdir is None else os.path.join(sdir, "final.ckpt")
        ck = load(final_path) if resume and final_path and os.path.exists(final_path) else None
        if ck is not None and (ck.metadata.get("stage_digest") != stage.digest()
                               or ck.metadata.get("seed") != str(seed)):
            log(f"{key}: existing checkpoint was trained with a different recipe; retraining")
            ck = None
        if ck is not None:
            msg = f"{key}: reusing {final_path}"
            ledger.notice(msg)
            log(msg)
            res = StageResult(stage, key, ck, final_path, [], label)
        else:
            log(f"{key}: training {stage.steps} steps" + (f" [{label}]" if label else ""))
            res = run_stage(stage, None, seed, model_config=model_config, out_dir=sdir,
                            ledger=ledger, stage_key=key, previous=previous, provider=provider,
                            codec=codec, schedule=schedule, label=label, last_good=previous_path)
            if res.losses:
                log(f"{key}: loss {res.losses[0]:.4f} -> {res.losses[-1]:.4f}")
        result.stages.append(res)
        previous, previous_path = res.checkpoint, res.checkpoint_path
    result.final_checkpoint = previous
    return result
