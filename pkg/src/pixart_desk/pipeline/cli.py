"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import yaml

from ..dataops.captions import caption_stats, format_report, stats_report
from ..dataops.manifest import load_manifest, save_manifest
from ..errors import ConfigError, DataError, NumericAbort
from ..reparam.checkpoint import CheckpointError, load, save
from ..reparam.surgery import reparameterize
from .autolabel import DEFAULT_PROMPT, RetryPolicy, TcpTransport, autolabel, write_outcomes
from .config import build_model_config, build_stages, effective_config, load_config
from .ledger import RunLedger
from .sampling import sample_to_dir
from .stages import run_plan, run_stage
from .synthetic import make_two_mode_dataset
from .text import load_embedding_file

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _say(msg: str) -> None:
    print(msg, flush=True)


def cmd_plan(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = args.out or cfg["out_dir"]
    res = run_plan(build_stages(cfg), build_model_config(cfg), int(cfg["seed"]), out_dir,
                   resume=args.resume, effective_config=effective_config(cfg), log=_say)
    for s in res.stages:
        _say(f"{s.stage_key}: {s.checkpoint_path}" + (f" [{s.label}]" if s.label else ""))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    stages = build_stages(cfg)
    if not stages:
        raise ConfigError("config has no stages")
    if not 0 <= args.stage < len(stages):
        raise ConfigError(f"--stage {args.stage} out of range (config has {len(stages)} stages)")
    stage = stages[args.stage]
    seed = int(cfg["seed"])
    out_dir = args.out or os.path.join(cfg["out_dir"], f"{args.stage}_{stage.name}")
    ledger = RunLedger(os.path.join(out_dir, "ledger.jsonl"), config=effective_config(cfg),
                       seed=seed, append=args.resume is not None)
    previous = load(args.init) if args.init else None
    res = run_stage(stage, None, seed, model_config=build_model_config(cfg), out_dir=out_dir,
                    ledger=ledger, stage_key=f"{args.stage}_{stage.name}", previous=previous,
                    resume=args.resume)
    if res.losses:
        _say(f"loss {res.losses[0]:.4f} -> {res.losses[-1]:.4f}")
    _say(f"checkpoint: {res.checkpoint_path}")
    return EXIT_OK


def cmd_sample(args) -> int:
    prompts = list(args.prompt or [])
    if args.prompt_file:
        with open(args.prompt_file, encoding="utf-8") as fh:
            prompts += [line.rstrip("\n") for line in fh if line.strip()]
    emb = load_embedding_file(args.embeddings) if args.embeddings else None
    run = sample_to_dir(args.checkpoint, prompts, args.out, embeddings=emb, seeds=args.seed,
                        cfg_scales=args.cfg, cfg_sweep=args.cfg_sweep, kind=args.sampler,
                        steps=args.steps, height=args.height, width=args.width)
    for n in run.notices:
        _say(n)
    _say(f"wrote {len(run.outputs)} samples to {args.out}")
    return EXIT_OK


def cmd_reparam(args) -> int:
    target, report = reparameterize(load(args.source), t_star=args.t_star, seed=args.seed)
    save(target, args.out)
    rep = report.to_dict()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(rep, fh, indent=2, sort_keys=True)
    _say(f"max modulation residual at t={args.t_star}: {report.max_modulation_residual:.3e}")
    _say(f"copied {len(report.copied)}, derived {len(report.derived)}, zero {len(report.zero_initialized)}, "
         f"fresh {len(report.freshly_initialized)}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    def stats(path):
        m = load_manifest(path)
        caps = [r.caption for r in m.records]
        return caption_stats(caps, args.threshold)

    a = stats(args.manifest)
    out = {"manifest": a.to_dict()}
    if args.compare:
        b = stats(args.compare)
        names = (args.manifest, args.compare) if args.manifest != args.compare else ("A", "B")
        rep = stats_report(a, b, names)
        out = {"manifest": a.to_dict(), "compare": b.to_dict(), "report": rep}
        table = format_report(rep)
    else:
        table = format_report({"rows": {args.manifest: {
            "VN/DN": a.valid_ratio, "VN": a.valid_nouns, "DN": a.distinct_nouns,
            "Total Noun": a.total_nouns, "Average": a.avg_per_image}}})
    _say(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
        with open(args.out + ".txt", "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
    return EXIT_OK


def cmd_autolabel(args) -> int:
    manifest = load_manifest(args.manifest)
    try:
        transport = TcpTransport.from_endpoint(args.endpoint, timeout=args.timeout)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    policy = RetryPolicy(base=args.base_delay, factor=2.0, max_retries=args.max_retries)
    res = autolabel(manifest, transport, args.prompt, args.concurrency, policy)
    save_manifest(res.manifest.records, args.out)
    ledger_path = args.ledger or args.out + ".ledger.jsonl"
    write_outcomes(res.outcomes, ledger_path)
    qpath = args.out + ".quarantine.jsonl"
    with open(qpath, "w", encoding="utf-8") as fh:
        for rec, reason in res.quarantined:
            fh.write(json.dumps({**rec.to_dict(), "reason": reason}, sort_keys=True) + "\n")
    _say(f"labeled {len(res.manifest.records)}, quarantined {len(res.quarantined)}")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = os.path.abspath(args.out)
    square = make_two_mode_dataset(os.path.join(out, "data"), n=args.n, seed=args.seed)
    multi = make_two_mode_dataset(os.path.join(out, "data_multi_aspect"), n=args.n, seed=args.seed + 1,
                                  sizes=((8, 8), (4, 16), (16, 4)))
    plan = {
        "seed": args.seed,
        "out_dir": os.path.join(out, "run"),
        "model": {"hidden_size": 64, "depth": 4, "num_heads": 4, "text_dim": 64, "num_classes": 2},
        "stage_defaults": {"lr": 1e-3, "batch_size": 8, "resolution": 8, "checkpoint_every": 100},
        "stages": [
            {"name": "pixel_dependency", "variant": "dit_class_conditional", "steps": 200,
             "manifest_path": square},
            {"name": "text_image_align", "init_from": "reparam", "steps": 200, "manifest_path": square},
            {"name": "high_aesthetics", "init_from": "previous", "steps": 100, "multi_aspect": True,
             "bucket_count": 5, "manifest_path": multi},
        ],
    }
    with open(os.path.join(out, "plan.yaml"), "w", encoding="utf-8") as fh:
        yaml.safe_dump(plan, fh, sort_keys=False)
    _say(f"wrote {square}, {multi} and {os.path.join(out, 'plan.yaml')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pixart-desk", description="Desk-scale text-to-image diffusion.")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("plan", help="run a multi-stage training plan")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", help="override out_dir")
    p.add_argument("--resume", action="store_true", help="reuse finished stages under out_dir")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", help="run a single stage from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", type=int, default=0, help="index into the config's stages")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out")
    p.add_argument("--init", help="checkpoint standing in for the previous stage's output")
    p.add_argument("--resume", help="continue from a checkpoint written by this stage")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample latents from a text-to-image checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", action="append")
    p.add_argument("--prompt-file")
    p.add_argument("--embeddings", help=".npz with tokens [B,S,D] and optional mask [B,S]")
    p.add_argument("--seed", type=int, nargs="+", default=[0])
    p.add_argument("--cfg", type=float, nargs="+", default=[4.5])
    p.add_argument("--cfg-sweep", action="store_true", help="use cfg scales 1.5, 2, 3, 4, 5, 6")
    p.add_argument("--sampler", choices=["dpm_solver_2", "iddpm_ancestral"], default="dpm_solver_2")
    p.add_argument("--steps", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reparam", help="convert a class-conditional checkpoint to adaLN-single")
    p.add_argument("--source", required=True)
    p.add_argument("--t-star", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_reparam)

    p = sub.add_parser("analyze", help="noun statistics of a manifest's captions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--compare", help="second manifest for a side-by-side report")
    p.add_argument("--threshold", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("autolabel", help="re-caption a manifest through a captioning service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--endpoint", required=True, help="tcp://host:port")
    p.add_argument("--out", required=True)
    p.add_argument("--prompt", default=DEFAULT_PROMPT)
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--max-retries", type=int, default=5)
    p.add_argument("--base-delay", type=float, default=1.0)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--ledger")
    p.set_defaults(func=cmd_autolabel)

    p = sub.add_parser("synth", help="write a synthetic desk dataset and a 3-stage plan")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericAbort as exc:
        print(f"numeric abort: {exc}; last good checkpoint: {exc.last_good_checkpoint}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
