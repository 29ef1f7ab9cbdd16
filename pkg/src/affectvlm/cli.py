"""Command-line interface.

Subcommands: gen-data, render-views, rankpool, augment-preview, prompts,
train, eval-cv, infer, serve. Exit codes: 0 success, 1 usage error, 2
runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import mixaug
from .datagen import (EMOTIONS, CorpusSpec, SubjectMeta, generate_corpus,
                      load_corpus, load_corpus_spec, save_corpus)
from .dynimg import RankPoolConfig, dynamic_multiview
from .encoders import load_checkpoint, checkpoint_id
from .errors import AffectVLMError
from .prompts import class_prompt_set, expand
from .serve import (ClassifyRequest, ModelRegistry, classify, serve_forever)
from .trainer import TrainConfig, cross_validate, run_ablation, train
from .views import ViewImage, from_png, render_multiview, to_png


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="affectvlm", description=__doc__)
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("gen-data", help="generate a synthetic corpus directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--subjects", type=int, default=10)
    g.add_argument("--frames", type=int, default=8)
    g.add_argument("--points", type=int, default=2048)
    g.add_argument("--identity-scale", type=float, default=0.1)
    g.add_argument("--expression-scale", type=float, default=1.0)
    g.add_argument("--out", required=True)

    r = sub.add_parser("render-views", help="export multiview depth PNGs")
    r.add_argument("--corpus", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--frame", default="apex", help="'apex' or a frame index")
    r.add_argument("--resolution", type=int, default=64)

    k = sub.add_parser("rankpool", help="emit dynamic images (PNG + raw float32 sidecar)")
    k.add_argument("--in", dest="corpus", required=True)
    k.add_argument("--method", choices=("exact", "approximate"), default="approximate")
    k.add_argument("--out", required=True)
    k.add_argument("--resolution", type=int, default=64)

    a = sub.add_parser("augment-preview", help="before/after augmentation grids")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--n", type=int, default=4)
    a.add_argument("--out", required=True)
    a.add_argument("--epoch", type=int, default=0)
    a.add_argument("--resolution", type=int, default=64)

    pr = sub.add_parser("prompts", help="print prompt variations")
    pr.add_argument("--emotion", choices=EMOTIONS, required=True)
    pr.add_argument("--n", type=int, default=8)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--age", choices=("young", "middle-aged", "older"))
    pr.add_argument("--gender", choices=("male", "female"))
    pr.add_argument("--ethnicity", choices=("Asian", "Black", "White", "Hispanic"))

    t = sub.add_parser("train", help="train a checkpoint")
    t.add_argument("--corpus", required=True)
    t.add_argument("--config", help="TrainConfig JSON file")
    t.add_argument("--workers", type=int)
    t.add_argument("--out", required=True, help="checkpoint path (.avlm)")
    t.add_argument("--metrics", help="metrics JSONL path")

    e = sub.add_parser("eval-cv", help="10-fold subject-independent cross-validation")
    e.add_argument("--corpus", required=True)
    e.add_argument("--config", help="TrainConfig JSON file")
    e.add_argument("--report", required=True, help="output report JSON")
    e.add_argument("--ablation", action="store_true", help="also run the ablation variants")

    i = sub.add_parser("infer", help="classify three view PNGs")
    i.add_argument("--frontal", required=True)
    i.add_argument("--left", required=True)
    i.add_argument("--right", required=True)
    i.add_argument("--ckpt", required=True)

    s = sub.add_parser("serve", help="run the HTTP inference service")
    s.add_argument("--ckpt-dir", help="directory of .avlm checkpoints")
    s.add_argument("--ckpt", help="single checkpoint path")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8787)

    return p


def _load_train_config(path: str | None, workers: int | None) -> TrainConfig:
    doc = {}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    if "train" in doc and isinstance(doc["train"], dict):
        doc = doc["train"]  # benchmark.json-style nesting
    known = set(TrainConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise _UsageError(f"unknown config keys: {sorted(unknown)}")
    if "resolution" in doc:
        doc["resolution"] = tuple(doc["resolution"])
    if workers is not None:
        doc["workers"] = workers
    return TrainConfig(**doc)


def _cmd_gen_data(args) -> int:
    spec = CorpusSpec(n_subjects=args.subjects, frames_per_sequence=args.frames,
                      points_per_face=args.points, seed=args.seed,
                      identity_scale=args.identity_scale,
                      expression_scale=args.expression_scale)
    corpus = generate_corpus(spec)
    save_corpus(corpus, args.out, spec)
    print(f"wrote {len(corpus)} sequences to {args.out}")
    return 0


def _cmd_render_views(args) -> int:
    corpus = load_corpus(args.corpus)
    os.makedirs(args.out, exist_ok=True)
    res = (args.resolution, args.resolution)
    for seq in corpus:
        idx = seq.n_frames - 1 if args.frame == "apex" else int(args.frame)
        mv = render_multiview(seq, idx, res)
        for img in mv.images:
            name = f"seq_{seq.subject.subject_id:04d}_{seq.emotion}_{img.view.name}.png"
            to_png(img, os.path.join(args.out, name))
    print(f"rendered {len(corpus) * 3} view images to {args.out}")
    return 0


def _cmd_rankpool(args) -> int:
    corpus = load_corpus(args.corpus)
    os.makedirs(args.out, exist_ok=True)
    cfg = RankPoolConfig(method=args.method)
    res = (args.resolution, args.resolution)
    for seq in corpus:
        mv = dynamic_multiview(seq, cfg, res)
        for img in mv.images:
            stem = f"dyn_{seq.subject.subject_id:04d}_{seq.emotion}_{img.view.name}"
            to_png(img, os.path.join(args.out, stem + ".png"))
            with open(os.path.join(args.out, stem + ".f32"), "wb") as f:
                f.write(np.ascontiguousarray(img.pixels, dtype="<f4").tobytes())
    print(f"pooled {len(corpus) * 3} dynamic images to {args.out}")
    return 0


def _cmd_augment_preview(args) -> int:
    spec = CorpusSpec(n_subjects=10, frames_per_sequence=2, points_per_face=2048,
                      seed=args.seed)
    corpus = generate_corpus(spec)[: args.n]
    plans = mixaug.plan_epoch(len(corpus), args.seed, args.epoch)
    os.makedirs(args.out, exist_ok=True)
    res = (args.resolution, args.resolution)
    for i, seq in enumerate(corpus):
        mv = render_multiview(seq, seq.n_frames - 1, res)
        aug = mixaug.apply_plan(mv, plans[i])
        before = np.concatenate([v.pixels for v in mv.images], axis=1)
        after = np.concatenate([v.pixels for v in aug.images], axis=1)
        grid = np.concatenate([before, after], axis=0)
        to_png(ViewImage(view=mv.frontal.view, pixels=grid),
               os.path.join(args.out, f"preview_{i:02d}.png"))
    print(f"wrote {len(corpus)} before/after grids to {args.out}")
    return 0


def _cmd_prompts(args) -> int:
    if args.age and args.gender and args.ethnicity:
        meta = SubjectMeta(subject_id=0, age_group=args.age, gender=args.gender,
                           ethnicity=args.ethnicity)
        lines = expand(args.emotion, meta, args.n, seed=args.seed)
    else:
        lines = class_prompt_set(args.emotion, args.n, seed=args.seed)
    for line in lines:
        print(line)
    return 0


def _cmd_train(args) -> int:
    cfg = _load_train_config(args.config, args.workers)
    corpus = load_corpus(args.corpus)
    _, metrics = train(corpus, cfg, metrics_path=args.metrics, checkpoint_path=args.out)
    final = metrics.lines[-1] if metrics.lines else {}
    print(f"trained {len(metrics.lines)} steps; final total loss "
          f"{final.get('total', float('nan')):.4f}; checkpoint {args.out} "
          f"({checkpoint_id(args.out)})")
    return 0


def _cmd_eval_cv(args) -> int:
    cfg = _load_train_config(args.config, None)
    corpus = load_corpus(args.corpus)
    report = cross_validate(corpus, cfg)
    if args.ablation:
        ablation = run_ablation(corpus, cfg, full_report=report)
        print(ablation.pop("table"))
        report = {"full": report, "ablation": {k: v for k, v in ablation.items() if k != "full"}}
    with open(args.report, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    mean = report["mean"] if "mean" in report else report["full"]["mean"]
    print(f"cv mean accuracy {mean:.4f}; report written to {args.report}")
    return 0


def _cmd_infer(args) -> int:
    params, meta = load_checkpoint(args.ckpt)
    cfg = meta.get("config", {})
    req = ClassifyRequest(images={
        "frontal": from_png(args.frontal).pixels,
        "left": from_png(args.left).pixels,
        "right": from_png(args.right).pixels,
    })
    resp = classify(req, params, checkpoint_id(args.ckpt),
                    prompts_per_class=int(cfg.get("prompts_per_class", 8)),
                    prompt_seed=int(cfg.get("seed", 0)))
    print(json.dumps(resp.as_dict(), indent=1))
    return 0


def _cmd_serve(args) -> int:
    if args.ckpt:
        registry = ModelRegistry([args.ckpt])
    elif args.ckpt_dir:
        registry = ModelRegistry.from_dir(args.ckpt_dir)
    else:
        registry = ModelRegistry([])
    print(f"serving {len(registry.entries)} model(s) on http://{args.host}:{args.port}")
    serve_forever((args.host, args.port), registry)
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "render-views": _cmd_render_views,
    "rankpool": _cmd_rankpool,
    "augment-preview": _cmd_augment_preview,
    "prompts": _cmd_prompts,
    "train": _cmd_train,
    "eval-cv": _cmd_eval_cv,
    "infer": _cmd_infer,
    "serve": _cmd_serve,
}


def cli_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise _UsageError("a subcommand is required")
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # --help paths
        return 0 if e.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (AffectVLMError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
