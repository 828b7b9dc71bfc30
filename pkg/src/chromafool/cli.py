"""Command-line entry points.

Subcommands: gen-synthetic, attack, universal, defend, defend-eval,
oracle-check.  Run ``chromafool <subcommand> --help`` for flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import defense, harness, universal
from .attack import AttackRecord
from .config import load_config, make_attack_config
from .conformance import run_oracle_check
from .imagecore import load_image
from .oracle import OracleSession, build_oracle, parse_oracle_spec
from .transforms import TransformRanges


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chromafool",
        description="Color-filter attacks on face pipelines, and defenses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic spoof corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("attack", help="attack every spoof entry of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--oracle", default=None,
                   help="builtin:colorgate | builtin:always-spoof | "
                        'exec:"cmd ..." | http:URL')
    p.add_argument("--variant", choices=["as", "woq", "full"], required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--deterministic", action="store_true",
                   help="serial execution, bit-reproducible output")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("universal", help="cluster converged filters and "
                                         "evaluate the universal colors")
    p.add_argument("--records", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--eval-manifest", required=True)
    p.add_argument("--oracle", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", type=int, default=40)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("defend", help="train the toy anti-spoofing classifier")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--mode", choices=["plain", "colorat"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("defend-eval", help="defense metrics of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--colors", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("oracle-check", help="golden-transcript conformance probe")
    p.add_argument("--oracle", required=True)
    p.add_argument("--config", default=None)
    return parser


def _resolve_oracle(args_oracle, app):
    text = args_oracle or app.oracle_spec_text or "builtin:colorgate"
    return parse_oracle_spec(text)


def _manifest_dataset(manifest):
    dataset = []
    for entry in manifest:
        img = load_image(manifest.resolve(entry))
        dataset.append((img, 1 if entry.label == "bonafide" else 0))
    return dataset


def _cmd_gen_synthetic(args) -> int:
    manifest = harness.generate_synthetic(args.n, args.seed, args.out)
    print(f"wrote {len(manifest)} images under {args.out}")
    return 0


def _cmd_attack(args) -> int:
    app = load_config(args.config)
    spec = _resolve_oracle(args.oracle, app)
    config = make_attack_config(app, args.variant, seed=args.seed)
    manifest = harness.load_manifest(args.manifest)
    records, report = harness.run_batch(
        manifest, spec, config, out_dir=args.out,
        workers=args.workers, deterministic=args.deterministic,
        secret_chroma=app.secret_chroma, tolerance=app.tolerance,
        quality_threshold=app.quality_pass_threshold,
    )
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_universal(args) -> int:
    app = load_config(args.config)
    spec = _resolve_oracle(args.oracle, app)
    with open(args.records) as fh:
        records = [AttackRecord.from_dict(d)
                   for d in json.load(fh)["records"]]
    converged = [(r.final_filter, r.image_id) for r in records
                 if r.success and r.final_filter is not None]
    if len(converged) < args.k:
        print(f"need at least k={args.k} converged filters, "
              f"got {len(converged)}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else app.attack.get("seed", 0)
    clusters = universal.cluster_filters(
        [c[0] for c in converged], args.k, seed=seed,
        member_ids=[c[1] for c in converged])

    manifest = harness.load_manifest(args.eval_manifest)
    gallery = harness.load_gallery(manifest)
    entries = [(load_image(manifest.resolve(e)), e.identity)
               for e in manifest]
    ranges = TransformRanges(**app.transforms)
    rows = []
    for color_id, cluster in enumerate(clusters, start=1):
        oracle = build_oracle(spec, secret_chroma=app.secret_chroma,
                              tolerance=app.tolerance, gallery=gallery)
        session = OracleSession(oracle, args.n_samples * len(entries) + 1)
        rng = np.random.default_rng(harness.derive_seed(seed, f"color{color_id}"))
        result = universal.evaluate_universal(
            cluster.center, entries, session, ranges, args.n_samples, rng,
            quality_threshold=app.quality_pass_threshold)
        session.close()
        rows.append({"color_id": color_id, **cluster.to_dict(),
                     **result.to_dict()})
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "universal.json")
    with open(out_path, "w") as fh:
        json.dump({"clusters": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps({"clusters": rows}, indent=2, sort_keys=True))
    return 0


def _cmd_defend(args) -> int:
    manifest = harness.load_manifest(args.train_manifest)
    dataset = _manifest_dataset(manifest)
    if args.mode == "plain":
        kwargs = {}
        if args.epochs is not None:
            kwargs["epochs"] = args.epochs
        if args.lr is not None:
            kwargs["learning_rate"] = args.lr
        model = defense.train_plain(dataset, seed=args.seed, **kwargs)
    else:
        cfg = defense.ColorAtConfig(seed=args.seed)
        if args.epochs is not None:
            cfg = defense.ColorAtConfig(epochs=args.epochs,
                                        learning_rate=args.lr or cfg.learning_rate,
                                        seed=args.seed)
        model = defense.train_colorat(dataset, cfg)
    with open(args.out, "w") as fh:
        fh.write(model.to_json())
        fh.write("\n")
    print(f"model written to {args.out}")
    return 0


def _cmd_defend_eval(args) -> int:
    with open(args.model) as fh:
        model = defense.ToyClassifier.from_json(fh.read())
    manifest = harness.load_manifest(args.manifest)
    dataset = _manifest_dataset(manifest)
    metrics = defense.defense_metrics(model, dataset, n_colors=args.colors,
                                      seed=args.seed)
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_oracle_check(args) -> int:
    app = load_config(args.config)
    spec = parse_oracle_spec(args.oracle)
    ok, detail = run_oracle_check(spec, secret_chroma=app.secret_chroma,
                                  tolerance=app.tolerance)
    print(("PASS: " if ok else "FAIL: ") + detail)
    return 0 if ok else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "gen-synthetic": _cmd_gen_synthetic,
        "attack": _cmd_attack,
        "universal": _cmd_universal,
        "defend": _cmd_defend,
        "defend-eval": _cmd_defend_eval,
        "oracle-check": _cmd_oracle_check,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
