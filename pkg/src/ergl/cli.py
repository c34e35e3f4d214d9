"""Command-line entry point: ``ergl <subcommand> ...``.

Every subcommand accepts ``--seed``. Failures print one ``error: ...`` line
to stderr and exit with status 1 (argument errors exit with 2).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .encoder import PseudoLabelTable, rank_top_n
from .errors import ConfigurationError, ERGLError
from .features import load_input, log_mel, read_wav, save_features
from .pipeline.checkpoint import load_checkpoint
from .pipeline.config import TrainConfig, load_config
from .pipeline.data import DatasetManifest, ManifestEntry, read_manifest, split_train_val, write_manifest
from .pipeline.synth import synth_data
from .pipeline.train import Dataset, evaluate, predict, sweep, train, training_split
from .verify import TOLERANCE, run_gradient_suite


def _extract_features(args) -> int:
    if args.manifest:
        manifest = read_manifest(args.manifest)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        entries = []
        for e in manifest.entries:
            target = out / f"{e.clip_id}.mel"
            save_features(target, load_input(e.path))
            entries.append(ManifestEntry(e.clip_id, str(target.resolve()), e.scene))
        write_manifest(out / "manifest.csv", DatasetManifest(entries, manifest.scene_vocab), relative_to=out.resolve())
        print(f"wrote {len(entries)} feature files and {out / 'manifest.csv'}")
        return 0
    if not args.inputs:
        raise ConfigurationError("give WAV files or --manifest")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for wav in args.inputs:
        spec = log_mel(read_wav(wav, Path(wav).stem))
        target = out / (Path(wav).stem + ".mel")
        save_features(target, spec)
        print(f"{wav} -> {target} [{spec.values.shape[0]} x {spec.values.shape[1]}]")
    return 0


def _rank_events(args) -> int:
    table = PseudoLabelTable.read_csv(args.labels)
    if args.manifest:
        manifest = read_manifest(args.manifest)
        ids, _ = split_train_val(manifest, args.val_fraction, np.random.default_rng(args.seed))
    else:
        ids = table.clip_ids
    totals = table.rows(ids).sum(axis=0)
    print(f"# top {args.n} events over {len(ids)} clips")
    print("event_id,event_name,sum")
    for i in rank_top_n(table, ids, args.n):
        print(f"{i},{table.event_names[i]},{totals[i]:.6g}")
    return 0


_OVERRIDES = ("epochs", "batch_size", "lr", "weight_decay", "val_fraction", "seed", "profile",
              "manifest", "labels", "out_dir")


def _train(args) -> int:
    overrides = {k: getattr(args, k) for k in _OVERRIDES}
    if args.n and len(args.n) == 1:
        overrides["n_events"] = args.n[0]
    if args.u_layers and len(args.u_layers) == 1:
        overrides["u_layers"] = args.u_layers[0]
    if args.no_edges:
        overrides["use_edges"] = False
    config = load_config(args.config, **overrides)
    if not config.manifest or not config.labels:
        raise ConfigurationError("manifest and labels must be set (config file or --manifest/--labels)")
    dataset = Dataset.load(config.manifest, config.labels)
    swept = (args.n and len(args.n) > 1) or (args.u_layers and len(args.u_layers) > 1)
    if swept:
        results = sweep(config, dataset, config.out_dir, args.n or (), args.u_layers or ())
        print("n_events,u_layers,best_epoch,best_val_acc_macro,metrics")
        for (n, u), res in results.items():
            path = Path(config.out_dir) / f"n{n}_u{u}" / "metrics.csv"
            print(f"{n},{u},{res.checkpoint.best_epoch},{res.checkpoint.best_val_acc:.4f},{path}")
        return 0
    res = train(config, dataset, config.out_dir)
    last = res.metrics[-1]
    print(f"trained {config.epochs} epochs; final train loss {last.train_loss:.4f}")
    print(f"best epoch {res.checkpoint.best_epoch}, val class-average accuracy {res.checkpoint.best_val_acc:.4f}")
    print(f"checkpoint: {Path(config.out_dir) / 'model.ckpt'}")
    return 0


def _evaluate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    manifest = read_manifest(args.manifest)
    dataset = Dataset(manifest)
    ids = None
    if args.split != "all":
        train_ids, val_ids = training_split(TrainConfig.from_dict(ckpt.config), manifest)
        ids = train_ids if args.split == "train" else val_ids
    res = evaluate(ckpt, dataset, ids)
    print("scene,accuracy")
    for scene, acc in res.per_class.items():
        print(f"{scene},{acc:.4f}")
    print(f"class_average,{res.macro:.4f}")
    print(f"overall,{res.overall:.4f}")
    return 0


def _predict(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    pred = predict(ckpt, args.input)
    print(f"scene: {pred.scene}")
    print("scene scores:")
    for scene, p in pred.scene_scores.items():
        print(f"  {scene}: {p:.4f}")
    print("event probabilities:")
    for name, p in pred.event_probabilities.items():
        print(f"  {name}: {p:.4f}")
    return 0


def _gradcheck(args) -> int:
    results = run_gradient_suite(args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name:<28} rel err {r.error:.2e}  {r.seconds:.2f}s")
    failed = [r.name for r in results if not r.passed]
    total = sum(r.seconds for r in results)
    print(f"{len(results) - len(failed)}/{len(results)} checks below {TOLERANCE:g} in {total:.1f}s")
    if failed:
        print(f"error: gradient check failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _synth_data(args) -> int:
    ds = synth_data(
        args.out_dir,
        n_scenes=args.n_scenes,
        clips_per_scene=args.clips_per_scene,
        n_events=args.n_events,
        seed=args.seed,
        duration=args.duration,
        vocab_size=args.vocab_size,
    )
    print(f"manifest: {ds.manifest_path}")
    print(f"pseudo-labels: {ds.labels_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergl", description="Event relational graph scene classifier.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=None if name == "train" else 0, help="random seed")
        p.set_defaults(func=func)
        return p

    p = command("extract-features", _extract_features, "compute 64-bin log-mel features")
    p.add_argument("inputs", nargs="*", help="WAV files (16 kHz mono)")
    p.add_argument("--manifest", help="manifest of WAV clips; writes a feature manifest alongside")
    p.add_argument("--out-dir", default="features")

    p = command("rank-events", _rank_events, "print the n most probable events")
    p.add_argument("--labels", required=True, help="pseudo-label CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--manifest", help="rank over the training split of this manifest only")
    p.add_argument("--val-fraction", type=float, default=0.30)

    p = command("train", _train, "train a model (several --n/--u-layers values run a sweep)")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--n", type=int, nargs="+", help="number of event nodes")
    p.add_argument("--u-layers", type=int, nargs="+", help="number of GatedGCN layers")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--profile", help="backbone profile: full, test or pool-only")
    p.add_argument("--manifest")
    p.add_argument("--labels")
    p.add_argument("--out-dir")
    p.add_argument("--no-edges", action="store_true", help="ablation: zero all learned edges")

    p = command("evaluate", _evaluate, "per-class and class-average accuracy of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["all", "train", "val"], default="all")

    p = command("predict", _predict, "classify one WAV or .mel file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)

    command("gradcheck", _gradcheck, "finite-difference check of every gradient")

    p = command("synth-data", _synth_data, "write a synthetic tone-event dataset")
    p.add_argument("--out-dir", default="synth")
    p.add_argument("--n-scenes", type=int, default=2)
    p.add_argument("--clips-per-scene", type=int, default=32)
    p.add_argument("--n-events", type=int, default=6)
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--duration", type=float, default=1.0, help="clip length in seconds")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ERGLError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
