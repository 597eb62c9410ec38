"""Operator entry point: synth, vocab, train, eval, predict, gradcheck, report.

Exit codes: 0 success, 1 usage error, 2 data/validation error.  Every
subcommand is deterministic given its flags and seed.  A --config JSON
file may supply any long-flag value (keys use underscores); explicit
flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ingest, synth, training
from .autodiff import Tape, grad_check
from .errors import TreectxError
from .models import ModelKind, classify, init_model, loss_nll, read_checkpoint, represent, write_checkpoint
from .plots import figure_path_for, render_training_curves
from .tree import AttributedTree


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _split_csv(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise TreectxError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise TreectxError(f"config {path} must be a JSON object")
    return doc


def _merged(args: argparse.Namespace, config: dict, key: str, default):
    """Flag value if given, else config file value, else the default."""
    value = getattr(args, key)
    if value is not None:
        return value
    return config.get(key, default)


def build_parser() -> _Parser:
    parser = _Parser(prog="treectx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--task", choices=synth.TASKS, default=None)
    p.add_argument("--pages", type=int, default=None)
    p.add_argument("--nodes-min", type=int, default=None)
    p.add_argument("--nodes-max", type=int, default=None)
    p.add_argument("--classes", type=str, default=None, help="comma-separated class names")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ratios", type=str, default=None, help="train,validation,test fractions")
    p.add_argument("--out", type=str, required=True, help="output directory")
    p.add_argument("--config", type=str, default=None)

    p = sub.add_parser("vocab", help="build a tag vocabulary from the train split")
    p.add_argument("--manifest", type=str, required=True)
    p.add_argument("--vocab", type=str, required=True, help="output vocabulary file")

    p = sub.add_parser("train", help="train a model and write checkpoint + CSV log")
    p.add_argument("--manifest", type=str, required=True)
    p.add_argument("--model", choices=[k.value for k in ModelKind], default=None)
    p.add_argument("--dedicated-context-kernel", action="store_true", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--mask-bbox", action="store_true", default=None)
    p.add_argument("--negatives-per-page", type=int, default=None)
    p.add_argument("--classes", type=str, default=None, help="comma-separated class names")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--vocab", type=str, default=None,
                   help="vocabulary file; read if it exists, else built and written")
    p.add_argument("--checkpoint", type=str, required=True, help="output checkpoint path")
    p.add_argument("--log", type=str, default=None, help="output CSV epoch log")
    p.add_argument("--plot", action="store_true", default=None,
                   help="render training-curve figures next to the CSV log")
    p.add_argument("--config", type=str, default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--manifest", type=str, required=True)
    p.add_argument("--split", choices=ingest.SPLITS, default="test")
    p.add_argument("--negatives-per-page", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("predict", help="classify one node of a snapshot")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--snapshot", type=str, required=True)
    p.add_argument("--node", type=int, required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference check of a model's gradients")
    p.add_argument("--model", choices=[k.value for k in ModelKind], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dedicated-context-kernel", action="store_true", default=False)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--nodes", type=int, default=8)

    p = sub.add_parser("report", help="render training-curve figures from a CSV log")
    p.add_argument("--log", type=str, required=True)
    p.add_argument("--out", type=str, default=None, help="output PNG (default: log path with .png)")

    return parser


# -- subcommand bodies --------------------------------------------------------


def _cmd_synth(args) -> int:
    config = _load_config(args.config)
    classes = _merged(args, config, "classes", "name,price")
    if isinstance(classes, str):
        classes = _split_csv(classes)
    ratios_raw = _merged(args, config, "ratios", "0.64,0.20,0.16")
    ratios = [float(r) for r in (ratios_raw.split(",") if isinstance(ratios_raw, str) else ratios_raw)]
    spec = synth.SynthSpec(
        task=_merged(args, config, "task", "local"),
        pages=int(_merged(args, config, "pages", 90)),
        nodes_min=int(_merged(args, config, "nodes_min", 20)),
        nodes_max=int(_merged(args, config, "nodes_max", 60)),
        classes=tuple(classes),
        seed=int(_merged(args, config, "seed", 0)),
    )
    entries = synth.generate(spec, args.out, ratios)
    counts = {s: sum(1 for e in entries if e.split == s) for s in ingest.SPLITS}
    print(f"wrote {len(entries)} pages to {args.out} "
          f"(train {counts['train']}, validation {counts['validation']}, test {counts['test']})")
    return 0


def _pages_for_split(manifest_path: str, split: str) -> list[ingest.Page]:
    manifest = ingest.read_manifest(manifest_path)
    return ingest.load_split(manifest, split, Path(manifest_path).parent)


def _cmd_vocab(args) -> int:
    pages = _pages_for_split(args.manifest, "train")
    vocab = ingest.build_tag_vocab(pages)
    vocab.write(args.vocab)
    print(f"wrote {len(vocab)} tags to {args.vocab}")
    return 0


def _resolve_vocab(path: str | None, train_pages) -> ingest.TagVocabulary:
    if path and Path(path).exists():
        return ingest.TagVocabulary.read(path)
    vocab = ingest.build_tag_vocab(train_pages)
    if path:
        vocab.write(path)
    return vocab


def _cmd_train(args) -> int:
    config_file = _load_config(args.config)
    classes = _merged(args, config_file, "classes", ",".join(ingest.CLASS_NAMES))
    if isinstance(classes, str):
        classes = _split_csv(classes)
    mask = ingest.BBOX_SLOTS if _merged(args, config_file, "mask_bbox", False) else ()
    cfg = training.TrainConfig(
        model=_merged(args, config_file, "model", ModelKind.MONO_BU.value),
        dedicated_context_kernel=bool(_merged(args, config_file, "dedicated_context_kernel", False)),
        epochs=int(_merged(args, config_file, "epochs", 150)),
        batch_size=int(_merged(args, config_file, "batch_size", 50)),
        learning_rate=float(_merged(args, config_file, "lr", 0.0025)),
        seed=int(_merged(args, config_file, "seed", 0)),
        feature_mask=mask,
        negatives_per_page=int(_merged(args, config_file, "negatives_per_page", 1)),
        hidden=int(_merged(args, config_file, "hidden", 150)),
        classes=tuple(classes),
        threads=int(_merged(args, config_file, "threads", 1)),
    )
    train_pages = _pages_for_split(args.manifest, "train")
    val_pages = _pages_for_split(args.manifest, "validation")
    vocab = _resolve_vocab(args.vocab, train_pages)
    train_examples = training.prepare_examples(
        train_pages, cfg.classes, vocab, cfg.feature_mask, cfg.negatives_per_page, cfg.seed
    )
    val_examples = training.prepare_examples(
        val_pages, cfg.classes, vocab, cfg.feature_mask, cfg.negatives_per_page, cfg.seed
    )
    checkpoint, logs = training.train(cfg, train_examples, val_examples, vocab)
    write_checkpoint(checkpoint, args.checkpoint)
    meta = checkpoint["metadata"]
    print(f"trained {cfg.model.value} for {cfg.epochs} epochs on {len(train_examples)} examples")
    print(f"best epoch {meta['epoch']} (validation loss {meta['val_loss']:.6f}) -> {args.checkpoint}")
    if args.log:
        training.write_epoch_csv(logs, cfg.classes, args.log)
        print(f"epoch log -> {args.log}")
        if args.plot:
            cls, rows = training.read_epoch_csv(args.log)
            fig = render_training_curves(cls, rows, figure_path_for(args.log))
            print(f"training curves -> {fig}")
    return 0


def _cmd_eval(args) -> int:
    checkpoint = read_checkpoint(args.checkpoint)
    pages = _pages_for_split(args.manifest, args.split)
    vocab = ingest.TagVocabulary(checkpoint["tag_vocab"])
    examples = training.prepare_examples(
        pages, checkpoint["classes"], vocab, checkpoint.get("feature_mask", []),
        args.negatives_per_page, args.seed,
    )
    report = training.evaluate(checkpoint, examples, args.threads)
    if args.json:
        print(json.dumps(report.as_dict(), indent=1))
    else:
        print(report.table())
    return 0


def _cmd_predict(args) -> int:
    checkpoint = read_checkpoint(args.checkpoint)
    page = ingest.load_snapshot(args.snapshot)
    pred = training.predict(checkpoint, page, args.node)
    classes = checkpoint["classes"]
    if args.json:
        print(json.dumps({
            "node": args.node,
            "predicted": classes[pred.predicted],
            "probs": {c: p for c, p in zip(classes, pred.probs.tolist())},
        }, indent=1))
    else:
        print(f"node {args.node}: {classes[pred.predicted]}")
        for c, p in zip(classes, pred.probs):
            print(f"  {c:<12} {p:.6f}")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    n = args.nodes
    parents = [None] + [int(rng.integers(0, i)) for i in range(1, n)]
    tree = AttributedTree(parents, [None] * n)
    feats = rng.uniform(-0.5, 0.5, size=(n, args.feature_dim))
    n_classes = 3
    model = init_model(
        args.model, args.feature_dim, n_classes, seed=args.seed, hidden=args.hidden,
        dedicated_context_kernel=args.dedicated_context_kernel,
    )
    targets = [int(t) for t in rng.choice(n, size=min(3, n), replace=False)]
    labels = [int(rng.integers(n_classes)) for _ in targets]

    def batch_loss():
        tape = Tape()
        losses = []
        for node, label in zip(targets, labels):
            rep = represent(tape, model, tree, node, feats)
            losses.append(loss_nll(tape, classify(tape, model, rep), label))
        return tape, tape.apply("mean", tape.apply("concat", *losses))

    err = grad_check(batch_loss, model.params(), step=1e-5)
    print(f"max relative error: {err:.3e} "
          f"({args.model}, {sum(p.value.size for p in model.params())} parameters)")
    return 0


def _cmd_report(args) -> int:
    classes, rows = training.read_epoch_csv(args.log)
    out = args.out or figure_path_for(args.log)
    fig = render_training_curves(classes, rows, out)
    print(f"training curves -> {fig}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "vocab": _cmd_vocab,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "gradcheck": _cmd_gradcheck,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except TreectxError as e:
        print(f"treectx {args.command}: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"treectx {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
