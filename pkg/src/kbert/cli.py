"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Diagnostics go to
stderr; data goes to stdout or --out.  Defaults can come from a key=value
--config file; explicit flags win over the file, the file wins over
built-ins.  KBERT_SEED in the environment supplies the seed when neither a
flag nor the config file does.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import probe as probe_mod
from .checkpoint import inspect_checkpoint, load_checkpoint, save_checkpoint
from .config import Ablation, ModelConfig, TrainConfig
from .data import load_classification_tsv, load_conll
from .embedding import embed_batch
from .encoder import encoder_forward, wrap_params
from .heads import init_head
from .kg import load_kg
from .model import KBertModel, prepare_input
from .tokenizer import Vocabulary, build_vocab
from .trainer import evaluate, train


class UsageError(Exception):
    """Bad flags or inconsistent options; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we want exit 1
        raise UsageError(message)


_MODEL_KEYS = {
    "layers": int,
    "heads": int,
    "hidden": int,
    "d_ff": int,
    "max_seq_len": int,
    "dropout": float,
    "tokenize_mode": str,
}
_TRAIN_KEYS = {"lr": float, "batch_size": int, "epochs": int}


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--d-ff", dest="d_ff", type=int)
    p.add_argument("--max-seq-len", dest="max_seq_len", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--tokenize-mode", dest="tokenize_mode", choices=["whitespace", "char"])


def _add_ablation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-kg", action="store_true", help="drop all KG branches")
    p.add_argument(
        "--no-soft-position", action="store_true", help="use flattened order positions"
    )
    p.add_argument(
        "--no-visible-matrix", action="store_true", help="make every token visible"
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file with default flag values")
    p.add_argument("--seed", type=int, help="RNG seed (default: $KBERT_SEED or 0)")
    p.add_argument("--out", help="write data output to this path instead of stdout")


def build_parser() -> _Parser:
    parser = _Parser(prog="kbert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    kg_p = sub.add_parser("kg", help="knowledge graph utilities")
    kg_sub = kg_p.add_subparsers(dest="kg_command", metavar="action")
    stats = kg_sub.add_parser("stats", help="triple/entity/dropped counts")
    stats.add_argument("path", help="KG TSV file")
    _add_common(stats)

    inject = sub.add_parser("inject", help="dump the injected sequence for a sentence")
    inject.add_argument("--kg", required=True, help="KG TSV file")
    inject.add_argument("--text", required=True, help="input sentence")
    inject.add_argument("--format", choices=["json", "tsv"], default="json")
    _add_model_flags(inject)
    _add_ablation_flags(inject)
    _add_common(inject)

    tr = sub.add_parser("train", help="fine-tune on a labeled dataset")
    tr.add_argument("--task", choices=["classify", "tag"], required=True)
    tr.add_argument("--train", required=True, dest="train_path", help="training data")
    tr.add_argument("--dev", dest="dev_path", help="held-out data scored every epoch")
    tr.add_argument("--kg", help="KG TSV file")
    tr.add_argument("--vocab", help="vocabulary file (default: built from data)")
    tr.add_argument("--save", help="write the trained model checkpoint here")
    tr.add_argument("--lr", type=float)
    tr.add_argument("--batch-size", dest="batch_size", type=int)
    tr.add_argument("--epochs", type=int)
    _add_model_flags(tr)
    _add_ablation_flags(tr)
    _add_common(tr)

    ev = sub.add_parser("eval", help="score a checkpoint on a dataset")
    ev.add_argument("--ckpt", required=True, help="checkpoint file")
    ev.add_argument("--data", required=True, help="dataset matching the head kind")
    ev.add_argument("--kg", help="KG TSV file")
    _add_ablation_flags(ev)
    _add_common(ev)

    trace = sub.add_parser("trace", help="dump attention rows for one input")
    trace.add_argument("--layer", type=int, required=True, help="1-based layer index")
    trace.add_argument("--head", type=int, required=True, help="0-based head index")
    trace.add_argument("--text", required=True)
    trace.add_argument("--kg", help="KG TSV file")
    trace.add_argument("--ckpt", help="checkpoint; default is a fresh seeded model")
    _add_model_flags(trace)
    _add_ablation_flags(trace)
    _add_common(trace)

    ck = sub.add_parser("ckpt", help="checkpoint utilities")
    ck_sub = ck.add_subparsers(dest="ckpt_command", metavar="action")
    insp = ck_sub.add_parser("inspect", help="print header and tensor inventory")
    insp.add_argument("path", help="checkpoint file")
    _add_common(insp)

    pr = sub.add_parser("probe", help="run the synthetic ablation experiment")
    pr.add_argument("--misleading", action="store_true", help="wrong-keyword variant")
    pr.add_argument("--seeds", type=int, default=5, help="number of seeds (from --seed)")
    pr.add_argument("--train-size", dest="train_size", type=int, default=2000)
    pr.add_argument("--test-size", dest="test_size", type=int, default=500)
    pr.add_argument("--epochs", type=int, default=6)
    pr.add_argument("--format", choices=["json", "csv"], default="json")
    _add_common(pr)

    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(args, key: str, typ, fallback):
    """Flag value if given, else config-file value, else fallback."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    file_cfg = getattr(args, "_file_cfg", {})
    if key in file_cfg:
        try:
            raw = file_cfg[key]
            if typ is bool:
                return raw.lower() in ("1", "true", "yes")
            return typ(raw)
        except ValueError as exc:
            raise UsageError(f"config value {key}={file_cfg[key]!r}: {exc}") from exc
    return fallback


def _seed(args) -> int:
    env = os.environ.get("KBERT_SEED")
    env_default = int(env) if env is not None and env.isdigit() else 0
    return _resolve(args, "seed", int, env_default)


def _model_config(args) -> ModelConfig:
    defaults = ModelConfig()
    kwargs = {
        key: _resolve(args, key, typ, getattr(defaults, key))
        for key, typ in _MODEL_KEYS.items()
    }
    config = ModelConfig(**kwargs)
    config.validate()
    return config


def _ablation(args) -> Ablation:
    return Ablation(
        use_kg=not getattr(args, "no_kg", False),
        use_soft_position=not getattr(args, "no_soft_position", False),
        use_visible_matrix=not getattr(args, "no_visible_matrix", False),
    )


def _emit(args, text: str) -> None:
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out}", file=sys.stderr)
    else:
        print(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _cmd_kg_stats(args) -> int:
    kg = load_kg(args.path)
    _emit(
        args,
        _json(
            {
                "triples": len(kg.triples),
                "entities": kg.entity_count,
                "dropped": kg.dropped,
            }
        ),
    )
    return 0


def _injection_payload(args):
    kg = load_kg(args.kg)
    config = _model_config(args)
    corpus = [args.text] + [f"{t.relation} {t.tail}" for t in kg.triples]
    vocab = build_vocab(corpus, min_count=1, mode=config.tokenize_mode)
    model = KBertModel(config, vocab, params={})
    prep = prepare_input(model, args.text, kg, _ablation(args))
    visible01 = (prep.visible == 0.0).astype(int)
    return {
        "tokens": [t.surface for t in prep.seq.tokens],
        "hard_positions": list(range(len(prep.seq.tokens))),
        "soft_positions": [int(p) for p in prep.positions],
        "segments": [int(s) for s in prep.segments],
        "branch_ids": list(prep.seq.branch_ids),
        "visible": visible01.tolist(),
    }


def _cmd_inject(args) -> int:
    payload = _injection_payload(args)
    if args.format == "json":
        _emit(args, _json(payload))
        return 0
    lines = ["token\thard\tsoft\tsegment\tbranch"]
    for i, tok in enumerate(payload["tokens"]):
        lines.append(
            f"{tok}\t{i}\t{payload['soft_positions'][i]}"
            f"\t{payload['segments'][i]}\t{payload['branch_ids'][i]}"
        )
    lines.append("")
    for row in payload["visible"]:
        lines.append("\t".join(str(v) for v in row))
    _emit(args, "\n".join(lines))
    return 0


def _load_dataset(path: str, task: str):
    if task == "classify":
        return load_classification_tsv(path)
    return load_conll(path)


def _cmd_train(args) -> int:
    seed = _seed(args)
    config = _model_config(args)
    train_data, labels = _load_dataset(args.train_path, args.task)
    dev_data = None
    if args.dev_path:
        dev_data, dev_labels = _load_dataset(args.dev_path, args.task)
        missing = sorted(set(dev_labels) - set(labels))
        if missing:
            raise ValueError(f"dev labels never seen in training data: {missing}")
    kg = load_kg(args.kg) if args.kg else None
    if args.vocab:
        vocab = Vocabulary.load(args.vocab)
    else:
        corpus = [
            ex.text if ex.text is not None else " ".join(ex.tokens or [])
            for ex in train_data
        ]
        if kg is not None:
            corpus += [f"{t.relation} {t.tail}" for t in kg.triples]
        vocab = build_vocab(corpus, min_count=1, mode=config.tokenize_mode)
    model = KBertModel.init(config, vocab, seed=seed)
    head = init_head(args.task, labels, config.hidden, seed=seed + 1)
    defaults = TrainConfig()
    cfg = TrainConfig(
        lr=_resolve(args, "lr", float, defaults.lr),
        batch_size=_resolve(args, "batch_size", int, defaults.batch_size),
        epochs=_resolve(args, "epochs", int, defaults.epochs),
        seed=seed,
        ablation=_ablation(args),
    )
    print(
        f"training {args.task} head on {len(train_data)} examples, "
        f"{cfg.epochs} epochs, seed {seed}",
        file=sys.stderr,
    )
    _, history = train(model, head, train_data, dev_data, kg, cfg)
    for row in history:
        print(
            "  " + " ".join(f"{k}={v:.4f}" for k, v in row.items()), file=sys.stderr
        )
    if args.save:
        save_checkpoint(args.save, model, head)
        print(f"saved checkpoint to {args.save}", file=sys.stderr)
    _emit(args, _json({"history": history, "labels": labels, "seed": seed}))
    return 0


def _cmd_eval(args) -> int:
    model, head = load_checkpoint(args.ckpt)
    if head is None:
        raise ValueError("checkpoint has no task head; train one first")
    data, labels = _load_dataset(args.data, head.kind)
    missing = sorted(set(labels) - set(head.labels))
    if missing:
        raise ValueError(f"dataset labels unknown to the checkpoint: {missing}")
    kg = load_kg(args.kg) if args.kg else None
    metrics = evaluate(model, head, data, kg, _ablation(args))
    _emit(args, _json({"metrics": metrics, "examples": len(data)}))
    return 0


def _cmd_trace(args) -> int:
    if args.ckpt:
        model, _ = load_checkpoint(args.ckpt)
    else:
        config = _model_config(args)
        corpus = [args.text]
        kg = load_kg(args.kg) if args.kg else None
        if kg is not None:
            corpus += [f"{t.relation} {t.tail}" for t in kg.triples]
        vocab = build_vocab(corpus, min_count=1, mode=config.tokenize_mode)
        model = KBertModel.init(config, vocab, seed=_seed(args))
    kg = load_kg(args.kg) if args.kg else None
    if not 1 <= args.layer <= model.config.layers:
        raise UsageError(
            f"--layer must be in 1..{model.config.layers}, got {args.layer}"
        )
    if not 0 <= args.head < model.config.heads:
        raise UsageError(
            f"--head must be in 0..{model.config.heads - 1}, got {args.head}"
        )
    prep = prepare_input(model, args.text, kg, _ablation(args))
    params = wrap_params(model.params, trainable=False)
    h0 = embed_batch(
        params["embed.token"],
        params["embed.position"],
        params["embed.segment"],
        prep.ids[None, :],
        prep.positions[None, :],
        prep.segments[None, :],
    )
    _, hidden = encoder_forward(h0, prep.visible[None], params, model.config)
    scores = hidden.scores[args.layer - 1][0, args.head]
    _emit(
        args,
        _json(
            {
                "layer": args.layer,
                "head": args.head,
                "tokens": [t.surface for t in prep.seq.tokens],
                "soft_positions": [int(p) for p in prep.positions],
                "scores": [[float(v) for v in row] for row in scores],
            }
        ),
    )
    return 0


def _cmd_ckpt_inspect(args) -> int:
    _emit(args, _json(inspect_checkpoint(args.path)))
    return 0


def _cmd_probe(args) -> int:
    base = _seed(args)
    seeds = tuple(range(base, base + args.seeds))
    rows = probe_mod.run_probe_experiment(
        misleading=args.misleading,
        seeds=seeds,
        n_train=args.train_size,
        n_test=args.test_size,
        epochs=args.epochs,
    )
    means = probe_mod.summarize(rows)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf, fieldnames=["probe", "cell", "seed", "accuracy", "final_train_loss"]
        )
        writer.writeheader()
        writer.writerows(rows)
        _emit(args, buf.getvalue().rstrip("\n"))
        return 0
    _emit(
        args,
        _json(
            {
                "probe": "misleading" if args.misleading else "clean",
                "seeds": list(seeds),
                "mean_accuracy": means,
                "rows": rows,
            }
        ),
    )
    return 0


_DISPATCH = {
    "inject": _cmd_inject,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "trace": _cmd_trace,
    "probe": _cmd_probe,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    if args.command == "kg" and getattr(args, "kg_command", None) is None:
        print("error: kg requires an action (stats)", file=sys.stderr)
        return 1
    if args.command == "ckpt" and getattr(args, "ckpt_command", None) is None:
        print("error: ckpt requires an action (inspect)", file=sys.stderr)
        return 1
    try:
        if getattr(args, "config", None):
            args._file_cfg = _read_config_file(args.config)
        else:
            args._file_cfg = {}
        if args.command == "kg":
            return _cmd_kg_stats(args)
        if args.command == "ckpt":
            return _cmd_ckpt_inspect(args)
        return _DISPATCH[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
