"""Command-line interface: ``trigger-gnn <command> [options]``.

Every :class:`RunConfig` field is also a flag (``--hidden-dim 32``,
``--no-crf``). Flags override ``--config`` file values, and
``TRIGGER_GNN_CHECKPOINT_DIR`` overrides the file's checkpoint directory.
Metrics go to ``<checkpoint_dir>/<command>.jsonl`` unless ``--log`` says
otherwise; reports are JSON files next to the checkpoints.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path
from typing import List, Optional, Sequence

from .autodiff import CheckpointError
from .config import ARCHITECTURE_FIELDS, ConfigError, RunConfig, format_config, load_config
from .corpus.io import CorpusFormatError, parse_conll, serialize_conll, serialize_triggers
from .corpus.synthetic import SyntheticConfig, generate_synthetic, split
from .corpus.types import Sentence
from .encoder import TriggerEncoder
from .graph import dump_graph
from .model import TriggerGNNTagger
from . import pipeline

TRIGGER_CKPT = "triggers.ckpt"
MODEL_CKPT = "model.ckpt"


class CommandError(RuntimeError):
    pass


# -- argument parsing -------------------------------------------------------------
def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration (overrides --config values)")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if "bool" in f.type:
            group.add_argument(flag, dest=f.name, nargs="?", const="true", default=None,
                               metavar="BOOL")
        else:
            group.add_argument(flag, dest=f.name, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trigger-gnn",
                                     description="Trigger-enhanced graph NER on nested corpora.")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--log", help="JSON-lines metric log (default <checkpoint_dir>/<command>.jsonl)")
        _add_config_flags(p)
        return p

    command("train-triggers", "train the trigger encoder and its retrieval table")

    p = command("train", "train the NER model")
    p.add_argument("--trigger-checkpoint", help=f"default <checkpoint_dir>/{TRIGGER_CKPT}")
    p.add_argument("--graph-dump", help="write the text graphs of the training sentences here")

    p = command("eval", "score a saved model on the test set")
    p.add_argument("--model", help=f"default <checkpoint_dir>/{MODEL_CKPT}")

    p = command("predict", "tag new sentences")
    p.add_argument("--model", help=f"default <checkpoint_dir>/{MODEL_CKPT}")
    p.add_argument("--input", required=True, help="CoNLL file (tag columns optional) or plain text")
    p.add_argument("--format", choices=("conll", "text"), default="conll",
                   help="text: one whitespace-tokenized sentence per line")
    p.add_argument("--output", help="CoNLL output with predicted tags (default stdout)")
    p.add_argument("--spans", help="JSON-lines dump of predicted spans")
    p.add_argument("--graph-dump", help="write the text graphs of the input sentences here")

    p = command("ablate", "train and score every ablation row")
    p.add_argument("--seeds", default=None, help="comma-separated seeds (default: the config seed)")
    p.add_argument("--trigger-checkpoint", help=f"default <checkpoint_dir>/{TRIGGER_CKPT}")

    p = command("sweep-steps", "train and score one model per message-passing step count")
    p.add_argument("--steps-list", default="1,2,3,4,5,6")
    p.add_argument("--trigger-checkpoint", help=f"default <checkpoint_dir>/{TRIGGER_CKPT}")

    p = sub.add_parser("synth", help="write a synthetic corpus and a matching config file")
    p.add_argument("--out", required=True)
    p.add_argument("--n-sentences", type=int, default=450)
    p.add_argument("--types", default="PER,LOC,ORG")
    p.add_argument("--nesting-rate", type=float, default=0.3)
    p.add_argument("--ambiguity-rate", type=float, default=0.3)
    p.add_argument("--max-gap", type=int, default=2)
    p.add_argument("--split", default="0.6,0.2,0.2", help="train,dev,test fractions")
    p.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace, environ=None) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    return load_config(args.config, overrides, environ)


def _explicit_architecture(args: argparse.Namespace) -> bool:
    return args.config is not None or any(getattr(args, n) is not None for n in ARCHITECTURE_FIELDS)


# -- helpers ----------------------------------------------------------------------
def _checkpoint_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.checkpoint_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _open_log(args, cfg: RunConfig):
    path = Path(args.log) if args.log else _checkpoint_dir(cfg) / f"{args.command}.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_encoder(args, cfg: RunConfig) -> Optional[TriggerEncoder]:
    path = Path(args.trigger_checkpoint) if args.trigger_checkpoint else Path(cfg.checkpoint_dir) / TRIGGER_CKPT
    if not path.exists():
        return None
    return TriggerEncoder.load(path)


def _require_encoder(args, cfg: RunConfig) -> TriggerEncoder:
    encoder = _load_encoder(args, cfg)
    if encoder is None:
        raise CommandError("no trigger-encoder checkpoint found; run train-triggers first "
                           "or pass --trigger-checkpoint")
    return encoder


def _write_graphs(path: str, model: TriggerGNNTagger, sentences: Sequence[Sentence]) -> None:
    chunks = []
    for i, s in enumerate(sentences):
        fwd, bwd = model._graph_pair(s)
        chunks.append(f"## sentence {i}\n{dump_graph(fwd)}{dump_graph(bwd)}")
    Path(path).write_text("".join(chunks), encoding="utf-8")


def _read_input(path: str, fmt: str) -> List[Sentence]:
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "text":
        return [Sentence(tuple(line.split())) for line in text.splitlines() if line.strip()]
    return parse_conll(text, require_tags=False)


def _model_path(args, cfg: RunConfig) -> Path:
    path = Path(args.model) if args.model else Path(cfg.checkpoint_dir) / MODEL_CKPT
    if not path.exists():
        raise CommandError(f"model checkpoint not found: {path}")
    return path


# -- commands ---------------------------------------------------------------------
def cmd_train_triggers(args, cfg: RunConfig, log) -> dict:
    data = pipeline.load_dataset(cfg, need_triggers=True)
    encoder = pipeline.train_triggers(cfg, data, log)
    out = _checkpoint_dir(cfg) / TRIGGER_CKPT
    encoder.save(out)
    return {"checkpoint": str(out), "triggers": len(encoder.table_), **encoder.history_[-1]}


def cmd_train(args, cfg: RunConfig, log) -> dict:
    data = pipeline.load_dataset(cfg)
    encoder = None if cfg.no_trigger else _require_encoder(args, cfg)
    model = pipeline.train_ner(cfg, data, encoder, log)
    out = _checkpoint_dir(cfg) / MODEL_CKPT
    model.save(out)
    (Path(cfg.checkpoint_dir) / "run.conf").write_text(format_config(cfg), encoding="utf-8")
    if args.graph_dump:
        _write_graphs(args.graph_dump, model, data.train)
    summary = {"checkpoint": str(out), "config_hash": model.config_hash(),
               "best_epoch": model.best_epoch_, "epochs_run": len(model.history_)}
    if model.history_ and "dev_f1" in model.history_[model.best_epoch_ - 1]:
        summary["dev_f1"] = model.history_[model.best_epoch_ - 1]["dev_f1"]
    return summary


def cmd_eval(args, cfg: RunConfig, log) -> dict:
    cfg.check_paths("test")
    test = parse_conll(Path(cfg.test))
    if not test:
        raise CommandError(f"test file {cfg.test} contains no sentences")
    expected = cfg.config_hash() if _explicit_architecture(args) else None
    model = TriggerGNNTagger.load(_model_path(args, cfg), expected_hash=expected)
    report = pipeline.scores_to_dict(model.evaluate(test))
    report["mode"] = "nested" if "nested" in report else "flat"
    log({"stage": "eval", "sentences": len(test), **{f"{m}_{k}": v for m in ("flat", "nested")
         if m in report for k, v in report[m].items() if k != "per_type"}})
    _write_json(_checkpoint_dir(cfg) / "eval.json", report)
    return report


def cmd_predict(args, cfg: RunConfig, log) -> dict:
    model = TriggerGNNTagger.load(_model_path(args, cfg))
    sentences = _read_input(args.input, args.format)
    preds = model.predict_detailed(sentences)
    conll = serialize_conll(sentences, [p.tags for p in preds])
    if args.output:
        Path(args.output).write_text(conll, encoding="utf-8")
    else:
        sys.stdout.write(conll)
    if args.spans:
        with open(args.spans, "w", encoding="utf-8") as fh:
            for i, (s, p) in enumerate(zip(sentences, preds)):
                for span, score in p.spans:
                    fh.write(json.dumps({"sentence": i, "start": span.start, "end": span.end,
                                         "type": span.type, "text": " ".join(s.tokens[span.start:span.end + 1]),
                                         "score": score}, sort_keys=True) + "\n")
    table = model.encoder_.table_ if model.encoder_ is not None else None
    for i, p in enumerate(preds):
        if p.retrieval is None:
            continue
        log({"stage": "retrieval", "sentence": i, "triggers": [
            {"rank": r, "phrase": table.phrases[j] if table.phrases else None,
             "type": table.types[int(table.type_ids[j])], "distance": d}
            for r, (j, d) in enumerate(zip(p.retrieval.indices, p.retrieval.distances), 1)]})
    if args.graph_dump:
        _write_graphs(args.graph_dump, model, sentences)
    return {"sentences": len(sentences), "spans": sum(len(p.spans) for p in preds)}


def _seeds(text: Optional[str], default: int) -> List[int]:
    if not text:
        return [default]
    return [int(s) for s in text.split(",") if s.strip()]


def _encoder_for(args, cfg: RunConfig, data: pipeline.Dataset, seed: int) -> Optional[TriggerEncoder]:
    """Reuse a saved encoder when present, else train one for this seed."""
    encoder = _load_encoder(args, cfg)
    if encoder is None and data.triggers:
        encoder = pipeline.train_triggers(cfg.with_overrides(seed=seed), data)
    return encoder


def cmd_ablate(args, cfg: RunConfig, log) -> dict:
    data = pipeline.load_dataset(cfg)
    rows = []
    for seed in _seeds(args.seeds, cfg.seed):
        seed_cfg = cfg.with_overrides(seed=seed)
        encoder = _encoder_for(args, seed_cfg, data, seed)
        for row in pipeline.run_ablation(seed_cfg, data, encoder, log=log):
            rows.append({"seed": seed, **row})
    report = {"rows": rows, "order": [name for name, _ in pipeline.ABLATION_ROWS]}
    _write_json(_checkpoint_dir(cfg) / "ablation.json", report)
    return report


def cmd_sweep_steps(args, cfg: RunConfig, log) -> dict:
    data = pipeline.load_dataset(cfg)
    encoder = None if cfg.no_trigger else _encoder_for(args, cfg, data, cfg.seed)
    steps = [int(s) for s in args.steps_list.split(",") if s.strip()]
    report = {"rows": pipeline.sweep_steps(cfg, data, encoder, steps, log=log)}
    _write_json(_checkpoint_dir(cfg) / "sweep_steps.json", report)
    return report


def cmd_synth(args) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    syn = SyntheticConfig(n_sentences=args.n_sentences, types=tuple(args.types.split(",")),
                          nesting_rate=args.nesting_rate, ambiguity_rate=args.ambiguity_rate,
                          max_gap=args.max_gap, seed=args.seed)
    sentences, triggers, lexicon = generate_synthetic(syn)
    fractions = [float(x) for x in args.split.split(",")]
    if len(fractions) != 3:
        raise CommandError("--split needs three fractions")
    (train, train_trig), (dev, _), (test, _) = split(sentences, triggers, fractions, seed=args.seed)
    (out / "train.conll").write_text(serialize_conll(train), encoding="utf-8")
    (out / "dev.conll").write_text(serialize_conll(dev), encoding="utf-8")
    (out / "test.conll").write_text(serialize_conll(test), encoding="utf-8")
    (out / "train.triggers").write_text(serialize_triggers(train_trig), encoding="utf-8")
    (out / "lexicon.txt").write_text(lexicon.to_text(), encoding="utf-8")
    cfg = RunConfig(train=str(out / "train.conll"), dev=str(out / "dev.conll"),
                    test=str(out / "test.conll"), triggers=str(out / "train.triggers"),
                    lexicon=str(out / "lexicon.txt"), checkpoint_dir=str(out / "checkpoints"),
                    seed=args.seed)
    (out / "run.conf").write_text(format_config(cfg), encoding="utf-8")
    return {"train": len(train), "dev": len(dev), "test": len(test), "triggers": len(train_trig),
            "lexicon": len(lexicon), "config": str(out / "run.conf")}


COMMANDS = {
    "train-triggers": cmd_train_triggers,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "ablate": cmd_ablate,
    "sweep-steps": cmd_sweep_steps,
}


def main(argv: Optional[Sequence[str]] = None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            result = cmd_synth(args)
        else:
            cfg = config_from_args(args, environ)
            with _open_log(args, cfg) as fh:
                result = COMMANDS[args.command](args, cfg, pipeline.JsonlLogger(fh))
    except (ConfigError, CorpusFormatError, CheckpointError, CommandError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command != "predict" or args.output:
        print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
