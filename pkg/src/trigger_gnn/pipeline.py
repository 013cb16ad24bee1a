"""Training and evaluation workflows shared by the CLI and the test suites."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, TextIO

import numpy as np

from .config import RunConfig
from .corpus.io import parse_conll, parse_triggers
from .corpus.metrics import SpanScores
from .corpus.resources import EmbeddingTable, Lexicon, load_embeddings, load_lexicon
from .corpus.synthetic import subset
from .corpus.types import Sentence, TriggerAnnotation
from .encoder import TriggerEncoder
from .model import TriggerGNNTagger

Logger = Callable[[dict], None]

# ablation rows in table order; each maps to the RunConfig flag it switches on
ABLATION_ROWS = (
    ("full", None),
    ("-graph-level node", "no_global_node"),
    ("-trigger", "no_trigger"),
    ("-edge/lexicon", "no_lexicon_edges"),
    ("-bidirectional", "unidirectional"),
    ("-crf", "no_crf"),
)


@dataclass
class Dataset:
    train: List[Sentence]
    triggers: List[TriggerAnnotation] = field(default_factory=list)
    dev: Optional[List[Sentence]] = None
    test: Optional[List[Sentence]] = None
    lexicon: Lexicon = field(default_factory=Lexicon)
    embeddings: Optional[EmbeddingTable] = None


class JsonlLogger:
    """Writes one JSON object per line; keys sorted so reruns produce identical bytes."""

    def __init__(self, stream: TextIO, echo: Optional[TextIO] = None):
        self.stream = stream
        self.echo = echo

    def __call__(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        self.stream.write(line + "\n")
        self.stream.flush()
        if self.echo is not None:
            self.echo.write(line + "\n")


def load_dataset(cfg: RunConfig, need_triggers: bool = False) -> Dataset:
    cfg.check_paths("train")
    train = parse_conll(Path(cfg.train))
    triggers: List[TriggerAnnotation] = []
    if cfg.triggers is not None:
        cfg.check_paths("triggers")
        triggers = parse_triggers(Path(cfg.triggers), train)
    elif need_triggers:
        cfg.check_paths("triggers")
    dev = parse_conll(Path(cfg.dev)) if cfg.dev else None
    test = parse_conll(Path(cfg.test)) if cfg.test else None
    lexicon = load_lexicon(Path(cfg.lexicon), cfg.lowercase) if cfg.lexicon else Lexicon()
    embeddings = (load_embeddings(Path(cfg.embeddings), dim=cfg.embed_dim, lowercase=cfg.lowercase)
                  if cfg.embeddings else None)
    return Dataset(train, triggers, dev, test, lexicon, embeddings)


def apply_train_fraction(data: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep a seeded random ``fraction`` of the training sentences (and their triggers)."""
    if fraction >= 1.0:
        return data
    n = max(1, int(round(fraction * len(data.train))))
    keep = sorted(int(i) for i in np.random.default_rng(seed).permutation(len(data.train))[:n])
    train, triggers = subset(data.train, data.triggers, keep)
    return replace(data, train=train, triggers=triggers)


def make_encoder(cfg: RunConfig) -> TriggerEncoder:
    return TriggerEncoder(embed_dim=cfg.embed_dim, hidden_dim=cfg.trigger_hidden_dim or cfg.hidden_dim,
                          lambda_match=cfg.lambda_match, margin=cfg.margin,
                          lr=cfg.trigger_lr or cfg.lr, epochs=cfg.trigger_epochs,
                          batch_size=cfg.batch_size, dropout=cfg.dropout, k=cfg.k_triggers,
                          lowercase=cfg.lowercase, seed=cfg.seed)


def train_triggers(cfg: RunConfig, data: Dataset, log: Optional[Logger] = None) -> TriggerEncoder:
    if not data.triggers:
        raise ValueError("trigger-encoder training needs trigger annotations")
    return make_encoder(cfg).fit(data.train, data.triggers, data.embeddings, log=log)


def train_ner(cfg: RunConfig, data: Dataset, encoder: Optional[TriggerEncoder],
              log: Optional[Logger] = None) -> TriggerGNNTagger:
    data = apply_train_fraction(data, cfg.train_fraction, cfg.seed)
    model = TriggerGNNTagger.from_config(cfg)
    return model.fit(data.train, data.lexicon, None if cfg.no_trigger else encoder,
                     data.triggers, dev=data.dev, embeddings=data.embeddings, log=log)


def scores_to_dict(report: Dict[str, SpanScores]) -> dict:
    return {mode: s.to_dict() for mode, s in report.items()}


def held_out(data: Dataset) -> List[Sentence]:
    target = data.test if data.test is not None else data.dev
    if not target:
        raise ValueError("no test or dev sentences to evaluate on")
    return target


def run_ablation(cfg: RunConfig, data: Dataset, encoder: Optional[TriggerEncoder],
                 rows: Sequence = ABLATION_ROWS, log: Optional[Logger] = None) -> List[dict]:
    """Train and score one model per ablation row; a failed row is recorded and skipped."""
    target = held_out(data)
    results = []
    for name, flag in rows:
        row_cfg = cfg if flag is None else cfg.with_overrides(**{flag: True})
        try:
            model = train_ner(row_cfg, data, encoder)
            scores = model.evaluate(target)
            row = {"row": name, "flag": flag, "status": "ok", **scores["flat"].to_dict()}
        except Exception as exc:  # keep sweeping; the row records the failure
            row = {"row": name, "flag": flag, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        results.append(row)
        if log:
            log({"stage": "ablate", **{k: v for k, v in row.items() if k != "per_type"}})
    return results


def sweep_steps(cfg: RunConfig, data: Dataset, encoder: Optional[TriggerEncoder],
                steps: Sequence[int] = (1, 2, 3, 4, 5, 6), log: Optional[Logger] = None) -> List[dict]:
    target = held_out(data)
    results = []
    for t in steps:
        model = train_ner(cfg.with_overrides(steps=t), data, encoder)
        s = model.evaluate(target)["flat"]
        row = {"steps": t, "precision": s.precision, "recall": s.recall, "f1": s.f1}
        results.append(row)
        if log:
            log({"stage": "sweep-steps", **row})
    return results
