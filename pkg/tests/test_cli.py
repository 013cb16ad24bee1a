import json
from pathlib import Path

import pytest

from trigger_gnn.cli import main
from trigger_gnn.config import CHECKPOINT_ENV

TINY = ["--embed-dim", "8", "--hidden-dim", "8", "--epochs", "2", "--trigger-epochs", "1",
        "--lr", "0.01", "--patience", "2"]


def run(argv, env=None):
    return main([str(a) for a in argv], environ=env or {})


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert run(["synth", "--out", root, "--n-sentences", "60", "--seed", "1"]) == 0
    return root


@pytest.fixture(scope="module")
def trained(corpus):
    conf = corpus / "run.conf"
    assert run(["train-triggers", "--config", conf, *TINY]) == 0
    assert run(["train", "--config", conf, *TINY, "--graph-dump", corpus / "graphs.txt"]) == 0
    return corpus


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


def test_synth_writes_corpus(corpus):
    for name in ("train.conll", "dev.conll", "test.conll", "train.triggers", "lexicon.txt", "run.conf"):
        assert (corpus / name).stat().st_size > 0


def test_train_logs_and_checkpoints(trained):
    ckpt = trained / "checkpoints"
    assert (ckpt / "triggers.ckpt").exists() and (ckpt / "model.ckpt").exists()
    trig = read_jsonl(ckpt / "train-triggers.jsonl")
    assert [r["epoch"] for r in trig] == [0, 1] and {"L1", "L2", "L"} <= set(trig[0])
    ner = read_jsonl(ckpt / "train.jsonl")
    assert {"dev_precision", "dev_recall", "dev_f1"} <= set(ner[0])
    assert "# direction=forward" in (trained / "graphs.txt").read_text()


def test_eval_report(trained, capsys):
    assert run(["eval", "--config", trained / "run.conf", *TINY]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mode"] in ("flat", "nested") and 0 <= report["flat"]["f1"] <= 1
    assert json.loads((trained / "checkpoints" / "eval.json").read_text()) == report


def test_eval_hash_mismatch(trained, capsys):
    code = run(["eval", "--config", trained / "run.conf", *TINY, "--hidden-dim", "16"])
    assert code == 2 and "hash" in capsys.readouterr().err


def test_eval_empty_test_file(trained, tmp_path, capsys):
    empty = tmp_path / "empty.conll"
    empty.write_text("")
    assert run(["eval", "--config", trained / "run.conf", *TINY, "--test", empty]) == 2
    assert "no sentences" in capsys.readouterr().err


def test_predict_outputs(trained, tmp_path):
    text = tmp_path / "in.txt"
    text.write_text("we met with jordan yesterday\nshe works for acme corp\n")
    out, spans, log = tmp_path / "out.conll", tmp_path / "spans.jsonl", tmp_path / "pred.jsonl"
    assert run(["predict", "--config", trained / "run.conf", "--input", text, "--format", "text",
                "--output", out, "--spans", spans, "--log", log]) == 0
    blocks = out.read_text().strip().split("\n\n")
    assert len(blocks) == 2 and len(blocks[0].splitlines()) == 5
    for rec in read_jsonl(spans):
        assert {"sentence", "start", "end", "type", "text", "score"} <= set(rec)
    retrieval = read_jsonl(log)
    assert len(retrieval) == 2
    for rec in retrieval:
        dists = [t["distance"] for t in rec["triggers"]]
        assert len(dists) == 3 and dists == sorted(dists)


def test_predict_empty_input(trained, tmp_path):
    empty, out = tmp_path / "empty.conll", tmp_path / "out.conll"
    empty.write_text("")
    assert run(["predict", "--config", trained / "run.conf", "--input", empty, "--output", out]) == 0
    assert out.read_text() == ""


def test_env_overrides_checkpoint_dir(corpus, tmp_path):
    target = tmp_path / "elsewhere"
    assert run(["train", "--config", corpus / "run.conf", *TINY, "--no-trigger"],
               env={CHECKPOINT_ENV: str(target)}) == 0
    assert (target / "model.ckpt").exists()


def test_missing_trigger_checkpoint(corpus, tmp_path, capsys):
    code = run(["train", "--config", corpus / "run.conf", *TINY, "--checkpoint-dir", tmp_path / "none"])
    assert code == 2 and "train-triggers" in capsys.readouterr().err


def test_ablate_rows_in_order(trained, tmp_path):
    ckpt = tmp_path / "abl"
    assert run(["ablate", "--config", trained / "run.conf", *TINY, "--epochs", "1",
                "--checkpoint-dir", ckpt,
                "--trigger-checkpoint", trained / "checkpoints" / "triggers.ckpt"]) == 0
    report = json.loads((ckpt / "ablation.json").read_text())
    assert [r["row"] for r in report["rows"]] == ["full", "-graph-level node", "-trigger", "-edge/lexicon",
                                                  "-bidirectional", "-crf"]
    assert all(r["status"] == "ok" for r in report["rows"])


def test_ablate_marks_failed_row(corpus, tmp_path):
    # no trigger file and no encoder: rows needing triggers fail, the rest still run
    conf = tmp_path / "nt.conf"
    conf.write_text((corpus / "run.conf").read_text().replace(
        f"triggers = {corpus / 'train.triggers'}", "triggers = none"))
    ckpt = tmp_path / "abl"
    assert run(["ablate", "--config", conf, *TINY, "--epochs", "1", "--checkpoint-dir", ckpt]) == 0
    rows = {r["row"]: r for r in json.loads((ckpt / "ablation.json").read_text())["rows"]}
    assert rows["full"]["status"] == "failed" and rows["-trigger"]["status"] == "ok"


def test_sweep_steps_rows(trained, tmp_path):
    ckpt = tmp_path / "sweep"
    assert run(["sweep-steps", "--config", trained / "run.conf", *TINY, "--epochs", "1",
                "--checkpoint-dir", ckpt, "--steps-list", "1,2",
                "--trigger-checkpoint", trained / "checkpoints" / "triggers.ckpt"]) == 0
    rows = json.loads((ckpt / "sweep_steps.json").read_text())["rows"]
    assert [r["steps"] for r in rows] == [1, 2]
    assert len(read_jsonl(ckpt / "sweep-steps.jsonl")) == 2


def test_rerun_is_bit_identical(corpus, tmp_path):
    outputs = []
    for k in range(2):
        ckpt = tmp_path / f"run{k}"
        assert run(["train-triggers", "--config", corpus / "run.conf", *TINY, "--checkpoint-dir", ckpt]) == 0
        assert run(["train", "--config", corpus / "run.conf", *TINY, "--checkpoint-dir", ckpt]) == 0
        outputs.append([(ckpt / n).read_bytes() for n in
                        ("triggers.ckpt", "model.ckpt", "train-triggers.jsonl", "train.jsonl")])
    assert outputs[0] == outputs[1]


def test_bad_config_value(corpus, capsys):
    assert run(["train", "--config", corpus / "run.conf", "--steps", "9"]) == 2
    assert "steps" in capsys.readouterr().err
