"""Command-line interface: exit codes, file flows, output formats."""

from __future__ import annotations

import json

import pytest

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from medex.cli import main
from medex.io import read_labels
from medex.model import load_checkpoint

from helpers import make_workspace, write_kb_jsonl, write_lines, coded_kb


@pytest.fixture
def ws(tmp_path):
    return make_workspace(tmp_path)


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        code, out, _ = run(["--help"], capsys)
        assert code == 0
        assert "pipeline" in out

    def test_unknown_flag_is_user_error(self, capsys):
        code, _, err = run(["gen", "--frobnicate"], capsys)
        assert code == 1
        assert "frobnicate" in err or "no such option" in err.lower()

    def test_missing_file_is_user_error(self, ws, capsys):
        code, _, err = run(
            ["label", "--lexicon", str(ws / "absent.json"),
             "--in", str(ws / "kb.jsonl"), "--out", str(ws / "x.jsonl")],
            capsys,
        )
        assert code == 1

    def test_domain_error_is_user_error(self, ws, capsys):
        bad = ws / "bad_kb.jsonl"
        bad.write_text('{"id": "e1", "name": "thing"}\n', encoding="utf-8")
        code, _, err = run(
            ["kb", "build", "--kb", str(bad), "--out", str(ws / "lex.json")],
            capsys,
        )
        assert code == 1
        assert "error:" in err

    def test_unexpected_exception_is_internal_error(self, ws, capsys, monkeypatch):
        import medex.cli as cli_mod
        def boom(path):
            raise RuntimeError("wires crossed")
        monkeypatch.setattr(cli_mod, "load_kb", boom)
        code, _, err = run(
            ["kb", "build", "--kb", str(ws / "kb.jsonl"),
             "--out", str(ws / "lex.json")],
            capsys,
        )
        assert code == 2
        assert "wires crossed" in err


class TestDefaults:
    def test_prints_parseable_toml(self, capsys):
        code, out, _ = run(["defaults"], capsys)
        assert code == 0
        data = tomllib.loads(out)
        assert data["seed"] == 0
        assert data["train"]["batch_size"] == 20
        assert data["eval"]["bins"] == [0, 500, 2500, 50000]


class TestStageFlows:
    def test_kb_build_gen_label(self, ws, capsys):
        code, out, _ = run(
            ["kb", "build", "--kb", str(ws / "kb.jsonl"),
             "--out", str(ws / "lexicon.json")],
            capsys,
        )
        assert code == 0
        assert "surface forms" in out

        code, out, _ = run(
            ["gen", "--kb", str(ws / "kb.jsonl"),
             "--config", str(ws / "run.toml"),
             "--out-dir", str(ws / "data")],
            capsys,
        )
        assert code == 0
        assert (ws / "data/corpus.jsonl").exists()
        gold = read_labels(ws / "data/gold.jsonl")
        assert len(gold) == 40

        code, out, _ = run(
            ["label", "--lexicon", str(ws / "lexicon.json"),
             "--in", str(ws / "data/corpus.jsonl"),
             "--out", str(ws / "data/distant.jsonl")],
            capsys,
        )
        assert code == 0
        distant = read_labels(ws / "data/distant.jsonl")
        assert set(distant) == set(gold)
        # noise-free corpus with per-entity vocabulary: distant == gold
        assert distant == gold

    def test_output_directories_are_created(self, ws, capsys):
        # --out into a directory that does not exist yet must not traceback
        code, _, _ = run(
            ["kb", "build", "--kb", str(ws / "kb.jsonl"),
             "--out", str(ws / "new/deep/lexicon.json")],
            capsys,
        )
        assert code == 0
        assert (ws / "new/deep/lexicon.json").exists()

    def test_label_workers_agree(self, ws, capsys):
        run(["kb", "build", "--kb", str(ws / "kb.jsonl"),
             "--out", str(ws / "lexicon.json")], capsys)
        run(["gen", "--kb", str(ws / "kb.jsonl"),
             "--config", str(ws / "run.toml"),
             "--out-dir", str(ws / "data")], capsys)
        for n, name in ((1, "one.jsonl"), (3, "three.jsonl")):
            code, _, _ = run(
                ["label", "--lexicon", str(ws / "lexicon.json"),
                 "--in", str(ws / "data/corpus.jsonl"),
                 "--out", str(ws / name), "--workers", str(n)],
                capsys,
            )
            assert code == 0
        assert (ws / "one.jsonl").read_bytes() == (ws / "three.jsonl").read_bytes()

    def test_train_and_predict(self, ws, capsys):
        run(["kb", "build", "--kb", str(ws / "kb.jsonl"),
             "--out", str(ws / "lexicon.json")], capsys)
        run(["gen", "--kb", str(ws / "kb.jsonl"),
             "--config", str(ws / "run.toml"),
             "--out-dir", str(ws / "data")], capsys)
        run(["label", "--lexicon", str(ws / "lexicon.json"),
             "--in", str(ws / "data/corpus.jsonl"),
             "--out", str(ws / "data/distant.jsonl")], capsys)

        code, out, _ = run(
            ["train", "--labels", str(ws / "data/distant.jsonl"),
             "--corpus", str(ws / "data/corpus.jsonl"),
             "--config", str(ws / "run.toml"),
             "--lexicon", str(ws / "lexicon.json"),
             "--out", str(ws / "model.ckpt")],
            capsys,
        )
        assert code == 0, out
        bundle = load_checkpoint(ws / "model.ckpt")
        assert bundle.state.step > 0
        assert len(bundle.entities) == 6

        code, out, _ = run(
            ["predict", "--model", str(ws / "model.ckpt"),
             "--in", str(ws / "data/corpus.jsonl"),
             "--out", str(ws / "preds.jsonl")],
            capsys,
        )
        assert code == 0
        preds = read_labels(ws / "preds.jsonl")
        assert len(preds) == 40

    def test_pretrain_then_finetune(self, ws, capsys):
        run(["kb", "build", "--kb", str(ws / "kb.jsonl"),
             "--out", str(ws / "lexicon.json")], capsys)
        run(["gen", "--kb", str(ws / "kb.jsonl"),
             "--config", str(ws / "run.toml"),
             "--out-dir", str(ws / "data")], capsys)
        run(["label", "--lexicon", str(ws / "lexicon.json"),
             "--in", str(ws / "data/corpus.jsonl"),
             "--out", str(ws / "data/distant.jsonl")], capsys)

        code, out, _ = run(
            ["pretrain", "--corpus", str(ws / "data/corpus.jsonl"),
             "--lexicon", str(ws / "lexicon.json"),
             "--config", str(ws / "run.toml"),
             "--out", str(ws / "pre.ckpt"), "--steps", "5"],
            capsys,
        )
        assert code == 0
        assert "5 steps" in out
        pre = load_checkpoint(ws / "pre.ckpt")
        assert pre.state.step == 5

        code, _, _ = run(
            ["train", "--labels", str(ws / "data/distant.jsonl"),
             "--corpus", str(ws / "data/corpus.jsonl"),
             "--config", str(ws / "run.toml"),
             "--init", str(ws / "pre.ckpt"),
             "--out", str(ws / "model.ckpt")],
            capsys,
        )
        assert code == 0
        tuned = load_checkpoint(ws / "model.ckpt")
        assert tuned.state.step > 5  # optimizer clock carries across phases


class TestEvalCommands:
    @pytest.fixture
    def label_files(self, tmp_path):
        def write(name, mapping):
            path = tmp_path / name
            with open(path, "w", encoding="utf-8") as fh:
                for doc_id, ents in sorted(mapping.items()):
                    fh.write(json.dumps(
                        {"doc_id": doc_id, "entities": sorted(ents)}) + "\n")
            return path
        preds = write("preds.jsonl", {"d1": {"e00"}, "d2": set()})
        gold = write("gold.jsonl", {"d1": {"e00", "e01"}, "d2": {"e02"}})
        counts = tmp_path / "counts.json"
        counts.write_text(json.dumps({"e00": 9, "e01": 2, "e02": 9}),
                          encoding="utf-8")
        return preds, gold, counts

    def test_recall_to_stdout(self, label_files, capsys, tmp_path):
        preds, gold, counts = label_files
        write_kb_jsonl(tmp_path / "kb.jsonl", coded_kb(3))
        code, out, _ = run(
            ["eval", "recall", "--preds", str(preds), "--labels", str(gold),
             "--train-counts", str(counts), "--bins", "0,5",
             "--kb", str(tmp_path / "kb.jsonl")],
            capsys,
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "group,bin_threshold,n_entities,recall"
        assert any(line.startswith("all,0,3,") for line in lines)

    def test_recall_without_kb_single_block(self, label_files, capsys):
        preds, gold, counts = label_files
        code, out, _ = run(
            ["eval", "recall", "--preds", str(preds), "--labels", str(gold),
             "--train-counts", str(counts), "--bins", "0"],
            capsys,
        )
        assert code == 0
        assert all(line.startswith(("group", "all")) for line in out.splitlines())

    def test_recall_counts_from_labels_file(self, label_files, capsys):
        preds, gold, _ = label_files
        code, out, _ = run(
            ["eval", "recall", "--preds", str(preds), "--labels", str(gold),
             "--train-counts", str(gold), "--bins", "0"],
            capsys,
        )
        assert code == 0

    def test_recall_bad_bins(self, label_files, capsys):
        preds, gold, counts = label_files
        code, _, err = run(
            ["eval", "recall", "--preds", str(preds), "--labels", str(gold),
             "--train-counts", str(counts), "--bins", "0,abc"],
            capsys,
        )
        assert code == 1

    def test_discrepancy_by_entities(self, label_files, capsys):
        preds, gold, _ = label_files
        code, out, _ = run(
            ["eval", "discrepancy", "--preds", str(preds),
             "--annotator", str(gold), "--gold", str(gold),
             "--entities", "e00,e01"],
            capsys,
        )
        assert code == 0
        header = out.splitlines()[0]
        assert header.startswith("entity,both_tp,both_tn")

    def test_discrepancy_top_needs_counts(self, label_files, capsys):
        preds, gold, _ = label_files
        code, _, err = run(
            ["eval", "discrepancy", "--preds", str(preds),
             "--annotator", str(gold), "--gold", str(gold), "--top", "2"],
            capsys,
        )
        assert code == 1
        assert "train-counts" in err

    def test_counts_report(self, label_files, capsys, tmp_path):
        _, gold, _ = label_files
        write_kb_jsonl(tmp_path / "kb.jsonl", coded_kb(3))
        code, out, _ = run(
            ["eval", "counts", "--labels", str(gold),
             "--kb", str(tmp_path / "kb.jsonl")],
            capsys,
        )
        assert code == 0
        assert out.splitlines()[0] == "group,n_terms,n_instances"

    def test_out_flag_writes_file(self, label_files, capsys, tmp_path):
        preds, gold, counts = label_files
        target = tmp_path / "recall.csv"
        code, out, _ = run(
            ["eval", "recall", "--preds", str(preds), "--labels", str(gold),
             "--train-counts", str(counts), "--bins", "0",
             "--out", str(target)],
            capsys,
        )
        assert code == 0
        assert target.exists()
        assert "wrote" in out
