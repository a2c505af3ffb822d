import json
import os

import pytest

from seqgap.cli import main, manifest_to_argv
from seqgap.corpus import save_pianoroll
from seqgap.datagen import chord_pianoroll, template_text


@pytest.fixture(scope="module")
def text_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "corpus.txt"
    p.write_text(template_text(6000, seed=1), encoding="utf-8")
    return str(p)


@pytest.fixture(scope="module")
def roll_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "rolls.json"
    save_pianoroll(p, chord_pianoroll(6, 40, seed=2), dim=8)
    return str(p)


@pytest.fixture(scope="module")
def prepared(tmp_path_factory, text_file):
    out = str(tmp_path_factory.mktemp("prepared"))
    assert main(["prepare", "--data", text_file, "--max-symbols", "40", "--out", out]) == 0
    return out


def _train(out, text_file, prepared, *extra):
    argv = [
        "train", "--data", text_file, "--alphabet", os.path.join(prepared, "alphabet.json"),
        "--T", "24", "--updates", "40", "--hidden", "10", "--batch", "8",
        "--seed", "7", "--out", out, "--stride", "12", "--gap-len", "3",
    ]
    argv.extend(extra)
    return main(argv)


@pytest.fixture(scope="module")
def trained(tmp_path_factory, text_file, prepared):
    outs = {}
    for name, extra in {
        "uni": ("--kind", "uni"),
        "gsn": ("--kind", "brnn"),
        "nade": ("--kind", "brnn", "--regime", "nade_masked"),
    }.items():
        out = str(tmp_path_factory.mktemp(f"model-{name}"))
        assert _train(out, text_file, prepared, *extra) == 0
        outs[name] = os.path.join(out, "checkpoint.bin")
    return outs


class TestPrepare:
    def test_outputs_exist(self, prepared):
        assert os.path.exists(os.path.join(prepared, "alphabet.json"))
        assert os.path.exists(os.path.join(prepared, "onegram.json"))
        assert os.path.exists(os.path.join(prepared, "manifest.json"))

    def test_pianoroll_prepare(self, tmp_path, roll_file):
        out = str(tmp_path / "prep")
        assert main(["prepare", "--data", roll_file, "--format", "pianoroll", "--out", out]) == 0
        stats = json.loads(open(os.path.join(out, "onegram.json")).read())
        assert stats["family"] == "bernoulli"

    def test_missing_data_is_usage_error(self, tmp_path):
        assert main(["prepare", "--out", str(tmp_path)]) == 2


class TestTrain:
    def test_artifacts_and_trace_rows(self, trained, tmp_path, text_file, prepared):
        out = str(tmp_path / "t")
        assert _train(out, text_file, prepared, "--kind", "uni") == 0
        trace = open(os.path.join(out, "trace.csv")).read().strip().split("\n")
        assert trace[0] == "update,eta,loss"
        assert len(trace) - 1 == 40  # one logged point per update

    def test_checkpoint_header_has_missing_channel(self, trained):
        header = json.loads(open(trained["nade"], "rb").readline())
        assert header["d_in"] == header["d_out"] + 1

    def test_same_command_same_checkpoint(self, tmp_path, text_file, prepared):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert _train(out1, text_file, prepared, "--kind", "brnn") == 0
        assert _train(out2, text_file, prepared, "--kind", "brnn") == 0
        b1 = open(os.path.join(out1, "checkpoint.bin"), "rb").read()
        b2 = open(os.path.join(out2, "checkpoint.bin"), "rb").read()
        assert b1 == b2

    def test_bad_flag_combination(self, tmp_path, text_file, prepared):
        assert _train(str(tmp_path / "x"), text_file, prepared,
                      "--kind", "uni", "--regime", "nade_masked") == 2

    def test_manifest_roundtrip(self, tmp_path, text_file, prepared):
        out1 = str(tmp_path / "m1")
        assert _train(out1, text_file, prepared, "--kind", "uni") == 0
        manifest = json.load(open(os.path.join(out1, "manifest.json")))
        argv = manifest_to_argv(manifest)
        out2 = str(tmp_path / "m2")
        argv[argv.index("--out") + 1] = out2
        assert main(argv) == 0
        b1 = open(os.path.join(out1, "checkpoint.bin"), "rb").read()
        b2 = open(os.path.join(out2, "checkpoint.bin"), "rb").read()
        assert b1 == b2


class TestFill:
    def _window(self, tmp_path, text_file):
        win = tmp_path / "window.txt"
        win.write_text(open(text_file).read()[:30], encoding="utf-8")
        return str(win)

    @pytest.mark.parametrize("strategy,model_key", [
        ("gsn", "gsn"), ("nade", "nade"), ("bayes_mcmc", "uni"), ("oneway", "uni"),
    ])
    def test_model_strategies(self, strategy, model_key, tmp_path, text_file, prepared, trained):
        out = str(tmp_path / strategy)
        rc = main([
            "fill", "--strategy", strategy, "--checkpoint", trained[model_key],
            "--data", self._window(tmp_path, text_file),
            "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--gap", "10:3", "--M", "9", "--chains", "4", "--seed", "3", "--out", out,
        ])
        assert rc == 0
        result = json.loads(open(os.path.join(out, "gapresult.json")).read())
        assert result["strategy"] == strategy
        filled = open(os.path.join(out, "filled.txt")).read().rstrip("\n")
        assert len(filled) == 30

    def test_onegram_needs_only_stats(self, tmp_path, text_file, prepared):
        out = str(tmp_path / "og")
        rc = main([
            "fill", "--strategy", "onegram", "--stats", os.path.join(prepared, "onegram.json"),
            "--data", self._window(tmp_path, text_file),
            "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--gap", "5:2", "--out", out, "--seed", "1",
        ])
        assert rc == 0

    def test_fill_seed_reproducible(self, tmp_path, text_file, prepared, trained):
        outs = []
        for name in ("f1", "f2"):
            out = str(tmp_path / name)
            assert main([
                "fill", "--strategy", "gsn", "--checkpoint", trained["gsn"],
                "--data", self._window(tmp_path, text_file),
                "--alphabet", os.path.join(prepared, "alphabet.json"),
                "--gap", "10:3", "--M", "9", "--chains", "4", "--seed", "5", "--out", out,
            ]) == 0
            outs.append(out)
        for fname in ("gapresult.json", "filled.txt"):
            a = open(os.path.join(outs[0], fname), "rb").read()
            assert a == open(os.path.join(outs[1], fname), "rb").read(), fname

    def test_bayes_on_binary_checkpoint_rejected(self, tmp_path, roll_file, capsys):
        out = str(tmp_path / "model")
        assert main([
            "train", "--data", roll_file, "--format", "pianoroll", "--kind", "uni",
            "--T", "12", "--updates", "10", "--hidden", "6", "--batch", "4",
            "--burnin-head", "0", "--burnin-tail", "0", "--out", out, "--seed", "1",
        ]) == 0
        rc = main([
            "fill", "--strategy", "bayes_mcmc", "--checkpoint", os.path.join(out, "checkpoint.bin"),
            "--data", roll_file, "--format", "pianoroll", "--gap", "15:3",
            "--out", str(tmp_path / "f"), "--seed", "1",
        ])
        assert rc == 2
        assert "2^d" in capsys.readouterr().err

    def test_strategy_kind_mismatch(self, tmp_path, text_file, prepared, trained):
        rc = main([
            "fill", "--strategy", "gsn", "--checkpoint", trained["uni"],
            "--data", self._window(tmp_path, text_file),
            "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--gap", "10:3", "--out", str(tmp_path / "x"), "--seed", "0",
        ])
        assert rc == 2


class TestEval:
    def test_onegram_only_table(self, tmp_path, text_file, prepared):
        out = str(tmp_path / "eval")
        rc = main([
            "eval", "--data", text_file, "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--stats", os.path.join(prepared, "onegram.json"),
            "--strategies", "onegram", "--g", "3", "--n-gaps", "12",
            "--edge", "5", "--T", "20", "--seed", "2", "--out", out,
        ])
        assert rc == 0
        rows = open(os.path.join(out, "table1.csv")).read().strip().split("\n")
        assert rows[0] == "strategy,n_gaps,mean_gap_nll,n_flagged"
        assert len(rows) == 2 and rows[1].startswith("onegram,")

    def test_full_eval_with_fig3_and_table2(self, tmp_path, text_file, prepared, trained):
        out = str(tmp_path / "eval")
        rc = main([
            "eval", "--data", text_file, "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--stats", os.path.join(prepared, "onegram.json"),
            "--checkpoint-uni", trained["uni"], "--checkpoint-gsn", trained["gsn"],
            "--checkpoint-nade", trained["nade"],
            "--strategies", "gsn,nade,oneway,onegram", "--g", "3", "--n-gaps", "4",
            "--edge", "5", "--T", "20", "--M", "8", "--chains", "3", "--seed", "2",
            "--fig3", "--m-grid", "3,6", "--table2", "--out", out,
        ])
        assert rc == 0
        fig3 = open(os.path.join(out, "fig3.csv")).read().strip().split("\n")
        assert len(fig3) == 3  # header + one row per grid point
        table2 = open(os.path.join(out, "table2.csv")).read().strip().split("\n")
        assert len(table2) == 5  # header + one row per model passed

    def test_seed_reproduces_report_bytes(self, tmp_path, text_file, prepared, trained):
        outs = []
        for name in ("r1", "r2"):
            out = str(tmp_path / name)
            rc = main([
                "eval", "--data", text_file, "--alphabet", os.path.join(prepared, "alphabet.json"),
                "--checkpoint-gsn", trained["gsn"], "--strategies", "gsn",
                "--g", "3", "--n-gaps", "3", "--edge", "5", "--T", "20",
                "--M", "6", "--chains", "3", "--seed", "11", "--out", out,
            ])
            assert rc == 0
            outs.append(out)
        for fname in ("table1.csv", "fig2.csv", "report.json"):
            a = open(os.path.join(outs[0], fname), "rb").read()
            b = open(os.path.join(outs[1], fname), "rb").read()
            assert a == b, fname

    def test_missing_checkpoint_is_usage_error(self, tmp_path, text_file, prepared, capsys):
        rc = main([
            "eval", "--data", text_file, "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--strategies", "gsn", "--g", "3", "--n-gaps", "2", "--edge", "5",
            "--T", "20", "--out", str(tmp_path / "x"), "--seed", "0",
        ])
        assert rc == 2
        assert "gsn" in capsys.readouterr().err


class TestGridsearch:
    def test_singleton_grid(self, tmp_path, text_file, prepared):
        out = str(tmp_path / "grid")
        rc = main([
            "gridsearch", "--rates", "0.25", "--data", text_file,
            "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--kind", "brnn", "--T", "16", "--updates", "12", "--hidden", "6",
            "--batch", "4", "--seed", "3", "--out", out,
        ])
        assert rc == 0
        best = json.load(open(os.path.join(out, "best.json")))
        assert best["step_size"] == 0.25

    def test_grid_rows_and_best_is_minimum(self, tmp_path, text_file, prepared):
        out = str(tmp_path / "grid")
        rates = "0.0001,0.0003,0.001,0.003,0.01,0.03,0.1,0.3,1"
        rc = main([
            "gridsearch", "--rates", rates, "--data", text_file,
            "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--kind", "uni", "--T", "16", "--updates", "8", "--hidden", "5",
            "--batch", "4", "--seed", "3", "--out", out,
        ])
        assert rc == 0
        rows = open(os.path.join(out, "rates.csv")).read().strip().split("\n")[1:]
        assert len(rows) == 9
        losses = {float(r.split(",")[0]): float(r.split(",")[1]) for r in rows}
        best = json.load(open(os.path.join(out, "best.json")))
        assert best["validation_loss"] == min(losses.values())

    def test_empty_grid_rejected(self, tmp_path, text_file, prepared):
        rc = main([
            "gridsearch", "--rates", "", "--data", text_file,
            "--alphabet", os.path.join(prepared, "alphabet.json"),
            "--out", str(tmp_path / "x"),
        ])
        assert rc == 2
