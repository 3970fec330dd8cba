"""End-to-end runs of the command-line front end."""

from __future__ import annotations

import json
import math

import pytest

from smstree.cli import main
from smstree.curves import load_curves, rho_grid
from smstree.empirical import read_csv
from smstree.evaluation import parse_report
from smstree.tree import load_tree, random_tree, save_tree

FAST = ["--step", "0.1", "--resolution", "40", "--threads", "1"]


@pytest.fixture()
def data_csv(tmp_path):
    truth = tmp_path / "truth.txt"
    save_tree(random_tree(3, ["gaussian", "clayton"], 0.3, 0.7, seed=2), truth)
    out = tmp_path / "data.csv"
    assert main(["learn", "--synthesize", "--input", str(truth), "--samples", "100",
                 "--seed", "7", "--output", str(out)]) == 0
    return out


class TestCurves:
    def test_default_families_rerun_and_plot(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        assert main(["curves", "--output", str(a)] + FAST) == 0
        assert main(["curves", "--output", str(b)] + FAST) == 0
        assert a.read_bytes() == b.read_bytes()
        curves = load_curves(a)
        assert [c.family.value for c in curves] == ["gaussian", "gumbel", "clayton"]
        plot = (tmp_path / "a_plot.csv").read_text().splitlines()
        data_rows = [ln for ln in plot if not ln.startswith("#")][1:]
        assert len(data_rows) == sum(rho_grid(c.family, 0.1).size for c in curves)
        assert "seed=0" in a.read_text()

    def test_invalid_prior(self, tmp_path, capsys):
        code = main(["curves", "--output", str(tmp_path / "c.txt"), "--families", "clayton",
                     "--prior", "clayton=exponential_on_theta:rate=-2"] + FAST)
        assert code == 2
        assert not (tmp_path / "c.txt").exists()

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"families": "clayton", "step": 0.2}))
        out = tmp_path / "c.txt"
        assert main(["curves", "--config", str(cfg), "--output", str(out),
                     "--step", "0.1", "--resolution", "40"]) == 0
        (curve,) = load_curves(out)
        assert curve.family.value == "clayton"
        assert curve.step == pytest.approx(0.1)


class TestLearn:
    def test_sms_three_columns(self, tmp_path, data_csv, capsys):
        out = tmp_path / "m.txt"
        assert main(["learn", "--input", str(data_csv), "--output", str(out)]) == 0
        assert len(load_tree(out).edges) == 2
        printed = capsys.readouterr().out
        assert "n=3" in printed and "M=100" in printed and "edges=2" in printed

    def test_rerun_identical(self, tmp_path, data_csv):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for out in (a, b):
            assert main(["learn", "--input", str(data_csv), "--output", str(out),
                         "--seed", "3"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_mle_model_evaluates(self, tmp_path, data_csv, capsys):
        model, report = tmp_path / "m.txt", tmp_path / "r.csv"
        assert main(["learn", "--method", "mle", "--families", "gaussian",
                     "--input", str(data_csv), "--output", str(model)]) == 0
        assert main(["eval", "--model", str(model), "--input", str(data_csv),
                     "--output", str(report)]) == 0
        (row,) = parse_report(report.read_text())
        assert row.metric == "avg_logprob" and math.isfinite(row.value)

    def test_malformed_csv(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,c\n1,2,3\n4,x,6\n7,8,9\n")
        out = tmp_path / "m.txt"
        assert main(["learn", "--input", str(bad), "--output", str(out)]) == 3
        assert "line 3" in capsys.readouterr().err
        assert not out.exists()

    def test_missing_curves(self, tmp_path, data_csv):
        out = tmp_path / "m.txt"
        assert main(["learn", "--input", str(data_csv), "--output", str(out),
                     "--families", "frank"]) == 2
        assert not out.exists()

    def test_invalid_family_token(self, tmp_path, data_csv, capsys):
        assert main(["learn", "--input", str(data_csv), "--output", str(tmp_path / "m.txt"),
                     "--families", "student_t"]) == 2
        assert "clayton" in capsys.readouterr().err


class TestEvalAndCompare:
    def test_schema_mismatch(self, tmp_path, data_csv):
        model = tmp_path / "m.txt"
        assert main(["learn", "--input", str(data_csv), "--output", str(model)]) == 0
        other = tmp_path / "other.csv"
        text = data_csv.read_text().splitlines()
        k = next(i for i, ln in enumerate(text) if not ln.startswith("#"))
        text[k] = "p,q,r"
        other.write_text("\n".join(text) + "\n")
        assert main(["eval", "--model", str(model), "--input", str(other),
                     "--train", str(data_csv), "--output", str(tmp_path / "r.csv")]) == 4
        assert not (tmp_path / "r.csv").exists()

    def test_compare_two_folds(self, tmp_path, data_csv):
        out = tmp_path / "cmp.csv"
        assert main(["compare", "--input", str(data_csv), "--folds", "2",
                     "--output", str(out), "--families", "gaussian"]) == 0
        rows = parse_report(out.read_text())
        scores = [r for r in rows if r.metric == "avg_logprob"]
        assert sorted((r.split, r.method) for r in scores) == [
            (0, "mle"), (0, "sms"), (1, "mle"), (1, "sms")]
        assert out.read_text().startswith("#")

    def test_missing_input(self, tmp_path):
        assert main(["compare", "--input", str(tmp_path / "none.csv"),
                     "--output", str(tmp_path / "o.csv")]) == 2


class TestVerify:
    def test_amh_negative_theta(self, tmp_path):
        out = tmp_path / "v.csv"
        assert main(["verify", "--families", "amh", "--theta", "-0.5",
                     "--output", str(out)]) == 0
        rows = [ln.split(",") for ln in out.read_text().splitlines() if not ln.startswith("#")]
        assert rows[0][4] == "verdict"
        assert rows[1][:2] == ["amh", "tp2"] and rows[1][4] == "pass:RR2"

    def test_invalid_token(self, tmp_path, capsys):
        assert main(["verify", "--families", "plackett", "--output",
                     str(tmp_path / "v.csv")]) == 2
        err = capsys.readouterr().err
        assert "gumbel_barnett" in err

    def test_pass_exit_zero(self, tmp_path):
        out = tmp_path / "v.csv"
        assert main(["verify", "--families", "clayton", "--theta", "1,2",
                     "--output", str(out)]) == 0
        assert [r[4] for r in read_rows(out)] == ["pass:TP2", "pass:TP2", "pass"]

    def test_failed_check_gives_exit_one(self, tmp_path, monkeypatch):
        from smstree import cli
        from smstree.copulas import CopulaFamily
        from smstree.verify import VerificationReport

        bad = VerificationReport(CopulaFamily.CLAYTON, "pqd", 1.0, 2.0, False, 0.5, 0.1, 0.2)
        monkeypatch.setattr(cli, "default_checks", lambda *a, **k: [bad])
        out = tmp_path / "v.csv"
        assert main(["verify", "--families", "clayton", "--output", str(out)]) == 1
        assert read_rows(out)[0][4] == "fail"


def read_rows(path):
    return [ln.split(",") for ln in path.read_text().splitlines()
            if not ln.startswith("#")][1:]


class TestSynthesize:
    def test_samples_and_header(self, data_csv):
        d = read_csv(data_csv)
        assert d.M == 100 and d.n == 3
        assert "seed=7" in data_csv.read_text()
