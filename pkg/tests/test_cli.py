import json

import numpy as np
import pytest

from injectcheck.cli import main

WIDTH3_BANK = {"kernels": [{"shape": [3], "values": v}
                           for v in ([1, 0, -1], [1, 0, 1], [-1, 0, 1], [-1, 0, -1])],
               "signal_shape": [5], "boundary": "zero_padded"}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def split_csv(tmp_path):
    p = tmp_path / "split.csv"
    p.write_text("1,0\n0,1\n-1,0\n0,-1\n")
    return str(p)


class TestCheckLayer:
    def test_injective(self, capsys, split_csv):
        code, out, _ = run(capsys, "check-layer", split_csv)
        doc = json.loads(out)
        assert code == 0 and doc["verdict"] == "Injective" and doc["seed"] == 0

    def test_identity_collision(self, capsys, tmp_path):
        p = tmp_path / "i3.csv"
        p.write_text("1,0,0\n0,1,0\n0,0,1\n")
        code, out, _ = run(capsys, "check-layer", str(p))
        doc = json.loads(out)
        assert code == 1 and doc["verdict"] == "NonInjective"
        x, y = (np.array(v) for v in doc["collision"])
        assert np.linalg.norm(np.maximum(x, 0) - np.maximum(y, 0)) <= 1e-9

    def test_malformed(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1,0\n0,oops\n")
        code, _, err = run(capsys, "check-layer", str(p))
        assert code == 3 and "line 2" in err

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "check-layer", str(tmp_path / "nope.csv"))[0] == 3

    def test_negative_tolerance(self, capsys, split_csv):
        assert run(capsys, "check-layer", split_csv, "--tol-rank", "-1")[0] == 3

    def test_bias_and_evidence(self, capsys, split_csv, tmp_path):
        b = tmp_path / "b.csv"
        b.write_text("0.5,0.5,0.5,0.5\n")
        code, out, _ = run(capsys, "check-layer", split_csv, "--bias", str(b))
        assert code == 0
        code, out, _ = run(capsys, "check-layer", split_csv, "--evidence")
        assert len(json.loads(out)["evidence"]) == 4

    def test_orthant(self, capsys, tmp_path):
        p = tmp_path / "i2.csv"
        p.write_text("1,0\n0,1\n")
        assert run(capsys, "check-layer", str(p), "--orthant")[0] == 0

    def test_exit_code_matches_verdict(self, capsys, tmp_path):
        for text in ("1,0\n0,1\n", "1,0\n0,1\n-1,0\n0,-1\n", "1,0\n0,1\n-1,-1\n"):
            p = tmp_path / "w.csv"
            p.write_text(text)
            code, out, _ = run(capsys, "check-layer", str(p))
            verdict = json.loads(out)["verdict"]
            assert code == {"Injective": 0, "NonInjective": 1, "Inconclusive": 2}[verdict]


class TestConstructRoundTrip:
    def test_minimal(self, capsys, tmp_path):
        out_path = tmp_path / "w.csv"
        code, _, _ = run(capsys, "construct", "--minimal", "--n", "3", "--seed", "7",
                         "--out", str(out_path))
        assert code == 0
        rows = [l for l in out_path.read_text().splitlines() if not l.startswith("#")]
        assert len(rows) == 6 and all(len(r.split(",")) == 3 for r in rows)
        assert run(capsys, "check-layer", str(out_path))[0] == 0

    def test_expanded_requires_width(self, capsys):
        assert run(capsys, "construct", "--expanded", "--n", "3", "--m", "5")[0] == 3

    def test_deterministic(self, capsys):
        a = run(capsys, "construct", "--minimal", "--n", "2", "--seed", "11")[1]
        b = run(capsys, "construct", "--minimal", "--n", "2", "--seed", "11")[1]
        assert a == b and "seed=11" in a


class TestOtherCommands:
    def test_thresholds(self, capsys):
        code, out, _ = run(capsys, "thresholds")
        doc = json.loads(out)
        assert code == 0
        assert 10.4 <= doc["union_bound_threshold"] <= 10.6
        assert 3.35 <= doc["cstar_lower"] <= 3.45

    def test_check_conv_padding(self, capsys, tmp_path):
        p = tmp_path / "bank.json"
        p.write_text(json.dumps(WIDTH3_BANK))
        code, out, _ = run(capsys, "check-conv", str(p), "--padding", "4")
        assert code == 0
        assert json.loads(out)["min_channels"] == {"kernel_width": [3], "formula": 8, "exact": 4}
        assert run(capsys, "check-conv", str(p), "--padding", "3")[0] == 2
        code, out, _ = run(capsys, "check-conv", str(p), "--search-padding", "6")
        assert code == 0 and json.loads(out)["padding"] == [4]
        assert run(capsys, "check-conv", str(p), "--full")[0] == 0

    def test_check_conv_needs_mode(self, capsys, tmp_path):
        p = tmp_path / "bank.json"
        p.write_text(json.dumps(WIDTH3_BANK))
        assert run(capsys, "check-conv", str(p))[0] == 3

    def test_lipschitz(self, capsys, split_csv, tmp_path):
        pairs = tmp_path / "pairs.csv"
        code, out, _ = run(capsys, "lipschitz", split_csv, "--exact", "--pairs", "200",
                           "--pairs-csv", str(pairs))
        doc = json.loads(out)
        assert code == 0
        assert doc["C_exact"] == pytest.approx(1 / np.sqrt(8), abs=1e-12)
        assert len(pairs.read_text().splitlines()) == 202

    def test_lipschitz_sampled(self, capsys, split_csv):
        code, out, _ = run(capsys, "lipschitz", split_csv, "--sampled", "500")
        assert code == 0 and json.loads(out)["C_exact"] is None

    def test_gaussian_study_csv(self, capsys, tmp_path):
        out_path = tmp_path / "study.csv"
        args = ["gaussian-study", "--n", "3", "--c-grid", "2,4", "--trials", "10", "--seed", "2",
                "--out", str(out_path)]
        assert run(capsys, *args)[0] == 0
        first = out_path.read_text()
        assert run(capsys, *args, "--threads", "3")[0] == 0
        assert out_path.read_text() == first
        assert first.splitlines()[1] == "c,mean_active_count,dss_at_mean_freq,exact_injective_freq"

    def test_threads_env(self, capsys, monkeypatch):
        monkeypatch.setenv("INJECTCHECK_THREADS", "zero")
        assert run(capsys, "gaussian-study", "--n", "2", "--c-grid", "2", "--trials", "2")[0] == 3

    def test_check_network(self, capsys, tmp_path):
        p = tmp_path / "net.json"
        p.write_text(json.dumps([{"weight": [[1, 0], [0, 1], [-1, 0], [0, -1]]},
                                 {"weight": np.eye(4).tolist()}]))
        assert run(capsys, "check-network", str(p))[0] == 0
        assert run(capsys, "check-network", str(p), "--layerwise")[0] == 2

    def test_cascade(self, capsys):
        code, out, _ = run(capsys, "cascade", "--dims", "2,8,5", "--seed", "1", "--certify")
        doc = json.loads(out)
        assert code == 0 and doc["seed"] == 1 and doc["certificate"]["verdict"] == "Injective"

    def test_cascade_bad_dims(self, capsys):
        assert run(capsys, "cascade", "--dims", "2,8,4")[0] == 3

    def test_no_command(self, capsys):
        assert run(capsys)[0] == 3
