import numpy as np
import pytest

from robustsurv.cli import main

CONFIG = """
[schedule]
visit_times = [0.0, 30.0]
anchor = 1
tau_grid = [60.0]

[data]
id = "id"
followup = "X"
event = "Delta"

[data.visits]
1 = ["L11", "L12", "L13"]
2 = ["L21", "L22"]

[model]
event = "oracle:trial"
censor = "oracle:trial"
folds = 2
trim = 0.05
seed = 3

[regression]
basis = "linear"
w_columns = ["L11", "L12", "L13"]
"""


@pytest.fixture
def workspace(tmp_path):
    config = tmp_path / "config.toml"
    config.write_text(CONFIG)
    data = tmp_path / "data.csv"
    assert main(["simulate", "--n", "200", "--seed", "4", "--out", str(data)]) == 0
    return tmp_path, config, data


class TestFit:
    def test_marginal_fit_writes_table(self, workspace, capsys):
        tmp, config, data = workspace
        out = tmp / "est.csv"
        code = main(["fit", "--data", str(data), "--config", str(config),
                     "--out", str(out), "--marginal"])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].split(",")[:4] == ["estimator", "tau", "w", "estimate"]
        assert len(lines) == 2
        assert "folds=2" in capsys.readouterr().out

    def test_conditional_fit_one_row_per_w(self, workspace):
        tmp, config, data = workspace
        out = tmp / "est.csv"
        assert main(["fit", "--data", str(data), "--config", str(config),
                     "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) > 2  # one per distinct anchor covariate row

    def test_each_estimator_kind_accepted(self, workspace):
        tmp, config, data = workspace
        for kind in ("mr", "g", "ipcw"):
            out = tmp / f"{kind}.csv"
            assert main(["fit", "--data", str(data), "--config", str(config),
                         "--out", str(out), "--marginal", "--estimator", kind]) == 0

    def test_bad_tau_config_exits_2(self, workspace, capsys):
        tmp, config, data = workspace
        bad = tmp / "bad.toml"
        bad.write_text(CONFIG.replace("tau_grid = [60.0]", "tau_grid = [0.0]"))
        code = main(["fit", "--data", str(data), "--config", str(bad),
                     "--out", str(tmp / "x.csv")])
        assert code == 2
        assert "anchor" in capsys.readouterr().err

    def test_unknown_nuisance_exits_2(self, workspace, capsys):
        tmp, config, data = workspace
        bad = tmp / "bad.toml"
        bad.write_text(CONFIG.replace('event = "oracle:trial"', 'event = "forest"'))
        code = main(["fit", "--data", str(data), "--config", str(bad),
                     "--out", str(tmp / "x.csv")])
        # the model name is only resolved at fit time: a fit error, not config
        assert code == 4

    def test_malformed_data_exits_3(self, workspace, capsys):
        tmp, config, data = workspace
        bad = tmp / "bad.csv"
        text = data.read_text().splitlines()
        text[1] = text[1].replace(text[1].split(",")[1], "not-a-number", 1)
        bad.write_text("\n".join(text) + "\n")
        code = main(["fit", "--data", str(bad), "--config", str(config),
                     "--out", str(tmp / "x.csv")])
        assert code == 3

    def test_missing_data_file_exits_3(self, workspace):
        tmp, config, _ = workspace
        code = main(["fit", "--data", str(tmp / "none.csv"), "--config", str(config),
                     "--out", str(tmp / "x.csv")])
        assert code == 3


class TestSimulateRoundtrip:
    def test_simulate_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["simulate", "--n", "100", "--seed", "9", "--out", str(a)]) == 0
        assert main(["simulate", "--n", "100", "--seed", "9", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestTruth:
    def test_prints_value_near_published(self, capsys):
        assert main(["truth", "--n", "200000", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        value = float(out.split("=")[1].split("(")[0])
        assert abs(value - 0.47) < 0.01


class TestVerify:
    def test_passes_and_prints_table(self, capsys):
        assert main(["verify", "--reps", "40", "--seed", "2"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out
        assert "remainder" in out and "ipcw_representation" in out


class TestBenchmark:
    def test_writes_csv_and_json_idempotently(self, tmp_path, capsys):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        args = ["benchmark", "--reps", "3", "--n", "150", "--seed", "5", "--marginal"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
        assert (tmp_path / "r1.json").exists()


class TestHelp:
    def test_help_lists_config_keys(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for key in ("visit_times", "tau_grid", "folds", "trim", "w_columns", "basis"):
            assert key in out
