import json

import pytest

import main
from formatters import parse_csv
from utils import THREADS_ENV_VAR


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv(THREADS_ENV_VAR, "1")


def _run(*argv):
    return main.main([str(arg) for arg in argv])


class TestArguments:
    def test_unknown_command_is_a_usage_error(self):
        with pytest.raises(SystemExit) as excinfo:
            _run("frobnicate")
        assert excinfo.value.code == 1

    def test_unknown_flag_is_a_usage_error(self):
        with pytest.raises(SystemExit) as excinfo:
            _run("sweep", "--colour", "blue")
        assert excinfo.value.code == 1

    def test_bad_value_is_a_config_error(self, capsys):
        assert _run("sweep", "--eta", "lots") == 1
        assert "eta" in capsys.readouterr().err

    def test_empty_grid(self, tmp_path):
        assert _run("sweep", "--theta-grid", "0:1:0", "--out", tmp_path / "k.csv") == 1
        assert not (tmp_path / "k.csv").exists()


class TestSweep:
    def test_three_measurements_never_violate(self, tmp_path):
        out = tmp_path / "k3.csv"
        assert _run("sweep", "--n", 3, "--theta-grid", "0:2pi:33", "--out", out) == 0
        kind, records = parse_csv(out)
        assert kind == "sweep"
        assert len(records) == 33
        assert min(r["k_reduced"] for r in records) >= -1e-6
        assert all(r["n"] == 3 and r["back_action"] and r["scattering"] for r in records)

    def test_writes_to_stdout_without_out(self, capsys):
        assert _run("sweep", "--n", 3, "--theta-grid", "0:pi:3") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "theta,n,k_value,k_reduced,back_action,scattering"
        assert len(lines) == 4

    def test_all_toggles(self, tmp_path):
        out = tmp_path / "toggles.csv"
        assert _run("sweep", "--n", 9, "--all-toggles", "--theta-grid", "0.4pi:0.6pi:3", "--out", out) == 0
        _, records = parse_csv(out)
        assert {(r["back_action"], r["scattering"]) for r in records} == {
            (True, True), (True, False), (False, True), (False, False)
        }
        at_quarter_turn = {
            (r["back_action"], r["scattering"]): r["k_reduced"] for r in records if r["theta"] == records[1]["theta"]
        }
        assert at_quarter_turn[(True, True)] < at_quarter_turn[(False, True)]

    def test_mask_selects_performed_slots(self, tmp_path):
        out = tmp_path / "mask.csv"
        assert _run("sweep", "--n", 5, "--mask", "1,3,5", "--theta-grid", "1:2:2", "--out", out) == 0
        _, records = parse_csv(out)
        assert all(r["n"] == 3 for r in records)

    def test_pair_only_runs_never_violate(self, tmp_path):
        out = tmp_path / "skipped.csv"
        assert _run("sweep", "--n", 9, "--discarded", "skipped", "--theta-grid", "0:2pi:17", "--out", out) == 0
        _, records = parse_csv(out)
        assert min(r["k_reduced"] for r in records) >= 0

    def test_polarization_decay_weakens_violation(self, tmp_path):
        fixed, decaying = tmp_path / "fixed.csv", tmp_path / "decaying.csv"
        assert _run("sweep", "--n", 9, "--theta-grid", "0.5pi:0.5pi:1", "--out", fixed) == 0
        assert _run("sweep", "--n", 9, "--theta-grid", "0.5pi:0.5pi:1", "--polarization-decay", "--out", decaying) == 0
        k_fixed = parse_csv(fixed)[1][0]["k_reduced"]
        k_decaying = parse_csv(decaying)[1][0]["k_reduced"]
        assert k_fixed < k_decaying < 0

    def test_too_short_sequence(self):
        assert _run("sweep", "--n", 2) == 1

    def test_unwritable_output(self, tmp_path):
        assert _run("sweep", "--n", 3, "--theta-grid", "0:1:2", "--out", tmp_path / "missing" / "k.csv") == 2


class TestTriple:
    def test_seven_slots_at_quarter_turn(self, tmp_path):
        out = tmp_path / "triple.csv"
        assert _run("triple", "--n", 7, "--theta", "0.5pi", "--out", out) == 0
        kind, records = parse_csv(out)
        assert kind == "triple"
        assert len(records) == 1
        assert records[0]["k3"] < 0
        for column in ("mask_ab", "mask_bc", "mask_ac"):
            assert set(records[0]["triple"]) <= set(records[0][column])

    def test_decoupled_light(self, tmp_path):
        out = tmp_path / "g0.csv"
        assert _run("triple", "--n", 5, "--g", 0, "--theta-grid", "0:pi:3", "--out", out) == 0
        _, records = parse_csv(out)
        assert len(records) == 3
        assert all(r["k3"] == 1.0 for r in records)

    def test_config_file_grid_is_used(self, tmp_path):
        config = tmp_path / "triple.conf"
        config.write_text("theta_grid = 0.25pi:0.75pi:2\ndiscarded = skipped\n", encoding="utf-8")
        out = tmp_path / "triple.csv"
        assert _run("triple", "--config", config, "--n", 4, "--out", out) == 0
        _, records = parse_csv(out)
        assert len(records) == 2
        assert all(r["triple"] == r[column] for r in records for column in ("mask_ab", "mask_bc", "mask_ac"))


class TestAudit:
    def test_ideal_qnd_json(self, capsys):
        assert _run("audit", "--eta", 0, "--output", "json") == 0
        report = json.loads(capsys.readouterr().out)
        for section in report["sections"]:
            assert section["values"]["mean_diff"] == 0.0
            assert section["values"]["var_diff"] == pytest.approx(0.0, abs=1e-9)

    def test_scattering_matches_closed_form(self, capsys):
        assert _run("audit", "--output", "json") == 0
        report = json.loads(capsys.readouterr().out)
        lossy = next(s for s in report["sections"] if s["name"] == "with scattering")["values"]
        assert lossy["var_diff"] == pytest.approx(lossy["var_diff (closed form)"], rel=1e-9)
        assert lossy["var_diff"] > 0

    def test_text_report(self, tmp_path, capsys):
        out = tmp_path / "audit.txt"
        assert _run("audit", "--g", 0, "--out", out) == 0
        text = out.read_text(encoding="utf-8")
        assert text.startswith("Disturbance audit")
        assert "without scattering:" in text
        assert f"Output saved to {out}" in capsys.readouterr().out


class TestOracleCheck:
    def test_small_run_passes(self, capsys):
        assert _run("oracle-check", "--n", 3, "--samples", 20000, "--output", "json") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] is True
        assert len(report["sections"]) == main.ORACLE_MATRICES + 3
        assert any(s["name"].startswith("sequence-optimized K_3") for s in report["sections"])

    def test_negative_seed_is_a_config_error(self, capsys):
        assert _run("oracle-check", "--n", 3, "--samples", 20000, "--seed", -1) == 1
        assert "seed" in capsys.readouterr().err


class TestPlot:
    def _sweep(self, tmp_path, *extra):
        csv_path = tmp_path / "sweep.csv"
        assert _run("sweep", *extra, "--out", csv_path) == 0
        return csv_path

    def test_single_row(self, tmp_path):
        csv_path = self._sweep(tmp_path, "--n", 3, "--theta-grid", "1:1:1")
        assert _run("plot", csv_path) == 0
        svg = (tmp_path / "sweep.svg").read_text(encoding="utf-8")
        assert "<svg" in svg

    def test_one_series_per_length(self, tmp_path, capsys):
        csv_path = self._sweep(tmp_path, "--n", "3,5,7,9", "--theta-grid", "0:2pi:5")
        svg_path = tmp_path / "figure.svg"
        assert _run("plot", csv_path, "--out", svg_path) == 0
        out = capsys.readouterr().out
        assert "Plotted 4 series (n=3, n=5, n=7, n=9)" in out
        assert svg_path.exists()

    def test_toggle_series_are_labelled(self, tmp_path, capsys):
        csv_path = self._sweep(tmp_path, "--n", 3, "--all-toggles", "--theta-grid", "0:pi:2")
        assert _run("plot", csv_path) == 0
        out = capsys.readouterr().out
        assert "Plotted 4 series" in out
        assert "back action off, scattering off" in out

    def test_triple_csv(self, tmp_path):
        csv_path = tmp_path / "triple.csv"
        assert _run("triple", "--n", 4, "--theta-grid", "0:pi:3", "--out", csv_path) == 0
        assert _run("plot", csv_path) == 0
        assert (tmp_path / "triple.svg").exists()

    def test_missing_file(self, tmp_path):
        assert _run("plot", tmp_path / "absent.csv") == 2

    def test_malformed_row_reports_line(self, tmp_path, capsys):
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text(
            "theta,n,k_value,k_reduced,back_action,scattering\n"
            "0,3,1,1,true,true\n"
            "0.5,3,oops,1,true,true\n",
            encoding="utf-8",
        )
        assert _run("plot", csv_path) == 2
        assert "line 3" in capsys.readouterr().err

    def test_unknown_header(self, tmp_path, capsys):
        csv_path = tmp_path / "other.csv"
        csv_path.write_text("a,b\n1,2\n", encoding="utf-8")
        assert _run("plot", csv_path) == 2
        assert "line 1" in capsys.readouterr().err
