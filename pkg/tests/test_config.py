import math
import os
import stat

import pytest

from config import apply_overrides, build_run_config, load_config, parse_config_text
from errors import ConfigError
from utils import THREADS_ENV_VAR, atomic_write, parse_angle, parse_theta_grid, worker_count


@pytest.fixture(autouse=True)
def no_thread_cap(monkeypatch):
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)


def _write(tmp_path, text):
    path = tmp_path / "run.conf"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestAngles:
    @pytest.mark.parametrize("text,expected", [
        ("1.2", 1.2),
        ("0.5pi", 0.5 * math.pi),
        ("2*pi", 2 * math.pi),
        ("pi", math.pi),
        ("π", math.pi),
        ("-pi", -math.pi),
        ("-0.25pi", -0.25 * math.pi),
        (" 3 ", 3.0),
    ])
    def test_parse_angle(self, text, expected):
        assert parse_angle(text) == pytest.approx(expected)

    @pytest.mark.parametrize("text", ["", "half", "pipi", "inf", "1.2.3"])
    def test_rejects_garbage(self, text):
        with pytest.raises(ConfigError):
            parse_angle(text)

    def test_grid(self):
        assert parse_theta_grid("0:2pi:512") == (0.0, pytest.approx(2 * math.pi), 512)
        assert parse_theta_grid("1:1:1") == (1.0, 1.0, 1)

    @pytest.mark.parametrize("text", ["0:1:0", "0:1", "1:0:5", "0:1:x"])
    def test_bad_grids(self, text):
        with pytest.raises(ConfigError):
            parse_theta_grid(text)


class TestConfigFile:
    def test_comments_and_dashed_keys(self):
        values = parse_config_text("# baseline run\ng = 2e-7  # stronger\ntheta-grid = 0:pi:9\n\n")
        assert values == {"g": "2e-7", "theta_grid": "0:pi:9"}

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match="run.conf:2"):
            parse_config_text("g=1e-7\ncolour=blue\n", source="run.conf")

    def test_line_without_equals(self):
        with pytest.raises(ConfigError):
            parse_config_text("eta\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.conf"))

    def test_defaults_are_reference_values(self):
        config = build_run_config(*load_config())
        assert config.params.g == 1e-7
        assert config.params.n_atoms == 1e6
        assert config.params.n_photons == 5e8
        assert config.params.eta == 0.5e-9
        assert config.params.polarization_decay is False
        assert config.discarded == "fired"
        assert config.theta == pytest.approx(math.pi / 2)
        assert len(config.theta_values) == 512
        assert config.n_values == (9,)
        assert config.toggle_combinations == [(True, True)]
        assert config.threads is None
        assert config.explicit == frozenset()


class TestPrecedence:
    @pytest.mark.parametrize("in_file,flag,expected", [
        (None, None, 1e-7),
        ("3e-7", None, 3e-7),
        (None, "5e-7", 5e-7),
        ("3e-7", "5e-7", 5e-7),
    ])
    def test_flags_override_file(self, tmp_path, in_file, flag, expected):
        path = _write(tmp_path, f"g = {in_file}\n") if in_file else None
        config, explicit = load_config(path)
        config, explicit = apply_overrides(config, explicit, {"g": flag})
        assert build_run_config(config, explicit).params.g == expected
        assert ("g" in explicit) == bool(in_file or flag)

    def test_environment_overrides_file_and_flag_overrides_environment(self, tmp_path, monkeypatch):
        path = _write(tmp_path, "threads = 2\n")
        monkeypatch.setenv(THREADS_ENV_VAR, "3")
        config, explicit = load_config(path)
        assert build_run_config(config, explicit).threads == 3
        config, explicit = apply_overrides(config, explicit, {"threads": "5"})
        assert build_run_config(config, explicit).threads == 5

    def test_unknown_override(self):
        config, explicit = load_config()
        with pytest.raises(ConfigError):
            apply_overrides(config, explicit, {"colour": "blue"})


class TestValidation:
    @pytest.mark.parametrize("key,value", [
        ("g", "strong"),
        ("na", "0"),
        ("eta", "-1"),
        ("n", "2,x"),
        ("n", "1"),
        ("mask", "0,2"),
        ("discarded", "dropped"),
        ("output", "xml"),
        ("samples", "10"),
        ("seed", "1.5"),
        ("seed", "-1"),
        ("polarization_decay", "sometimes"),
        ("threads", "0"),
        ("back_action", "maybe"),
        ("theta_grid", "0:1:0"),
    ])
    def test_rejects_invalid_values(self, key, value):
        config, explicit = apply_overrides(*load_config(), {key: value})
        with pytest.raises(ConfigError):
            build_run_config(config, explicit)

    def test_lists_and_toggles(self):
        config, explicit = apply_overrides(*load_config(), {
            "n": "3,5,7,9", "mask": "1,3", "all_toggles": "yes", "samples": "1e4",
        })
        run = build_run_config(config, explicit)
        assert run.n_values == (3, 5, 7, 9)
        assert run.mask == (1, 3)
        assert run.samples == 10_000
        assert len(run.toggle_combinations) == 4

    def test_polarization_decay_and_zero_seed(self):
        config, explicit = apply_overrides(*load_config(), {"polarization_decay": "on", "seed": "0"})
        run = build_run_config(config, explicit)
        assert run.params.polarization_decay is True
        assert run.seed == 0


class TestWorkerCount:
    def test_environment_caps_workers(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV_VAR, "2")
        assert worker_count(8) == 2

    def test_default_is_at_least_one(self):
        assert worker_count() >= 1

    def test_bad_environment_value(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV_VAR, "many")
        with pytest.raises(ConfigError):
            worker_count(4)


class TestAtomicWrite:
    def test_replaces_contents(self, tmp_path):
        path = tmp_path / "out.csv"
        path.write_text("old\n")
        atomic_write(path, "new\n")
        assert path.read_text() == "new\n"
        assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]

    def test_mode_follows_umask(self, tmp_path):
        previous = os.umask(0o027)
        try:
            atomic_write(tmp_path / "report.txt", "ok\n")
        finally:
            os.umask(previous)
        assert stat.S_IMODE((tmp_path / "report.txt").stat().st_mode) == 0o640
