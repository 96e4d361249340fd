"""
Configuration management for the QND Leggett-Garg simulator.
Handles key=value config files, environment overrides and validation.

Precedence, lowest first: DEFAULTS, config file, environment, command line.
"""

import os
from dataclasses import dataclass

from errors import ConfigError, ParameterError
from gaussian_dynamics import PhysicalParams
from protocol import DISCARD_MODES, make_theta_grid
from utils import THREADS_ENV_VAR, parse_angle, parse_theta_grid

# Reference experiment parameters; every value is a string as it would appear in a file
DEFAULTS = {
    "g": "1e-7",
    "na": "1e6",
    "nl": "5e8",
    "eta": "0.5e-9",
    "n": "9",
    "theta": "0.5pi",
    "theta_grid": "0:2pi:512",
    "back_action": "true",
    "scattering": "true",
    "polarization_decay": "false",
    "all_toggles": "false",
    "mask": "",
    "discarded": "fired",
    "seed": "1234",
    "samples": "1000000",
    "out": "",
    "output": "text",
    "threads": "",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config_text(text, source="<config>"):
    """
    Parse flat key=value text; '#' starts a comment.

    Returns:
        dict: keys found in the text

    Raises:
        ConfigError: on lines without '=' or unknown keys
    """
    values = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_number}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{line_number}: unknown key {key!r}")
        values[key] = value
    return values


def load_config(path=None):
    """
    Load configuration from DEFAULTS, an optional file and the environment.

    Args:
        path (str, optional): key=value config file

    Returns:
        tuple: (config dict of raw strings, set of keys set explicitly)
    """
    config = dict(DEFAULTS)
    explicit = set()

    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e.strerror or e}") from None
        file_values = parse_config_text(text, source=str(path))
        config.update(file_values)
        explicit.update(file_values)

    if os.environ.get(THREADS_ENV_VAR):
        config["threads"] = os.environ[THREADS_ENV_VAR]
        explicit.add("threads")

    return config, explicit


def apply_overrides(config, explicit, overrides):
    """
    Layer command-line values over a loaded config.

    Args:
        config (dict): raw config strings
        explicit (set): keys already set explicitly
        overrides (dict): key -> string, None meaning "not given"

    Returns:
        tuple: (new config dict, new explicit key set)
    """
    config = dict(config)
    explicit = set(explicit)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown option {key!r}")
        config[key] = str(value)
        explicit.add(key)
    return config, explicit


def _parse_bool(key, text):
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"{key} must be true or false, got {text!r}")


def _parse_number(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {text!r}") from None


def _parse_int(key, text):
    value = _parse_number(key, text)
    if not value.is_integer():
        raise ConfigError(f"{key} must be an integer, got {text!r}")
    return int(value)


def _parse_int_list(key, text):
    if not text.strip():
        return ()
    try:
        return tuple(int(item) for item in text.split(","))
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated list of integers, got {text!r}") from None


@dataclass(frozen=True)
class RunConfig:
    """
    Validated settings for one command.

    Attributes:
        params (PhysicalParams): physical parameters
        n_values (tuple): sequence lengths
        theta (float): single rotation angle
        theta_grid (tuple): (start, stop, points)
        back_action (bool): back-action block on
        scattering (bool): scattering loss on
        all_toggles (bool): run all four back-action/scattering combinations
        mask (tuple): performed slots for sweeps; empty means all
        discarded (str): "fired" or "skipped"; how the run behind each
            correlator of a sweep, triple search or oracle check is chosen
        seed (int): Monte-Carlo seed
        samples (int): Monte-Carlo sample count
        out (str): output path; empty means stdout
        output (str): report format, "text" or "json"
        threads (int): worker cap, None for the CPU count
        explicit (frozenset): keys set by a file, the environment or a flag
    """

    params: PhysicalParams
    n_values: tuple
    theta: float
    theta_grid: tuple
    back_action: bool
    scattering: bool
    all_toggles: bool
    mask: tuple
    discarded: str
    seed: int
    samples: int
    out: str
    output: str
    threads: int
    explicit: frozenset

    @property
    def theta_values(self):
        return make_theta_grid(*self.theta_grid)

    @property
    def toggle_combinations(self):
        """(back_action, scattering) pairs to run."""
        if self.all_toggles:
            return [(True, True), (True, False), (False, True), (False, False)]
        return [(self.back_action, self.scattering)]


def build_run_config(config, explicit=()):
    """
    Validate raw config strings into a RunConfig.

    Raises:
        ConfigError: on any invalid value
    """
    unknown = set(config) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")

    try:
        params = PhysicalParams(
            g=_parse_number("g", config["g"]),
            n_atoms=_parse_number("na", config["na"]),
            n_photons=_parse_number("nl", config["nl"]),
            eta=_parse_number("eta", config["eta"]),
            polarization_decay=_parse_bool("polarization_decay", config["polarization_decay"]),
        )
    except ParameterError as e:
        raise ConfigError(str(e)) from None

    n_values = _parse_int_list("n", config["n"])
    if not n_values or min(n_values) < 2:
        raise ConfigError(f"n must list sequence lengths >= 2, got {config['n']!r}")

    mask = _parse_int_list("mask", config["mask"])
    if mask and (min(mask) < 1 or max(mask) > min(n_values)):
        raise ConfigError(f"mask slots must lie in 1..{min(n_values)}, got {config['mask']!r}")

    discarded = config["discarded"].strip().lower()
    if discarded not in DISCARD_MODES:
        raise ConfigError(f"discarded must be one of {', '.join(DISCARD_MODES)}, got {config['discarded']!r}")

    output = config["output"].strip().lower()
    if output not in ("text", "json"):
        raise ConfigError(f"output must be text or json, got {config['output']!r}")

    seed = _parse_int("seed", config["seed"])
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")

    samples = _parse_int("samples", config["samples"])
    if samples < 1000:
        raise ConfigError(f"samples must be at least 1000, got {samples}")

    threads = None
    if config["threads"].strip():
        threads = _parse_int("threads", config["threads"])
        if threads < 1:
            raise ConfigError(f"threads must be at least 1, got {threads}")

    return RunConfig(
        params=params,
        n_values=n_values,
        theta=parse_angle(config["theta"]),
        theta_grid=parse_theta_grid(config["theta_grid"]),
        back_action=_parse_bool("back_action", config["back_action"]),
        scattering=_parse_bool("scattering", config["scattering"]),
        all_toggles=_parse_bool("all_toggles", config["all_toggles"]),
        mask=mask,
        discarded=discarded,
        seed=seed,
        samples=samples,
        out=config["out"].strip(),
        output=output,
        threads=threads,
        explicit=frozenset(explicit),
    )
