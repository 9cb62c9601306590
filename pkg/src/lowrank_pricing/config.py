"""Experiment configuration files.

The format is INI (``configparser``) with these sections; every key is
optional except ``[experiment] n``, ``d_true`` and ``t_horizon``::

    [experiment]
    n = 100                      ; number of products N
    d_true = 10                  ; rank of the simulated low-rank model
    d_policy = 10                ; working rank of OPOL (defaults to d_true)
    t_horizon = 10000            ; rounds T
    radius = 20                  ; feasible ball radius r (>= 1)
    model = low_rank             ; low_rank | full_rank | log_linear
    repetitions = 10
    master_seed = 0
    hyperparameter_mode = revenue_bound   ; revenue_bound | feature_bound
    initial_price = zero         ; "zero" or N comma-separated numbers
    probe_count = 100            ; prices probed before round 1
    probe_radius_fraction = 1.0  ; probe ball radius as a fraction of r
    oracle_restarts = 16         ; random starts of the log-linear p* search

    [schedule]
    kind = stationary            ; stationary | shocks | drift
    drift_sd_z = 1.0             ; sd of the baseline random walk
    drift_var_v = 0.1            ; variance of the elasticity random walk

    [distribution]
    ; any field of DemandConfig, e.g. z_mean, z_sd, v_sd, lam, noise_var,
    ; log_c_mean, log_c_sd, log_b_sd, log_lam, log_noise_var, price_shift

    [policies]
    run = opok, opol, gdg, explore_exploit

    [policy.<label>]             ; optional, one per label listed in run
    kind = opol                  ; defaults to the label itself
    d = 5                        ; OPOL working rank override
    eta = 0.001                  ; fixed hyperparameters skip estimation
    delta = 0.5
    alpha = 0.025
    min_norm = false             ; OPOK: minimum-norm price recovery
    carry_iterate = false        ; OPOL: re-express x after basis refresh
"""

import configparser
import dataclasses
import io
import re

import numpy as np

from .demand import MODEL_KINDS, SCHEDULE_KINDS, DemandConfig
from .harness import POLICY_KINDS, ExperimentConfig, PolicySpec
from .policies import HYPERPARAM_MODES


class ConfigError(ValueError):
    """Malformed configuration; the message names the section, key and line."""


_EXPERIMENT_KEYS = {
    "n": int, "d_true": int, "d_policy": int, "t_horizon": int, "radius": float,
    "model": str, "repetitions": int, "master_seed": int, "hyperparameter_mode": str,
    "initial_price": str, "probe_count": int, "probe_radius_fraction": float,
    "oracle_restarts": int,
}
_SCHEDULE_KEYS = {"kind": str, "drift_sd_z": float, "drift_var_v": float}
_POLICY_KEYS = {"kind": str, "d": int, "eta": float, "delta": float, "alpha": float,
                "min_norm": bool, "carry_iterate": bool}
_DIST_KEYS = {f.name: float for f in dataclasses.fields(DemandConfig)}


def _line_index(text):
    """Map ``(section, key)`` to 1-based line numbers for diagnostics."""
    index = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[(.+)\]$", stripped)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = lineno
            continue
        m = re.match(r"^([^=:;#\s][^=:]*?)\s*[=:]", stripped)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = lineno
    return index


class _Reader:
    def __init__(self, parser, lines):
        self.parser = parser
        self.lines = lines

    def where(self, section, key=None):
        line = self.lines.get((section, key))
        loc = f"[{section}]" + (f" {key}" if key else "")
        return f"{loc} (line {line})" if line else loc

    def check_keys(self, section, allowed):
        for key in self.parser[section]:
            if key not in allowed:
                raise ConfigError(f"{self.where(section, key)}: unknown key; expected one of {sorted(allowed)}")

    def get(self, section, key, kind, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                raise ConfigError(f"[{section}]: missing required key {key!r}")
            return default
        raw = self.parser.get(section, key).strip()
        try:
            if kind is bool:
                return self.parser.getboolean(section, key)
            if kind is int:
                return int(raw)
            if kind is float:
                value = float(raw)
                if not np.isfinite(value):
                    raise ValueError
                return value
            return raw
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: invalid {kind.__name__} value {raw!r}") from None


def parse_config(text, source="<config>"):
    """Parse configuration text into an :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    rd = _Reader(parser, _line_index(text))

    for section in parser.sections():
        if section not in ("experiment", "schedule", "distribution", "policies") and not section.startswith("policy."):
            raise ConfigError(f"{rd.where(section)}: unknown section")
    if not parser.has_section("experiment"):
        raise ConfigError(f"{source}: missing [experiment] section")

    ex = "experiment"
    rd.check_keys(ex, _EXPERIMENT_KEYS)
    n = rd.get(ex, "n", int, required=True)
    d_true = rd.get(ex, "d_true", int, required=True)
    kw = dict(
        n=n,
        d_true=d_true,
        d_policy=rd.get(ex, "d_policy", int, d_true),
        t_horizon=rd.get(ex, "t_horizon", int, required=True),
        r=rd.get(ex, "radius", float, 20.0),
        model_kind=rd.get(ex, "model", str, "low_rank"),
        repetitions=rd.get(ex, "repetitions", int, 1),
        master_seed=rd.get(ex, "master_seed", int, 0),
        hyper_mode=rd.get(ex, "hyperparameter_mode", str, "revenue_bound"),
        probe_count=rd.get(ex, "probe_count", int, 100),
        probe_radius_fraction=rd.get(ex, "probe_radius_fraction", float, 1.0),
        oracle_restarts=rd.get(ex, "oracle_restarts", int, 16),
    )
    if kw["model_kind"] not in MODEL_KINDS:
        raise ConfigError(f"{rd.where(ex, 'model')}: expected one of {MODEL_KINDS}, got {kw['model_kind']!r}")
    if kw["hyper_mode"] not in HYPERPARAM_MODES:
        raise ConfigError(f"{rd.where(ex, 'hyperparameter_mode')}: expected one of {HYPERPARAM_MODES}, got {kw['hyper_mode']!r}")

    raw_p0 = rd.get(ex, "initial_price", str, "zero")
    if raw_p0.lower() != "zero":
        try:
            p0 = np.array([float(x) for x in raw_p0.split(",")])
        except ValueError:
            raise ConfigError(f"{rd.where(ex, 'initial_price')}: expected 'zero' or comma-separated numbers") from None
        if p0.shape[0] != n:
            raise ConfigError(f"{rd.where(ex, 'initial_price')}: expected {n} prices, got {p0.shape[0]}")
        kw["p0"] = p0

    if parser.has_section("schedule"):
        rd.check_keys("schedule", _SCHEDULE_KEYS)
        kw["schedule_kind"] = rd.get("schedule", "kind", str, "stationary")
        if kw["schedule_kind"] not in SCHEDULE_KINDS:
            raise ConfigError(f"{rd.where('schedule', 'kind')}: expected one of {SCHEDULE_KINDS}, got {kw['schedule_kind']!r}")
        kw["drift_sd_z"] = rd.get("schedule", "drift_sd_z", float, 1.0)
        kw["drift_var_v"] = rd.get("schedule", "drift_var_v", float, 0.1)

    dist = DemandConfig()
    if parser.has_section("distribution"):
        rd.check_keys("distribution", _DIST_KEYS)
        dist = DemandConfig(**{k: rd.get("distribution", k, float) for k in parser["distribution"]})
    kw["distribution"] = dist

    labels = list(POLICY_KINDS)
    if parser.has_section("policies"):
        rd.check_keys("policies", {"run"})
        raw = rd.get("policies", "run", str, "")
        labels = [x.strip() for x in raw.split(",") if x.strip()]
        if not labels:
            raise ConfigError(f"{rd.where('policies', 'run')}: no policies listed")
    for section in parser.sections():
        if section.startswith("policy.") and section[len("policy."):] not in labels:
            raise ConfigError(f"{rd.where(section)}: label not listed in [policies] run")
    specs = []
    for label in labels:
        section = f"policy.{label}"
        opts = {}
        if parser.has_section(section):
            rd.check_keys(section, _POLICY_KEYS)
            opts = {k: rd.get(section, k, _POLICY_KEYS[k]) for k in parser[section]}
        kind = opts.pop("kind", label)
        if kind not in POLICY_KINDS:
            where = rd.where(section, "kind") if parser.has_section(section) else rd.where("policies", "run")
            raise ConfigError(f"{where}: unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")
        specs.append(PolicySpec(label=label, kind=kind, **opts))
    kw["policies"] = specs

    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg):
    """Render a fully resolved configuration; ``parse_config(dump_config(c)) == c``."""
    out = io.StringIO()
    out.write("[experiment]\n")
    p0 = "zero" if cfg.p0 is None else ", ".join(repr(float(x)) for x in cfg.p0)
    for key, value in (
        ("n", cfg.n), ("d_true", cfg.d_true), ("d_policy", cfg.d_policy), ("t_horizon", cfg.t_horizon),
        ("radius", float(cfg.r)), ("model", cfg.model_kind), ("repetitions", cfg.repetitions),
        ("master_seed", cfg.master_seed), ("hyperparameter_mode", cfg.hyper_mode), ("initial_price", p0),
        ("probe_count", cfg.probe_count), ("probe_radius_fraction", float(cfg.probe_radius_fraction)),
        ("oracle_restarts", cfg.oracle_restarts),
    ):
        out.write(f"{key} = {_fmt(value)}\n")
    out.write("\n[schedule]\n")
    out.write(f"kind = {cfg.schedule_kind}\n")
    out.write(f"drift_sd_z = {_fmt(float(cfg.drift_sd_z))}\n")
    out.write(f"drift_var_v = {_fmt(float(cfg.drift_var_v))}\n")
    out.write("\n[distribution]\n")
    for f in dataclasses.fields(DemandConfig):
        out.write(f"{f.name} = {_fmt(float(getattr(cfg.distribution, f.name)))}\n")
    out.write("\n[policies]\n")
    out.write("run = " + ", ".join(p.label for p in cfg.policies) + "\n")
    for spec in cfg.policies:
        out.write(f"\n[policy.{spec.label}]\n")
        out.write(f"kind = {spec.kind}\n")
        for key in ("d", "eta", "delta", "alpha"):
            value = getattr(spec, key)
            if value is not None:
                out.write(f"{key} = {_fmt(value)}\n")
        out.write(f"min_norm = {_fmt(spec.min_norm)}\n")
        out.write(f"carry_iterate = {_fmt(spec.carry_iterate)}\n")
    return out.getvalue()


def config_items(cfg):
    """Flat ``(key, value)`` pairs of the resolved configuration, for manifests."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(dump_config(cfg))
    return [(f"{section}.{key}", value) for section in parser.sections() for key, value in parser[section].items()]
