"""Experiment orchestration and regret accounting.

A run is one (policy, repetition) pair.  Random streams are derived from the
master seed with a SplitMix64-based mix so that

* the environment (parameter draws, schedule steps, demand noise and the
  pre-run probes) depends only on ``(master_seed, repetition)``, giving every
  policy of a repetition the same market and the same noise sequence;
* a policy's own randomness depends on ``(master_seed, repetition,
  policy_index)``, so adding a policy never perturbs another's stream.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .demand import DemandConfig, LowRankParams, Schedule, optimal_fixed_price, sample_params, step_schedule
from .geometry import FeasibleSet
from .linalg import thin_svd
from .policies import (
    OPOK,
    OPOL,
    ExploreExploit,
    derive_hyperparams,
    estimate_bounds,
    exploration_rounds,
    make_gdg,
)

log = logging.getLogger(__name__)

POLICY_KINDS = ("opok", "opol", "gdg", "explore_exploit")

_MASK64 = (1 << 64) - 1
STREAM_PARAMS = 1
STREAM_NOISE = 2
STREAM_PROBE = 3
STREAM_POLICY = 4
STREAM_ORACLE = 5


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(*parts):
    """Fold integers into one 64-bit seed: ``h <- splitmix64(h ^ part)``."""
    h = 0
    for part in parts:
        h = splitmix64(h ^ (int(part) & _MASK64))
    return h


class RunDiverged(RuntimeError):
    def __init__(self, label, repetition, round_index):
        super().__init__(f"run {label!r} repetition {repetition} produced NaN at round {round_index}")
        self.label = label
        self.repetition = repetition
        self.round_index = round_index


@dataclass
class PolicySpec:
    label: str
    kind: str
    d: Optional[int] = None
    eta: Optional[float] = None
    delta: Optional[float] = None
    alpha: Optional[float] = None
    min_norm: bool = False
    carry_iterate: bool = False

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")


@dataclass
class ExperimentConfig:
    n: int
    d_true: int
    d_policy: int
    t_horizon: int
    r: float = 20.0
    model_kind: str = "low_rank"
    schedule_kind: str = "stationary"
    drift_sd_z: float = 1.0
    drift_var_v: float = 0.1
    policies: List[PolicySpec] = field(default_factory=lambda: [PolicySpec(k, k) for k in POLICY_KINDS])
    repetitions: int = 1
    master_seed: int = 0
    distribution: DemandConfig = field(default_factory=DemandConfig)
    hyper_mode: str = "revenue_bound"
    p0: Optional[np.ndarray] = None
    probe_count: int = 100
    probe_radius_fraction: float = 1.0
    oracle_restarts: int = 16

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.t_horizon < 1:
            raise ValueError(f"t_horizon must be >= 1, got {self.t_horizon}")
        if not 1 <= self.d_true <= self.n:
            raise ValueError(f"d_true must lie in [1, n={self.n}], got {self.d_true}")
        if not 1 <= self.d_policy <= self.n:
            raise ValueError(f"d_policy must lie in [1, n={self.n}], got {self.d_policy}")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError(f"policy labels must be unique: {labels}")
        if self.model_kind != "low_rank" and any(p.kind == "opok" for p in self.policies):
            raise ValueError("opok needs known features and is only available for the low_rank model")

    @property
    def feasible(self):
        return FeasibleSet(self.r, self.n)

    def schedule(self):
        return Schedule(self.schedule_kind, self.t_horizon, self.drift_sd_z, self.drift_var_v)

    def initial_price(self):
        return np.zeros(self.n) if self.p0 is None else np.asarray(self.p0, dtype=float)


@dataclass
class RoundRecord:
    round: int
    price: np.ndarray
    observed_demand: np.ndarray
    realized_revenue: float
    expected_revenue: float


@dataclass
class RunResult:
    label: str
    repetition: int
    records: List[RoundRecord]
    param_trace: list
    hyperparams: Dict[str, float]
    seeds: Dict[str, int]


@dataclass
class RegretCurve:
    instantaneous: np.ndarray
    cumulative: np.ndarray
    optimal_price: np.ndarray
    optimal_value: float
    heuristic: bool = False


@dataclass
class RegretSummary:
    mean: np.ndarray
    sd: np.ndarray


def run_seeds(config, policy_index, repetition):
    m = config.master_seed
    return {
        "params": mix_seed(m, repetition, STREAM_PARAMS),
        "noise": mix_seed(m, repetition, STREAM_NOISE),
        "probe": mix_seed(m, repetition, STREAM_PROBE),
        "policy": mix_seed(m, repetition, STREAM_POLICY, policy_index),
        "oracle": mix_seed(m, repetition, STREAM_ORACLE),
    }


def sample_environment(config, repetition):
    """Round-1 parameters of a repetition (shared by all policies)."""
    rng = np.random.default_rng(run_seeds(config, 0, repetition)["params"])
    return sample_params(config.model_kind, config.n, config.d_true, config.distribution, rng), rng


def _build_policy(config, spec, params0, seeds, policy_rng):
    s = config.feasible
    p0 = config.initial_price()
    t = config.t_horizon
    if spec.kind == "explore_exploit":
        return ExploreExploit(s, exploration_rounds(t), p0), {}

    if spec.kind == "gdg":
        d_eff = config.n
    elif spec.kind == "opok":
        d_eff = params0.u.shape[1]
    else:
        d_eff = spec.d or config.d_policy

    probe_rng = np.random.default_rng(seeds["probe"])
    noise_rng = np.random.default_rng(mix_seed(seeds["probe"], 1))

    def probe(p):
        return float(params0.observe(p, noise_rng) @ p)

    big_b, big_l = estimate_bounds(probe, p0, config.r, config.probe_count, config.probe_radius_fraction, probe_rng)
    if config.hyper_mode == "feature_bound":
        scale = big_b / (config.r * (1 + config.r))
    else:
        scale = big_b
    cfg = derive_hyperparams(scale, big_l, config.r, d_eff, t, config.hyper_mode)
    for name in ("eta", "delta", "alpha"):
        value = getattr(spec, name)
        if value is not None:
            setattr(cfg, name, value)
    cfg.__post_init__()
    cfg.p0 = p0
    hyper = {"B": big_b, "L": big_l, "eta": cfg.eta, "delta": cfg.delta, "alpha": cfg.alpha, "d": cfg.d}

    if spec.kind == "gdg":
        return make_gdg(cfg, s), hyper
    if spec.kind == "opok":
        return OPOK(params0.u, cfg, s, min_norm=spec.min_norm), hyper
    return OPOL(cfg, s, policy_rng, carry_iterate=spec.carry_iterate), hyper


def run_single(config, policy_index, repetition, keep_records=True, observer=None):
    """Play one policy against one repetition's market for ``t_horizon`` rounds.

    Returns a :class:`RunResult` whose ``param_trace[t - 1]`` holds the
    ground-truth parameters of round ``t``.  ``observer(t, policy, params)``,
    if given, is called after every update.
    """
    spec = config.policies[policy_index]
    seeds = run_seeds(config, policy_index, repetition)
    params, env_rng = sample_environment(config, repetition)
    noise_rng = np.random.default_rng(seeds["noise"])
    policy_rng = np.random.default_rng(seeds["policy"])
    policy, hyper = _build_policy(config, spec, params, seeds, policy_rng)
    schedule = config.schedule()

    records = []
    trace = []
    for t in range(1, config.t_horizon + 1):
        params = step_schedule(schedule, t, params, env_rng, config.distribution)
        p = policy.select_price(policy_rng)
        q = params.observe(p, noise_rng)
        realized = float(q @ p)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q)) and math.isfinite(realized)):
            raise RunDiverged(spec.label, repetition, t)
        policy.update(-realized, q)
        expected = float(params.expected_demand(p) @ p)
        records.append(RoundRecord(t, p, q if keep_records else None, realized, expected))
        trace.append(params)
        if observer is not None:
            observer(t, policy, params)
    return RunResult(spec.label, repetition, records, trace, hyper, seeds)


def compute_regret(records, param_trace, s, optimum=None, rng=None, restarts=16):
    """Per-round regret of ``records`` against the hindsight-optimal fixed price.

    Both sides use expected (noise-free) revenue.  ``optimum`` may carry a
    precomputed result of :func:`optimal_fixed_price` for the same trace.
    """
    if len(records) != len(param_trace):
        raise ValueError(f"{len(records)} records but {len(param_trace)} trace entries")
    if optimum is None:
        optimum = optimal_fixed_price(param_trace, s, rng=rng, restarts=restarts)
    p_star = optimum.price
    cache = {}
    best = np.empty(len(records))
    for i, prm in enumerate(param_trace):
        key = id(prm)
        if key not in cache:
            cache[key] = float(prm.expected_demand(p_star) @ p_star)
        best[i] = cache[key]
    achieved = np.array([rec.expected_revenue for rec in records])
    inst = best - achieved
    return RegretCurve(inst, np.cumsum(inst), p_star, optimum.value, optimum.heuristic)


def aggregate(curves):
    """Per-round mean and sample standard deviation (``n - 1``) of cumulative regret."""
    if not curves:
        raise ValueError("no curves to aggregate")
    lengths = {len(c.cumulative) for c in curves}
    if len(lengths) != 1:
        raise ValueError(f"curves have different lengths: {sorted(lengths)}")
    stack = np.vstack([c.cumulative for c in curves])
    mean = stack.mean(axis=0)
    sd = stack.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros_like(mean)
    return RegretSummary(mean, sd)


def variance_explained(q, k_max):
    """Fraction of squared singular-value mass in the top ``k`` singular vectors, ``k = 1..k_max``."""
    q = np.asarray(q, dtype=float)
    if q.size == 0 or q.ndim != 2:
        raise ValueError("demand matrix must be a non-empty 2-D array")
    if not 1 <= k_max <= min(q.shape):
        raise ValueError(f"k_max must lie in [1, {min(q.shape)}], got {k_max}")
    s = thin_svd(q).values
    energy = s ** 2
    total = energy.sum()
    if total == 0:
        raise ValueError("demand matrix is identically zero")
    return list(np.cumsum(energy)[:k_max] / total)


# ---------------------------------------------------------------------------
# grids


@dataclass
class RunOutcome:
    label: str
    repetition: int
    curve: RegretCurve
    realized_revenue: np.ndarray
    hyperparams: Dict[str, float]
    seeds: Dict[str, int]


def run_and_score(config, policy_index, repetition):
    """:func:`run_single` followed by :func:`compute_regret`, keeping only the curves."""
    res = run_single(config, policy_index, repetition, keep_records=False)
    oracle_rng = np.random.default_rng(res.seeds["oracle"])
    curve = compute_regret(res.records, res.param_trace, config.feasible, rng=oracle_rng,
                           restarts=config.oracle_restarts)
    realized = np.array([rec.realized_revenue for rec in res.records])
    log.info("finished %s rep %d: final cumulative regret %.6g", res.label, repetition, curve.cumulative[-1])
    return RunOutcome(res.label, repetition, curve, realized, res.hyperparams, res.seeds)


def _score_job(job):
    return run_and_score(*job)


def run_experiment(config, threads=1):
    """Run every (policy, repetition) pair; returns ``{label: [RunOutcome, ...]}`` ordered by repetition."""
    jobs = [(config, i, rep) for i in range(len(config.policies)) for rep in range(config.repetitions)]
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_score_job, jobs))
    else:
        outcomes = [_score_job(job) for job in jobs]
    result = {spec.label: [] for spec in config.policies}
    for out in outcomes:
        result[out.label].append(out)
    return result
