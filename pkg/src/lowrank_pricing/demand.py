"""Simulated markets: parameter sampling, schedules, demand and revenue.

Three demand models are supported:

* low rank:   ``q = U z - U V U^T p + eps``
* full rank:  ``q = c - B p + eps``
* log-linear: ``log q = c + B log(p + shift) + eps``

All distribution parameters live in :class:`DemandConfig`.  Second arguments
of the normal distributions are standard deviations except where a field name
says ``var``.
"""

import dataclasses
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np

from .geometry import FeasibleSet, radial_project, sample_ball
from .linalg import orthonormalize, project_strongly_pd

MODEL_KINDS = ("low_rank", "full_rank", "log_linear")
SCHEDULE_KINDS = ("stationary", "shocks", "drift")


@dataclass
class DemandConfig:
    # linear models (low rank and full rank)
    z_mean: float = 100.0
    z_sd: float = 20.0
    v_mean: float = 0.0
    v_sd: float = 2.0
    lam: float = 10.0
    noise_var: float = 10.0
    # log-linear model
    log_c_mean: float = 5.0
    log_c_sd: float = 1.0
    log_b_mean: float = 0.0
    log_b_sd: float = 0.1
    log_lam: float = 0.1
    log_noise_var: float = 1.0
    price_shift: float = 100.0


@dataclass(frozen=True)
class LowRankParams:
    u: np.ndarray
    z: np.ndarray
    v: np.ndarray
    noise_var: float

    @property
    def n(self):
        return self.u.shape[0]

    def expected_demand(self, p):
        return self.u @ (self.z - self.v @ (self.u.T @ p))

    def observe(self, p, rng):
        q = self.expected_demand(p)
        if self.noise_var > 0:
            q = q + rng.normal(0.0, np.sqrt(self.noise_var), q.shape[0])
        return q

    def linear_terms(self):
        """Full ``(c, B)`` with expected demand ``c - B p``."""
        return self.u @ self.z, self.u @ self.v @ self.u.T


@dataclass(frozen=True)
class FullRankParams:
    c: np.ndarray
    b: np.ndarray
    noise_var: float

    @property
    def n(self):
        return self.c.shape[0]

    def expected_demand(self, p):
        return self.c - self.b @ p

    def observe(self, p, rng):
        q = self.expected_demand(p)
        if self.noise_var > 0:
            q = q + rng.normal(0.0, np.sqrt(self.noise_var), q.shape[0])
        return q

    def linear_terms(self):
        return self.c, self.b


@dataclass(frozen=True)
class LogLinearParams:
    c: np.ndarray
    b: np.ndarray
    noise_var: float
    price_shift: float = 100.0

    @property
    def n(self):
        return self.c.shape[0]

    def _log_price(self, p):
        shifted = np.asarray(p, dtype=float) + self.price_shift
        if np.any(shifted <= 0):
            bad = int(np.argmax(shifted <= 0))
            raise ValueError(f"log-linear demand undefined: price[{bad}] + {self.price_shift} <= 0")
        return np.log(shifted)

    def expected_demand(self, p):
        # median demand: the log-scale noise is left out, not averaged over
        return np.exp(self.c + self.b @ self._log_price(p))

    def observe(self, p, rng):
        a = self.c + self.b @ self._log_price(p)
        if self.noise_var > 0:
            a = a + rng.normal(0.0, np.sqrt(self.noise_var), a.shape[0])
        return np.exp(a)


Params = Union[LowRankParams, FullRankParams, LogLinearParams]


def category_matrix(n, d, rng):
    """Binary ``(n, d)`` membership matrix; every product in exactly one category.

    Redraws until every category is used so the matrix has full column rank.
    """
    if d < 1 or n < d:
        raise ValueError(f"need n >= d >= 1, got n={n}, d={d}")
    while True:
        labels = rng.integers(0, d, size=n)
        if np.unique(labels).size == d:
            break
    m = np.zeros((n, d))
    m[np.arange(n), labels] = 1.0
    return m


def _sample_zv(d, cfg, rng):
    z = rng.normal(cfg.z_mean, cfg.z_sd, d)
    v = project_strongly_pd(rng.normal(cfg.v_mean, cfg.v_sd, (d, d)), cfg.lam)
    return z, v


def sample_low_rank(n, d, cfg=None, rng=None):
    cfg = cfg or DemandConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if d < 1 or n < d:
        raise ValueError(f"need n >= d >= 1, got n={n}, d={d}")
    u = orthonormalize(category_matrix(n, d, rng))
    z, v = _sample_zv(d, cfg, rng)
    return LowRankParams(u=u, z=z, v=v, noise_var=cfg.noise_var)


def sample_full_rank(n, cfg=None, rng=None):
    cfg = cfg or DemandConfig()
    rng = rng if rng is not None else np.random.default_rng()
    c, b = _sample_zv(n, cfg, rng)
    return FullRankParams(c=c, b=b, noise_var=cfg.noise_var)


def sample_log_linear(n, cfg=None, rng=None):
    cfg = cfg or DemandConfig()
    rng = rng if rng is not None else np.random.default_rng()
    c = rng.normal(cfg.log_c_mean, cfg.log_c_sd, n)
    b = project_strongly_pd(rng.normal(cfg.log_b_mean, cfg.log_b_sd, (n, n)), cfg.log_lam)
    return LogLinearParams(c=c, b=b, noise_var=cfg.log_noise_var, price_shift=cfg.price_shift)


def sample_params(kind, n, d, cfg=None, rng=None):
    if kind == "low_rank":
        return sample_low_rank(n, d, cfg, rng)
    if kind == "full_rank":
        return sample_full_rank(n, cfg, rng)
    if kind == "log_linear":
        return sample_log_linear(n, cfg, rng)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def resample(params, cfg, rng):
    """Redraw the time-varying parameters from their generating distributions.

    Latent features ``u`` of a low-rank model are kept.
    """
    if isinstance(params, LowRankParams):
        z, v = _sample_zv(params.z.shape[0], cfg, rng)
        return dataclasses.replace(params, z=z, v=v)
    if isinstance(params, FullRankParams):
        return sample_full_rank(params.n, cfg, rng)
    return sample_log_linear(params.n, cfg, rng)


def expected_demand(params, p):
    return params.expected_demand(np.asarray(p, dtype=float))


def observe_demand(params, p, rng):
    return params.observe(np.asarray(p, dtype=float), rng)


def expected_revenue(params, p):
    """Positive expected revenue ``<E q, p>``."""
    p = np.asarray(p, dtype=float)
    return float(params.expected_demand(p) @ p)


# ---------------------------------------------------------------------------
# schedules


@dataclass
class Schedule:
    kind: str = "stationary"
    t_horizon: int = 1
    drift_sd_z: float = 1.0
    drift_var_v: float = 0.1
    shock_times: List[int] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if self.kind == "shocks" and not self.shock_times:
            self.shock_times = default_shock_times(self.t_horizon)
        if any(b <= a for a, b in zip(self.shock_times, self.shock_times[1:])):
            raise ValueError(f"shock times must be strictly increasing: {self.shock_times}")
        if any(not 1 <= t <= self.t_horizon for t in self.shock_times):
            raise ValueError(f"shock times must lie in [1, {self.t_horizon}]: {self.shock_times}")


def default_shock_times(t_horizon):
    """Rounds ``floor(T/3)`` and ``floor(2T/3)``, dropping any outside ``[1, T]``."""
    times = sorted({t_horizon // 3, (2 * t_horizon) // 3})
    return [t for t in times if 1 <= t <= t_horizon]


def _drift_step(a, m, sched, lam, rng):
    a = a + rng.normal(0.0, sched.drift_sd_z, a.shape)
    m = project_strongly_pd(m + rng.normal(0.0, np.sqrt(sched.drift_var_v), m.shape), lam)
    return a, m


def step_schedule(schedule, t, params, rng, cfg=None):
    """Parameters in force during round ``t``, given those of round ``t - 1``.

    Round 1 always uses the initially sampled parameters.  Shocks redraw the
    parameters at every round listed in ``schedule.shock_times``; drift applies
    a Gaussian random-walk step (followed by the strongly-PD projection) at
    every round after the first.
    """
    cfg = cfg or DemandConfig()
    if schedule.kind == "stationary" or t <= 1:
        return params
    if schedule.kind == "shocks":
        if t in schedule.shock_times:
            return resample(params, cfg, rng)
        return params
    if isinstance(params, LowRankParams):
        z, v = _drift_step(params.z, params.v, schedule, cfg.lam, rng)
        return dataclasses.replace(params, z=z, v=v)
    lam = cfg.log_lam if isinstance(params, LogLinearParams) else cfg.lam
    c, b = _drift_step(params.c, params.b, schedule, lam, rng)
    return dataclasses.replace(params, c=c, b=b)


# ---------------------------------------------------------------------------
# hindsight-optimal fixed price


class ConvergenceError(RuntimeError):
    pass


class OptimalPrice(NamedTuple):
    price: np.ndarray
    value: float
    heuristic: bool


def _group_trace(param_trace):
    """Collapse a trace into ``(params, multiplicity)`` pairs by object identity."""
    groups = {}
    order = []
    for prm in param_trace:
        key = id(prm)
        if key not in groups:
            groups[key] = [prm, 0]
            order.append(key)
        groups[key][1] += 1
    return [tuple(groups[k]) for k in order]


def _pga(objective, gradient, x0, radius, max_iter, tol):
    """Projected gradient ascent over a centered ball with backtracking.

    Stops when the gradient mapping ``||x - P(x + s g)|| / s`` drops below
    ``tol``.  Returns ``(x, value, gradient)``.
    """
    x = radial_project(x0, radius)
    fx = objective(x)
    g = gradient(x)
    step = 1.0 / max(np.linalg.norm(g), 1.0)
    for _ in range(max_iter):
        while True:
            y = radial_project(x + step * g, radius)
            diff = y - x
            fy = objective(y)
            # sufficient-increase condition for the projected step
            if fy >= fx + g @ diff - (diff @ diff) / (2 * step) or step < 1e-300:
                break
            step *= 0.5
        mapping = np.linalg.norm(diff) / step
        x, fx = y, fy
        g = gradient(x)
        if mapping < tol:
            return x, fx, g
        step *= 2.0
    raise ConvergenceError(
        f"fixed-price optimization did not converge after {max_iter} iterations "
        f"(gradient-mapping norm {mapping:.3e})"
    )


def _ball_quadratic_max(h, c, radius):
    """Maximize ``c'x - x'Hx/2`` over the ball for symmetric PSD ``h``.

    Interior solution if the unconstrained maximizer fits, otherwise the
    boundary point ``(H + mu I)^-1 c`` with ``mu`` found by bisection on the
    (decreasing) norm of that point.
    """
    lam, q = np.linalg.eigh(h)
    lam = np.maximum(lam, 0.0)
    cq = q.T @ c

    def point(mu):
        return q @ (cq / (lam + mu))

    if lam[0] > 0:
        x = point(0.0)
        if np.linalg.norm(x) <= radius:
            return x
    lo, hi = 0.0, np.linalg.norm(c) / radius
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.linalg.norm(point(mid)) > radius:
            lo = mid
        else:
            hi = mid
    return point(hi)


def _check_kkt(x, g, radius, scale=1.0):
    gn = np.linalg.norm(g)
    xn = np.linalg.norm(x)
    if gn < 1e-6 * scale:
        return True
    if xn >= radius * (1 - 1e-9):
        cos = (g @ x) / (gn * xn)
        angle = np.arccos(np.clip(cos, -1.0, 1.0))
        tangential = np.linalg.norm(g - (g @ x) / (xn * xn) * x)
        return bool(cos > 0 and (angle < 1e-5 or tangential < 1e-6 * scale))
    return False


def optimal_fixed_price(param_trace, s, rng=None, restarts=16, max_iter=10**6, tol=1e-8):
    """Price in ``s`` maximizing total expected revenue over ``param_trace``.

    For the linear models the total is a concave quadratic, solved exactly as
    a ball-constrained quadratic (eigendecomposition plus a bisection on the
    boundary multiplier) and checked against the KKT conditions of the ball.  For the log-linear model the objective need not be concave: the
    best of ``restarts`` random starts (plus the origin) is returned and the
    result is flagged ``heuristic``.
    """
    trace = list(param_trace)
    if not trace:
        raise ValueError("parameter trace is empty")
    n = trace[0].n
    if any(prm.n != n for prm in trace):
        raise ValueError("all rounds of the trace must share the number of products")
    kinds = {type(prm) for prm in trace}
    if len(kinds) != 1:
        raise ValueError("trace mixes demand model kinds")
    groups = _group_trace(trace)
    total = float(len(trace))
    r = s.radius

    if isinstance(trace[0], LogLinearParams):
        return _optimal_log_linear(groups, total, r, n, rng, restarts, max_iter, tol)

    # the average objective keeps gradients O(1) in T; argmax is unchanged
    first = trace[0]
    shared_u = isinstance(first, LowRankParams) and all(prm.u is first.u or np.array_equal(prm.u, first.u) for prm, _ in groups)
    if shared_u:
        c = sum(w * prm.z for prm, w in groups) / total
        b = sum(w * prm.v for prm, w in groups) / total
        lift = first.u
    else:
        c = 0.0
        b = 0.0
        for prm, w in groups:
            ci, bi = prm.linear_terms()
            c = c + w * ci
            b = b + w * bi
        c, b = c / total, b / total
        lift = None
    bs = b + b.T

    def objective(x):
        return float(c @ x - x @ (b @ x))

    def gradient(x):
        return c - bs @ x

    x = _ball_quadratic_max(bs, c, r)
    fx, g = objective(x), gradient(x)
    if not _check_kkt(x, g, r, scale=max(1.0, float(np.linalg.norm(c)))):
        raise ConvergenceError(f"KKT check failed at the returned optimum (gradient norm {np.linalg.norm(g):.3e})")
    p = lift @ x if lift is not None else x
    return OptimalPrice(price=p, value=fx * total, heuristic=False)


def _optimal_log_linear(groups, total, r, n, rng, restarts, max_iter, tol):
    rng = rng if rng is not None else np.random.default_rng(0)

    def objective(p):
        return sum(w * float(prm.expected_demand(p) @ p) for prm, w in groups) / total

    def gradient(p):
        out = np.zeros(n)
        for prm, w in groups:
            q = prm.expected_demand(p)
            out += w * (q + (prm.b.T @ (p * q)) / (p + prm.price_shift))
        return out / total

    scale = max(abs(objective(np.zeros(n))), np.linalg.norm(gradient(np.zeros(n))), 1.0)
    starts = [np.zeros(n)] + [sample_ball(n, r, rng) for _ in range(restarts)]
    best = None
    for x0 in starts:
        x, fx, _ = _pga(objective, gradient, x0, r, max_iter, tol * scale)
        if best is None or fx > best[1]:
            best = (x, fx)
    return OptimalPrice(price=best[0], value=best[1] * total, heuristic=True)


def demand_matrix(params, prices):
    """Stack expected demands at ``prices`` as columns of an ``(n, T)`` matrix."""
    return np.column_stack([params.expected_demand(np.asarray(p, dtype=float)) for p in prices])
