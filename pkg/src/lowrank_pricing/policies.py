"""Bandit pricing policies.

Every policy exposes the same two-call round protocol::

    p = policy.select_price(rng)
    policy.update(loss, demand)

where ``loss`` is the *negative* realized revenue ``-<q, p>`` and ``demand``
is the observed demand vector.  Policies are single-threaded objects.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import FeasibleSet, find_price, projection_step, radial_project, sample_ball
from .linalg import random_orthogonal, top_left_singular_vectors, unit_sphere_sample

HYPERPARAM_MODES = ("revenue_bound", "feature_bound")
BOUND_FLOOR = 1e-6
MAX_ALPHA = 0.5


@dataclass
class PolicyConfig:
    eta: float
    delta: float
    alpha: float
    d: int
    p0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")


@dataclass
class PolicyState:
    x: np.ndarray
    u_hat: np.ndarray
    last_price: np.ndarray
    q_hat: Optional[np.ndarray] = None
    last_xi: Optional[np.ndarray] = None
    x_tilde: Optional[np.ndarray] = None
    round: int = 0


def exploration_rounds(t_horizon):
    """``ceil(T^(3/4))``, computed without floating-point overshoot."""
    if t_horizon <= 0:
        return 0
    k = math.ceil(t_horizon ** 0.75)
    while k > 1 and (k - 1) ** 4 >= t_horizon ** 3:
        k -= 1
    while k ** 4 < t_horizon ** 3:
        k += 1
    return k


def derive_hyperparams(scale, lipschitz, r, d, t_horizon, mode="revenue_bound"):
    """Step size, perturbation radius and shrinkage from problem constants.

    ``mode="feature_bound"``: ``scale`` is the bound ``b`` on ``||z_t||`` and
    ``||V_t||_op``; ``lipschitz`` is unused.

        eta = 1 / (b (1 + d) sqrt(T)),  delta = T^(-1/4) sqrt(d r^2 (1 + r) / (9 r + 6))

    ``mode="revenue_bound"``: ``scale`` is the revenue bound ``B`` and
    ``lipschitz`` the Lipschitz constant ``L`` of the low-dimensional revenue.

        eta = r / (B sqrt(T)),  delta = T^(-1/4) sqrt(B d r^2 / (3 (L r + B)))

    In both modes ``alpha = delta / r``.
    """
    for name, value in (("scale", scale), ("lipschitz", lipschitz), ("r", r), ("d", d), ("t_horizon", t_horizon)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    if mode not in HYPERPARAM_MODES:
        raise ValueError(f"unknown hyperparameter mode {mode!r}; expected one of {HYPERPARAM_MODES}")
    if t_horizon <= 9 * d * d / 4:
        warnings.warn(f"horizon T={t_horizon} does not exceed 9 d^2 / 4 = {9 * d * d / 4:g}; regret guarantees do not apply",
                      stacklevel=2)
    root_t = math.sqrt(t_horizon)
    quarter = t_horizon ** -0.25
    if mode == "feature_bound":
        eta = 1.0 / (scale * (1 + d) * root_t)
        delta = quarter * math.sqrt(d * r * r * (1 + r) / (9 * r + 6))
    else:
        eta = r / (scale * root_t)
        delta = quarter * math.sqrt(scale * d * r * r / (3 * (lipschitz * r + scale)))
    alpha = delta / r
    if alpha > MAX_ALPHA:
        warnings.warn(f"derived shrinkage alpha = {alpha:.4g} capped at {MAX_ALPHA}; horizon too short", stacklevel=2)
        alpha = MAX_ALPHA
        delta = alpha * r
    return PolicyConfig(eta=eta, delta=delta, alpha=alpha, d=d)


def estimate_bounds(probe, p0, radius, probe_count=100, probe_radius_fraction=0.05, rng=None):
    """Crude revenue bound ``B`` and Lipschitz constant ``L`` from probe prices.

    ``probe(p)`` returns the observed revenue at price ``p``.  Probes are drawn
    uniformly from a small ball around ``p0`` (radius ``fraction * radius``)
    and clipped into the feasible ball.  ``B`` is the largest absolute probe
    revenue and ``L`` the largest pairwise difference quotient; both are
    floored at ``1e-6``.
    """
    if probe_count < 2:
        raise ValueError(f"need at least 2 probes, got {probe_count}")
    rng = rng if rng is not None else np.random.default_rng()
    p0 = np.asarray(p0, dtype=float)
    prices = np.array([
        radial_project(sample_ball(p0.shape[0], probe_radius_fraction * radius, rng, center=p0), radius)
        for _ in range(probe_count)
    ])
    revenues = np.array([float(probe(p)) for p in prices])
    bound = max(float(np.max(np.abs(revenues))), BOUND_FLOOR)

    dist = np.linalg.norm(prices[:, None, :] - prices[None, :, :], axis=-1)
    gaps = np.abs(revenues[:, None] - revenues[None, :])
    mask = np.triu(dist >= 1e-9, k=1)
    slope = float(np.max(gaps[mask] / dist[mask])) if mask.any() else 0.0
    return bound, max(slope, BOUND_FLOOR)


class OPOK:
    """Bandit gradient descent in the span of known product features.

    Each round perturbs the low-dimensional action ``x_t`` along a random
    unit direction, prices at a preimage of the perturbed action, and takes a
    one-point gradient step followed by a shrunken projection.  By default the
    preimage closest to the previous price is used; ``min_norm=True`` selects
    the minimum-norm preimage ``u @ x`` instead.
    """

    name = "opok"

    def __init__(self, u, config, feasible, min_norm=False):
        u = np.asarray(u, dtype=float)
        if u.shape[0] != feasible.dimension:
            raise ValueError(f"feature matrix has {u.shape[0]} rows but prices live in R^{feasible.dimension}")
        if u.shape[1] != config.d:
            raise ValueError(f"config.d = {config.d} but feature matrix has {u.shape[1]} columns")
        self.config = config
        self.feasible = feasible
        self.min_norm = min_norm
        p0 = np.zeros(feasible.dimension) if config.p0 is None else np.asarray(config.p0, dtype=float)
        if not feasible.contains(p0):
            raise ValueError("initial price p0 lies outside the feasible set")
        self.state = PolicyState(x=u.T @ p0, u_hat=u, last_price=p0.copy())

    def select_price(self, rng):
        st = self.state
        cfg = self.config
        xi = unit_sphere_sample(cfg.d, rng)
        x_tilde = radial_project(st.x + cfg.delta * xi, self.feasible.radius)
        if self.min_norm:
            p = st.u_hat @ x_tilde
        else:
            p = find_price(x_tilde, st.u_hat, self.feasible, st.last_price)
        st.last_xi = xi
        st.x_tilde = x_tilde
        st.last_price = p
        st.round += 1
        return p

    def update(self, loss, demand):
        st = self.state
        if st.last_xi is None:
            raise RuntimeError("update() called before select_price() in this round")
        step = st.x - self.config.eta * loss * st.last_xi
        st.x = projection_step(step, self.config.alpha, st.u_hat, self.feasible)
        st.last_xi = None


def make_gdg(config, feasible):
    """Ambient-dimension bandit gradient descent: OPOK with identity features.

    ``config`` must be derived with ``d = N``.
    """
    gdg = OPOK(np.eye(feasible.dimension), config, feasible)
    gdg.name = "gdg"
    return gdg


class OPOL(OPOK):
    """OPOK with the feature span learned online from observed demands.

    Demand vectors are assigned round-robin to the ``d`` columns of a running
    average matrix; after every update the feature estimate is reset to the
    top ``d`` left singular vectors of that matrix.  With ``carry_iterate``
    the current action is re-expressed in the new basis, so the price-space
    iterate only depends on the estimated span and not on the sign or
    rotation of the singular vectors LAPACK returns.
    """

    name = "opol"

    def __init__(self, config, feasible, rng, carry_iterate=False):
        u0 = random_orthogonal(feasible.dimension, config.d, rng)
        super().__init__(u0, config, feasible, min_norm=True)
        self.carry_iterate = carry_iterate
        self.state.q_hat = np.zeros((feasible.dimension, config.d))

    def update(self, loss, demand):
        super().update(loss, demand)
        st = self.state
        d = self.config.d
        t = st.round
        j = (t - 1) % d
        k = -(-t // d)  # observations assigned to column j so far
        st.q_hat[:, j] = np.asarray(demand, dtype=float) / k + (k - 1) / k * st.q_hat[:, j]
        u_new = top_left_singular_vectors(st.q_hat, d)
        if self.carry_iterate:
            st.x = u_new.T @ (st.u_hat @ st.x)
        st.u_hat = u_new


class ExploreExploit:
    """Uniform random prices for the first ``exploration_horizon`` rounds, then
    the explored price with the highest observed revenue forever after."""

    name = "explore_exploit"

    def __init__(self, feasible, exploration_horizon, p0=None):
        if exploration_horizon < 0:
            raise ValueError(f"exploration horizon must be >= 0, got {exploration_horizon}")
        self.feasible = feasible
        self.exploration_horizon = exploration_horizon
        p0 = np.zeros(feasible.dimension) if p0 is None else np.asarray(p0, dtype=float)
        self.best_price = p0
        self.best_revenue = -np.inf
        self.round = 0
        self._pending = None

    @property
    def exploring(self):
        return self.round <= self.exploration_horizon

    def select_price(self, rng):
        self.round += 1
        if self.exploring:
            p = sample_ball(self.feasible.dimension, self.feasible.radius, rng)
            self._pending = p
            return p
        self._pending = None
        return self.best_price.copy()

    def update(self, loss, demand):
        if self._pending is not None:
            revenue = -loss
            if revenue > self.best_revenue:
                self.best_revenue = revenue
                self.best_price = self._pending
            self._pending = None
