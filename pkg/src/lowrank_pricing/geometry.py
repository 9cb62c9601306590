"""Feasible price set and the two per-round convex subproblems.

The feasible set is always a centered Euclidean ball, which turns both
subproblems (price recovery and the shrunken projection) into closed forms.
"""

from dataclasses import dataclass

import numpy as np

FEASIBILITY_TOL = 1e-9


class InfeasibleError(ValueError):
    """No price in the feasible set maps to the requested low-dimensional action."""


@dataclass(frozen=True)
class FeasibleSet:
    """Centered ball ``{p in R^dimension : ||p|| <= radius}``."""

    radius: float
    dimension: int

    def __post_init__(self):
        if not self.radius >= 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")

    def contains(self, p, tol=FEASIBILITY_TOL):
        return bool(np.linalg.norm(p) <= self.radius + tol)


def radial_project(x, radius):
    """Euclidean projection of ``x`` onto the centered ball of ``radius``."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    if nrm <= radius:
        return x.copy()
    return x * (radius / nrm)


def find_price(x, u, s, p_ref):
    """Price closest to ``p_ref`` inside ``s`` whose projection ``u.T @ p`` is ``x``.

    With ``p = u @ x + w`` and ``w`` orthogonal to ``span(u)``, the objective
    separates and the optimal ``w`` is the complement component of ``p_ref``,
    shrunk radially when needed so that ``||x||**2 + ||w||**2 <= r**2``.
    Actions within ``1e-9`` outside the ball are clamped onto it.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    r = s.radius
    nx = np.linalg.norm(x)
    if nx > r + FEASIBILITY_TOL:
        raise InfeasibleError(f"||x|| = {nx:.12g} exceeds radius {r}; no feasible price maps to x")
    if nx > r:
        x = x * (r / nx)
        nx = r
    base = u @ x
    w = p_ref - u @ (u.T @ p_ref)
    budget_sq = max(r * r - nx * nx, 0.0)
    nw = np.linalg.norm(w)
    if nw * nw > budget_sq:
        w = w * (np.sqrt(budget_sq) / nw) if nw > 0 else w
    return base + w


def projection_step(x, alpha, u, s):
    """Project ``x`` onto the shrunken image ``(1 - alpha) * u.T(S)``.

    For orthonormal ``u`` the image ``u.T(S)`` is the ``d``-ball of the same
    radius, so this is a radial projection onto radius ``(1 - alpha) * r``.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[1] != x.shape[0]:
        raise ValueError(f"basis shape {u.shape} does not match action dimension {x.shape[0]}")
    return radial_project(x, (1 - alpha) * s.radius)


def sample_ball(n, radius, rng, center=None):
    """Uniform sample from the ball of ``radius`` in ``R^n`` (optionally shifted)."""
    g = rng.standard_normal(n)
    nrm = np.linalg.norm(g)
    while nrm == 0:
        g = rng.standard_normal(n)
        nrm = np.linalg.norm(g)
    p = g / nrm * radius * rng.random() ** (1.0 / n)
    if center is not None:
        p = p + center
    return p
