"""Data model and cost evaluation for the green routing game.

Each player splits a delivery demand between a pollution-taxed direct
option (index 0, think ICEV trucks) and ``R`` congestible routes served
by electric trucks (indices 1..R).  The per-unit delay cost on a route
depends on the flow aggregated over *all* players and vanishes below a
per-player threshold, so routes are free until they congest.

Profiles live on a product of scaled simplices: the coordinates of each
player's vector are nonnegative and sum to her demand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "DelayCost",
    "PlayerSpec",
    "RouteSpec",
    "GameInstance",
    "FlowProfile",
    "FEASIBILITY_RTOL",
    "aggregate_flows",
    "player_cost",
    "player_costs",
    "marginal_route_cost",
    "player_gradient",
    "game_gradient",
    "social_cost",
    "route_jacobian_blocks",
]

# Relative tolerance for the per-player demand conservation check.
FEASIBILITY_RTOL = 1e-9

# Internal cost kernels.  Every supported family reduces to one of these,
# which keeps first and second derivatives exact closed forms.
_SQUARED = 0  # c(X) = max(a*X + b, 0)^2
_RAMP = 1  # c(X) = a * max(X - b, 0)


class DimensionError(ValueError):
    """A profile or vector does not match the instance dimensions."""


@dataclass(frozen=True)
class DelayCost:
    """Per-player, per-route delay cost as a function of aggregated flow.

    The cost is zero on the cost-free interval ``[0, chi]``, then convex
    and strictly increasing.  Only closed families are supported so that
    ``value``, ``slope`` and ``curvature`` agree exactly:

    * ``quadratic`` -- ``k * max(X - chi, 0)**2``
    * ``linear``    -- ``s * max(X - chi, 0)``
    * ``deadline``  -- ``max(mu*X + nu - tau, 0)**2``, the squared lateness
      of a linear trip duration ``mu*X + nu`` against a deadline ``tau``;
      ``chi = max((tau - nu)/mu, 0)``.  When ``tau < nu`` every delivery is
      late even at zero flow and the cost is positive on all of [0, inf).
    """

    family: str
    chi: float
    kind: int
    a: float
    b: float
    mu: float | None = None
    nu: float | None = None
    tau: float | None = None

    @classmethod
    def quadratic(cls, chi: float, coefficient: float = 1.0) -> "DelayCost":
        if chi < 0:
            raise ValueError("quadratic delay cost requires chi >= 0")
        if coefficient <= 0:
            raise ValueError("quadratic delay cost requires coefficient > 0")
        r = float(np.sqrt(coefficient))
        return cls("quadratic", float(chi), _SQUARED, r, -r * float(chi))

    @classmethod
    def linear(cls, chi: float, slope: float) -> "DelayCost":
        if chi < 0:
            raise ValueError("linear delay cost requires chi >= 0")
        if slope <= 0:
            raise ValueError("linear delay cost requires slope > 0")
        return cls("linear", float(chi), _RAMP, float(slope), float(chi))

    @classmethod
    def from_deadline(cls, mu: float, nu: float, tau: float) -> "DelayCost":
        """Compose a linear trip duration ``mu*X + nu`` with a quadratic
        lateness penalty against deadline ``tau``."""
        if mu <= 0 or nu <= 0:
            raise ValueError("trip duration requires mu > 0 and nu > 0")
        if tau < 0:
            raise ValueError("deadline must be nonnegative")
        chi = max((tau - nu) / mu, 0.0)
        return cls(
            "deadline", float(chi), _SQUARED, float(mu), float(nu - tau),
            mu=float(mu), nu=float(nu), tau=float(tau),
        )

    @property
    def kernel(self) -> tuple[int, float, float]:
        """Numeric identity of the cost, used for identical-cost checks."""
        return (self.kind, self.a, self.b)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == _SQUARED:
            z = np.maximum(self.a * x + self.b, 0.0)
            return z * z
        return self.a * np.maximum(x - self.b, 0.0)

    def slope(self, x):
        """First derivative (right derivative at the threshold)."""
        x = np.asarray(x, dtype=float)
        if self.kind == _SQUARED:
            return 2.0 * self.a * np.maximum(self.a * x + self.b, 0.0)
        return np.where(x > self.b, self.a, 0.0)

    def curvature(self, x):
        """Second derivative (zero inside the cost-free interval)."""
        x = np.asarray(x, dtype=float)
        if self.kind == _SQUARED:
            return np.where(self.a * x + self.b > 0.0, 2.0 * self.a * self.a, 0.0)
        return np.zeros_like(x)

    def to_dict(self) -> dict:
        if self.family == "quadratic":
            return {"family": "quadratic", "chi": self.chi, "coefficient": self.a * self.a}
        if self.family == "linear":
            return {"family": "linear", "chi": self.chi, "slope": self.a}
        return {"family": "deadline", "mu": self.mu, "nu": self.nu, "tau": self.tau}


@dataclass(frozen=True)
class PlayerSpec:
    """A logistic operator: demand to ship, pollution price on the direct
    option, and (when the deadline composition is used) a delivery deadline."""

    demand: float
    alpha: float
    tau: float = 0.0

    def __post_init__(self):
        if self.demand < 0:
            raise ValueError("demand must be nonnegative")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")


@dataclass(frozen=True)
class RouteSpec:
    """A congestible route with linear trip duration ``mu*X + nu``.

    Both fields may be omitted when every player's delay cost on the route
    is given explicitly instead of composed from the duration.
    """

    mu: float | None = None
    nu: float | None = None

    def __post_init__(self):
        if (self.mu is None) != (self.nu is None):
            raise ValueError("mu and nu must be given together")
        if self.mu is not None and (self.mu <= 0 or self.nu <= 0):
            raise ValueError("mu and nu must be positive")


class GameInstance:
    """Immutable game: players, routes and an N x R matrix of delay costs."""

    def __init__(
        self,
        players: Sequence[PlayerSpec],
        routes: Sequence[RouteSpec],
        delay_cost: Sequence[Sequence[DelayCost]],
        require_identical_costs: bool = False,
    ):
        self.players = tuple(players)
        self.routes = tuple(routes)
        self.delay_cost = tuple(tuple(row) for row in delay_cost)
        n, r = len(self.players), len(self.routes)
        if n < 1 or r < 1:
            raise ValueError("need at least one player and one route")
        if len(self.delay_cost) != n or any(len(row) != r for row in self.delay_cost):
            raise DimensionError("delay_cost must be an N x R matrix")

        self.demands = np.array([p.demand for p in self.players])
        self.alphas = np.array([p.alpha for p in self.players])
        self._kind = np.array([[c.kind for c in row] for row in self.delay_cost])
        self._a = np.array([[c.a for c in row] for row in self.delay_cost])
        self._b = np.array([[c.b for c in row] for row in self.delay_cost])
        self.chi = np.array([[c.chi for c in row] for row in self.delay_cost])
        self._all_squared = bool((self._kind == _SQUARED).all())

        if require_identical_costs and not self.identical_costs:
            raise ValueError("delay costs differ across players but identical costs were required")

    @classmethod
    def from_linear_durations(
        cls,
        players: Sequence[PlayerSpec],
        routes: Sequence[RouteSpec],
        require_identical_costs: bool = False,
    ) -> "GameInstance":
        """Build the delay-cost matrix by composing each route's duration
        with each player's quadratic lateness penalty."""
        for k, route in enumerate(routes):
            if route.mu is None:
                raise ValueError(f"route {k} has no duration parameters")
        matrix = [
            [DelayCost.from_deadline(rt.mu, rt.nu, p.tau) for rt in routes]
            for p in players
        ]
        return cls(players, routes, matrix, require_identical_costs)

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def n_routes(self) -> int:
        return len(self.routes)

    @property
    def identical_costs(self) -> bool:
        """True when all players face the same delay cost on every route."""
        first = self.delay_cost[0]
        return all(
            row[r].kernel == first[r].kernel
            for row in self.delay_cost
            for r in range(self.n_routes)
        )

    # Vectorised kernels over a vector of aggregated flows X of shape (R,).
    # Each returns an (N, R) matrix.

    def cost_matrix(self, X: np.ndarray) -> np.ndarray:
        z = np.maximum(self._a * X[None, :] + self._b, 0.0)
        if self._all_squared:
            return z * z
        ramp = self._a * np.maximum(X[None, :] - self._b, 0.0)
        return np.where(self._kind == _SQUARED, z * z, ramp)

    def slope_matrix(self, X: np.ndarray) -> np.ndarray:
        z = np.maximum(self._a * X[None, :] + self._b, 0.0)
        if self._all_squared:
            return 2.0 * self._a * z
        ramp = np.where(X[None, :] > self._b, self._a, 0.0)
        return np.where(self._kind == _SQUARED, 2.0 * self._a * z, ramp)

    def cost_and_slope(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cost and first-derivative matrices sharing intermediates; the
        solvers' hot path."""
        z = np.maximum(self._a * X[None, :] + self._b, 0.0)
        if self._all_squared:
            return z * z, 2.0 * self._a * z
        sq = self._kind == _SQUARED
        c = np.where(sq, z * z, self._a * np.maximum(X[None, :] - self._b, 0.0))
        s = np.where(sq, 2.0 * self._a * z, np.where(X[None, :] > self._b, self._a, 0.0))
        return c, s

    def curvature_matrix(self, X: np.ndarray) -> np.ndarray:
        z = self._a * X[None, :] + self._b
        sq = np.where(z > 0.0, 2.0 * self._a * self._a, 0.0)
        return np.where(self._kind == _SQUARED, sq, 0.0)

    def __repr__(self) -> str:
        return f"GameInstance(N={self.n_players}, R={self.n_routes})"


class FlowProfile:
    """Joint strategy: one row per player, columns (direct, route 1..R).

    The wrapped array is copied and frozen; all operations on profiles are
    pure, so profiles can be shared freely across workers.
    """

    def __init__(self, rows: Iterable[Iterable[float]]):
        m = np.array(rows, dtype=float)
        if m.ndim != 2 or m.shape[1] < 2:
            raise DimensionError("profile must be an N x (R+1) matrix")
        m.setflags(write=False)
        self._m = m

    @classmethod
    def uniform(cls, instance: GameInstance) -> "FlowProfile":
        """Spread each player's demand evenly over all R+1 options."""
        n, cols = instance.n_players, instance.n_routes + 1
        return cls(np.tile(instance.demands[:, None] / cols, (1, cols)))

    @classmethod
    def all_direct(cls, instance: GameInstance) -> "FlowProfile":
        m = np.zeros((instance.n_players, instance.n_routes + 1))
        m[:, 0] = instance.demands
        return cls(m)

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def direct(self) -> np.ndarray:
        """Per-player flow on the pollution-taxed option."""
        return self._m[:, 0]

    @property
    def route_flows(self) -> np.ndarray:
        """N x R matrix of per-player flows on the congestible routes."""
        return self._m[:, 1:]

    def with_player_row(self, i: int, row: np.ndarray) -> "FlowProfile":
        m = self._m.copy()
        m[i] = row
        return FlowProfile(m)

    def feasibility_violation(self, instance: GameInstance) -> float:
        """Worst constraint violation: negativity, or scaled conservation gap."""
        if self._m.shape != (instance.n_players, instance.n_routes + 1):
            raise DimensionError(
                f"profile shape {self._m.shape} does not match instance "
                f"({instance.n_players}, {instance.n_routes + 1})"
            )
        neg = max(0.0, -float(self._m.min()))
        sums = self._m.sum(axis=1)
        gap = np.abs(sums - instance.demands) / np.maximum(1.0, instance.demands)
        return max(neg, float(gap.max()))

    def is_feasible(self, instance: GameInstance, rtol: float = FEASIBILITY_RTOL) -> bool:
        return self.feasibility_violation(instance) <= rtol

    def __eq__(self, other) -> bool:
        return isinstance(other, FlowProfile) and np.array_equal(self._m, other._m)

    def __repr__(self) -> str:
        return f"FlowProfile({self._m.tolist()})"


def _check(instance: GameInstance, profile: FlowProfile) -> np.ndarray:
    m = profile.matrix
    if m.shape != (instance.n_players, instance.n_routes + 1):
        raise DimensionError(
            f"profile shape {m.shape} does not match instance "
            f"({instance.n_players}, {instance.n_routes + 1})"
        )
    return m


def aggregate_flows(profile: FlowProfile) -> np.ndarray:
    """Total flow per route, summed over players."""
    return profile.route_flows.sum(axis=0)


def player_cost(instance: GameInstance, profile: FlowProfile, i: int) -> float:
    """Pollution cost plus congestion-priced delay cost of player ``i``."""
    m = _check(instance, profile)
    X = m[:, 1:].sum(axis=0)
    c = instance.cost_matrix(X)
    return float(instance.alphas[i] * m[i, 0] + m[i, 1:] @ c[i])


def player_costs(instance: GameInstance, profile: FlowProfile) -> np.ndarray:
    m = _check(instance, profile)
    X = m[:, 1:].sum(axis=0)
    c = instance.cost_matrix(X)
    return instance.alphas * m[:, 0] + (m[:, 1:] * c).sum(axis=1)


def marginal_route_cost(instance: GameInstance, profile: FlowProfile, i: int, r: int) -> float:
    """Per-unit price of route ``r`` for player ``i``: the route cost plus
    the congestion externality she imposes on her own flow."""
    m = _check(instance, profile)
    if not 0 <= r < instance.n_routes:
        raise DimensionError(f"route index {r} out of range")
    X_r = m[:, 1 + r].sum()
    c = instance.delay_cost[i][r]
    return float(c.value(X_r) + m[i, 1 + r] * c.slope(X_r))


def _gradient_matrix(instance: GameInstance, m: np.ndarray) -> np.ndarray:
    X = m[:, 1:].sum(axis=0)
    g = np.empty_like(m)
    g[:, 0] = instance.alphas
    g[:, 1:] = instance.cost_matrix(X) + m[:, 1:] * instance.slope_matrix(X)
    return g


def player_gradient(instance: GameInstance, profile: FlowProfile, i: int) -> np.ndarray:
    """Gradient of player ``i``'s cost with respect to her own vector."""
    m = _check(instance, profile)
    return _gradient_matrix(instance, m)[i]


def game_gradient(instance: GameInstance, profile: FlowProfile) -> np.ndarray:
    """Stacked per-player gradients; row ``i`` is ``player_gradient(i)``."""
    return _gradient_matrix(instance, _check(instance, profile))


def social_cost(instance: GameInstance, profile: FlowProfile) -> float:
    """Sum of all players' costs."""
    return float(player_costs(instance, profile).sum())


def route_jacobian_blocks(instance: GameInstance, profile: FlowProfile) -> np.ndarray:
    """Per-route N x N Jacobian blocks of the stacked-gradient map.

    Entry (i, j) of block r is the sensitivity of player i's route-r price
    to player j's route-r flow.  The full Jacobian is block diagonal in a
    per-route ordering, with a zero block for the direct option.
    """
    m = _check(instance, profile)
    X = m[:, 1:].sum(axis=0)
    s = instance.slope_matrix(X)
    q = instance.curvature_matrix(X)
    n, r = instance.n_players, instance.n_routes
    blocks = np.empty((r, n, n))
    for k in range(r):
        row = s[:, k] + m[:, 1 + k] * q[:, k]
        blocks[k] = np.tile(row[:, None], (1, n))
        blocks[k][np.diag_indices(n)] += s[:, k]
    return blocks
