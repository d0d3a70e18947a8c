"""Iterative dynamics: simultaneous projected-gradient play (SIRD), a
proximal-point baseline with momentum and diminishing steps, single-player
best response, and multi-start search for the social optimum.

All solvers keep every iterate feasible by projecting each player's row
back onto her demand simplex, and are deterministic given (instance,
start, config, seed).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .game import FlowProfile, GameInstance, player_costs, route_jacobian_blocks
from .projection import project_rows

__all__ = [
    "STOP_CONVERGED",
    "STOP_MAX_ITERATIONS",
    "STOP_DIVERGED",
    "SolverConfig",
    "SolverReport",
    "Trace",
    "BestResponseResult",
    "BestResponseError",
    "default_epsilon",
    "feasible_starts",
    "estimate_gradient_lipschitz",
    "sird",
    "itproxpt",
    "best_response",
    "social_optimum",
]

STOP_CONVERGED = "converged"
STOP_MAX_ITERATIONS = "max_iterations"
STOP_DIVERGED = "divergence_detected"

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53)


@dataclass
class SolverConfig:
    """Knobs shared by all solvers.

    ``gamma`` is the fixed step size; when omitted it is derived from the
    co-coercivity bound if that is positive, and otherwise from a sampled
    bound on the gradient Jacobian norm (with divergence-triggered
    halving).  For the proximal-point baseline the k-th update uses step
    ``gamma * k**(-power)`` with momentum weight ``theta``; a schedule
    exponent of zero gives a constant step.
    """

    gamma: float | None = None
    epsilon: float | None = None
    max_iterations: int = 1_000_000
    theta: float = 0.5
    power: float = 0.5
    seed: int = 0
    gamma_cap: float | None = None
    trace: bool = False
    reference: np.ndarray | None = None

    def __post_init__(self):
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        # theta = 0 / power = 0 are allowed here (momentum-free, constant
        # step) so the baseline degenerates to the plain dynamics; scenario
        # files are stricter and require theta in (0, 1).
        if not 0 <= self.theta < 1:
            raise ValueError("theta must lie in [0, 1)")
        if not 0 <= self.power <= 1:
            raise ValueError("power must lie in [0, 1]")


@dataclass
class Trace:
    iterations: np.ndarray
    step_norm: np.ndarray
    social_cost: np.ndarray
    player_costs: np.ndarray
    ref_distance: np.ndarray | None = None


@dataclass
class SolverReport:
    profile: FlowProfile
    iterations: int
    stop_reason: str
    gamma: float
    epsilon: float
    trace: Trace | None = None
    halvings: int = 0
    local_minima: list[float] | None = None
    minima_disagree: bool | None = None


class BestResponseError(RuntimeError):
    """Best-response iteration hit the iteration cap; carries the best iterate."""

    def __init__(self, message: str, best: np.ndarray):
        super().__init__(message)
        self.best = best


@dataclass
class BestResponseResult:
    vector: np.ndarray
    cost: float
    multiple_optima: bool
    iterations: int


def default_epsilon(instance: GameInstance) -> float:
    return 1e-9 * max(1.0, float(instance.demands.sum()))


def _halton(start: int, count: int, dims: int) -> np.ndarray:
    """Low-discrepancy points in (0,1)^dims, van der Corput per dimension."""
    if dims > len(_PRIMES):
        raise ValueError("too many dimensions for the Halton table")
    idx = np.arange(start + 1, start + count + 1, dtype=np.int64)
    out = np.empty((count, dims))
    for d in range(dims):
        base = _PRIMES[d]
        i = idx.copy()
        f, x = 1.0, np.zeros(count)
        while i.max() > 0:
            f /= base
            x += f * (i % base)
            i //= base
        out[:, d] = x
    return out


def feasible_starts(instance: GameInstance, count: int, seed: int = 0) -> list[FlowProfile]:
    """Deterministic well-spread feasible profiles, derived from the seed.

    Low-discrepancy points in the unit cube are mapped onto each player's
    simplex by exponential spacing, which spreads them over the interior.
    """
    n, cols = instance.n_players, instance.n_routes + 1
    pts = _halton(seed * 7919, count, n * cols).reshape(count, n, cols)
    w = -np.log(np.clip(pts, 1e-12, 1.0))
    w /= w.sum(axis=2, keepdims=True)
    return [FlowProfile(w[k] * instance.demands[:, None]) for k in range(count)]


def _social_hessian_blocks(instance: GameInstance, profile: FlowProfile) -> np.ndarray:
    """Per-route N x N Hessian blocks of the total-cost objective."""
    m = profile.route_flows
    X = m.sum(axis=0)
    s = instance.slope_matrix(X)
    w = (m * instance.curvature_matrix(X)).sum(axis=0)
    n, r = instance.n_players, instance.n_routes
    blocks = np.empty((r, n, n))
    for k in range(r):
        blocks[k] = s[:, k][:, None] + s[:, k][None, :] + w[k]
    return blocks


def estimate_gradient_lipschitz(
    instance: GameInstance, samples: int = 256, seed: int = 0, social: bool = False
) -> float:
    """Sampled upper bound on the Jacobian norm of the stacked-gradient map
    (or of the social-cost Hessian) over the feasible set."""
    worst = 0.0
    for profile in feasible_starts(instance, samples, seed):
        if social:
            blocks = _social_hessian_blocks(instance, profile)
        else:
            blocks = route_jacobian_blocks(instance, profile)
        norms = np.linalg.norm(blocks, ord=2, axis=(1, 2))
        worst = max(worst, float(norms.max()))
    return worst


def _resolve_gamma(instance: GameInstance, config: SolverConfig) -> tuple[float, bool]:
    """Return (gamma, auto).  ``auto`` enables divergence-triggered halving."""
    if config.gamma is not None:
        if config.gamma_cap is not None and config.gamma >= config.gamma_cap:
            warnings.warn(
                f"step size {config.gamma} is not below the stability cap "
                f"{config.gamma_cap}; convergence is not guaranteed",
                stacklevel=3,
            )
        return config.gamma, False
    from . import analysis  # local import; analysis depends on this module

    try:
        bound = analysis.step_size_bound(instance, samples=2048, seed=config.seed)
        if bound.condition_holds and bound.a > 0:
            return bound.a, False
    except ValueError:
        pass
    lip = estimate_gradient_lipschitz(instance, seed=config.seed)
    return (1.0 / lip if lip > 0 else 1.0), True


class _Recorder:
    def __init__(self, instance: GameInstance, config: SolverConfig):
        self.enabled = config.trace
        self.instance = instance
        self.ref = None
        if config.reference is not None:
            self.ref = np.asarray(config.reference, dtype=float)
        self.rows: list[tuple] = []

    def record(self, k: int, step: float, x: np.ndarray):
        if not self.enabled:
            return
        costs = player_costs(self.instance, FlowProfile(x))
        dist = np.linalg.norm(x - self.ref) if self.ref is not None else np.nan
        self.rows.append((k, step, float(costs.sum()), costs, dist))

    def build(self) -> Trace | None:
        if not self.enabled:
            return None
        ks = np.array([r[0] for r in self.rows], dtype=int)
        steps = np.array([r[1] for r in self.rows])
        socials = np.array([r[2] for r in self.rows])
        costs = np.array([r[3] for r in self.rows]) if self.rows else np.empty((0, 0))
        dists = np.array([r[4] for r in self.rows]) if self.ref is not None else None
        return Trace(ks, steps, socials, costs, dists)


def _gradient(instance: GameInstance, m: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    X = m[:, 1:].sum(axis=0)
    c, s = instance.cost_and_slope(X)
    g = out if out is not None else np.empty_like(m)
    g[:, 0] = instance.alphas
    np.multiply(m[:, 1:], s, out=g[:, 1:])
    g[:, 1:] += c
    return g


def sird(
    instance: GameInstance, start: FlowProfile, config: SolverConfig | None = None
) -> SolverReport:
    """Simultaneous improving response dynamics.

    Every player takes one projected-gradient step at once, using only the
    previous joint profile; the run stops when the joint step norm drops
    below ``epsilon``.  A profile is a fixed point exactly when it solves
    the equilibrium conditions, so a run started at an equilibrium stops
    after one iteration.
    """
    config = config or SolverConfig()
    eps = config.epsilon if config.epsilon is not None else default_epsilon(instance)
    gamma, auto = _resolve_gamma(instance, config)
    rec = _Recorder(instance, config)

    x = start.matrix.copy()
    buf = np.empty_like(x)
    recent: list[float] = []
    halvings = 0
    stop, k = STOP_MAX_ITERATIONS, config.max_iterations
    for k in range(1, config.max_iterations + 1):
        g = _gradient(instance, x, buf)
        x_new = project_rows(instance.demands, x - gamma * g)
        diff = x_new - x
        step = float(np.sqrt((diff * diff).sum()))
        if not np.isfinite(step):
            stop = STOP_DIVERGED
            k -= 1
            break
        x = x_new
        rec.record(k, step, x)
        if step < eps:
            stop = STOP_CONVERGED
            break
        if auto:
            recent.append(step)
            if len(recent) > 50:
                if step > 10.0 * recent[0]:
                    gamma *= 0.5
                    halvings += 1
                    recent.clear()
                else:
                    recent.pop(0)

    return SolverReport(FlowProfile(x), k, stop, gamma, eps, rec.build(), halvings)


def itproxpt(
    instance: GameInstance, start: FlowProfile, config: SolverConfig | None = None
) -> SolverReport:
    """Proximal-point baseline: projected gradient step with a momentum
    term ``theta * (x[k-1] - x[k-2])`` and diminishing steps ``k**(-power)``.

    The lagged iterate is initialised equal to the start, so the first
    update carries no momentum.
    """
    config = config or SolverConfig()
    eps = config.epsilon if config.epsilon is not None else default_epsilon(instance)
    scale = config.gamma if config.gamma is not None else 1.0
    rec = _Recorder(instance, config)

    x = start.matrix.copy()
    x_prev = x.copy()
    stop, k = STOP_MAX_ITERATIONS, config.max_iterations
    for k in range(1, config.max_iterations + 1):
        gamma_k = scale * float(k) ** (-config.power)
        drift = _gradient(instance, x) + config.theta * (x - x_prev)
        x_new = project_rows(instance.demands, x - gamma_k * drift)
        diff = x_new - x
        step = float(np.sqrt((diff * diff).sum()))
        if not np.isfinite(step):
            stop = STOP_DIVERGED
            k -= 1
            break
        x_prev, x = x, x_new
        rec.record(k, step, x)
        if step < eps:
            stop = STOP_CONVERGED
            break

    return SolverReport(FlowProfile(x), k, stop, scale, eps, rec.build())


def _single_player_lipschitz(instance: GameInstance, i: int, other: np.ndarray) -> float:
    d = float(instance.demands[i])
    hi = other + d
    s = instance.slope_matrix(hi)[i]
    q = instance.curvature_matrix(hi)[i]
    return float(np.max(2.0 * s + d * q))


def best_response(
    instance: GameInstance,
    profile: FlowProfile,
    i: int,
    config: SolverConfig | None = None,
    kkt_tolerance: float = 1e-7,
    warm_start: np.ndarray | None = None,
) -> BestResponseResult:
    """Minimise player ``i``'s cost against fixed opponent flows.

    The single-player problem is convex; a projected-gradient loop runs
    until the player's own optimality residual drops below
    ``kkt_tolerance``.  When the minimiser is not unique because the
    player still has cost-free room to shuffle flow into, the result is
    flagged via ``multiple_optima``.
    """
    config = config or SolverConfig()
    other = profile.route_flows.sum(axis=0) - profile.route_flows[i]
    demand = float(instance.demands[i])
    alpha = float(instance.alphas[i])

    lip = _single_player_lipschitz(instance, i, other)
    gamma = 1.0 / lip if lip > 0 else 1.0
    totals = np.array([demand])

    v = warm_start.copy() if warm_start is not None else profile.matrix[i].copy()
    scale = max(1.0, demand)

    def residual(v: np.ndarray) -> float:
        c, s = instance.cost_and_slope(other + v[1:])
        prices = np.concatenate(([alpha], c[i] + v[1:] * s[i]))
        mu = prices - prices.min()
        return float(np.abs(mu * v).max())

    g = np.empty_like(v)
    g[0] = alpha
    it = 0
    for it in range(1, config.max_iterations + 1):
        c, s = instance.cost_and_slope(other + v[1:])
        g[1:] = c[i] + v[1:] * s[i]
        v_new = project_rows(totals, (v - gamma * g)[None, :])[0]
        diff = v_new - v
        step = float(np.sqrt((diff * diff).sum()))
        v = v_new
        # keep refining until the coordinates stop moving at float
        # granularity; the residual check exits earlier in the usual case
        if step < 1e-16 * scale or (it % 64 == 0 and residual(v) <= kkt_tolerance):
            break
    if residual(v) > kkt_tolerance:
        raise BestResponseError(
            f"best response for player {i} stalled at optimality residual "
            f"{residual(v):.3e} (target {kkt_tolerance:.1e}) after {it} iterations",
            best=v,
        )

    X = other + v[1:]
    cost = alpha * v[0] + float(v[1:] @ instance.cost_matrix(X)[i])
    slack = np.maximum(instance.chi[i] - X, 0.0)
    multiple = cost <= 1e-9 * scale and float(slack.sum()) > 1e-9 * scale
    return BestResponseResult(v, cost, multiple, it)


def _social_gradient(instance: GameInstance, m: np.ndarray) -> np.ndarray:
    X = m[:, 1:].sum(axis=0)
    c, s = instance.cost_and_slope(X)
    g = np.empty_like(m)
    g[:, 0] = instance.alphas
    g[:, 1:] = c + (m[:, 1:] * s).sum(axis=0)[None, :]
    return g


def social_optimum(
    instance: GameInstance, config: SolverConfig | None = None, starts: int = 5
) -> SolverReport:
    """Multi-start projected gradient descent on the total cost.

    With identical delay costs the objective is convex and every start
    agrees; heterogeneous costs may produce distinct local minima, which
    the report records along with a disagreement flag (relative spread
    above 1e-6).
    """
    if starts < 1:
        raise ValueError("starts must be at least 1")
    config = config or SolverConfig()
    eps = config.epsilon if config.epsilon is not None else default_epsilon(instance)
    lip = estimate_gradient_lipschitz(instance, seed=config.seed, social=True)
    gamma = config.gamma if config.gamma is not None else (1.0 / lip if lip > 0 else 1.0)

    points = [FlowProfile.uniform(instance)]
    if starts > 1:
        points += feasible_starts(instance, starts - 1, config.seed)

    best: tuple[float, np.ndarray, int, str] | None = None
    minima: list[float] = []
    for start in points:
        x = start.matrix.copy()
        stop, k = STOP_MAX_ITERATIONS, config.max_iterations
        for k in range(1, config.max_iterations + 1):
            x_new = project_rows(instance.demands, x - gamma * _social_gradient(instance, x))
            diff = x_new - x
            step = float(np.sqrt((diff * diff).sum()))
            if not np.isfinite(step):
                stop = STOP_DIVERGED
                break
            x = x_new
            if step < eps:
                stop = STOP_CONVERGED
                break
        value = float(player_costs(instance, FlowProfile(x)).sum())
        minima.append(value)
        if best is None or value < best[0]:
            best = (value, x, k, stop)

    spread = max(minima) - min(minima)
    disagree = spread > 1e-6 * max(1.0, abs(min(minima)))
    value, x, k, stop = best
    return SolverReport(
        FlowProfile(x), k, stop, gamma, eps,
        local_minima=sorted(minima), minima_disagree=disagree,
    )
