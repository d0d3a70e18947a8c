"""Equilibrium verification and diagnostics.

Checks stationarity/complementarity conditions on flow profiles, recovers
multipliers in closed form, estimates the co-coercivity step-size bound by
sampling, probes essential uniqueness with multi-start dynamics, sweeps
one-dimensional equilibrium families, and computes the price of anarchy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .game import (
    FlowProfile,
    GameInstance,
    aggregate_flows,
    player_costs,
    route_jacobian_blocks,
    social_cost,
)
from .solvers import (
    STOP_CONVERGED,
    BestResponseError,
    SolverConfig,
    SolverReport,
    best_response,
    default_epsilon,
    feasible_starts,
    sird,
    social_optimum,
)

__all__ = [
    "AnalysisError",
    "KktReport",
    "StepBound",
    "UniquenessReport",
    "FamilyPoint",
    "PoaReport",
    "default_kkt_tolerance",
    "kkt_verify",
    "cocoercivity_lhs",
    "step_size_bound",
    "detect_free_multiplicity",
    "uniqueness_probe",
    "ne_family_sweep",
    "price_of_anarchy",
]


class AnalysisError(RuntimeError):
    pass


@dataclass
class KktReport:
    """Multiplier estimates and residuals for an equilibrium check.

    The per-player multiplier is recovered as the smallest per-option
    price (the direct option's pollution rate, or a route's marginal
    cost); slack multipliers are the price gaps.  Stationarity then holds
    identically, so the verdict rests on complementarity (price gaps on
    options that carry flow) and feasibility.
    """

    lambdas: np.ndarray
    multipliers: np.ndarray
    stationarity_residual: float
    complementarity_residual: float
    feasibility_residual: float
    tolerance: float
    is_ne: bool
    costs: np.ndarray
    social_cost: float

    @property
    def max_residual(self) -> float:
        return max(
            self.stationarity_residual,
            self.complementarity_residual,
            self.feasibility_residual,
        )


@dataclass
class StepBound:
    """Sampled co-coercivity modulus and the induced step-size cap.

    ``a`` is the worst sampled value of the per-route curvature margin,
    restricted to points where the route cost is strictly increasing;
    ``condition_holds`` additionally requires the margin to stay at or
    above ``a`` on every sampled point, including cost-free ones (where
    the margin is zero), so it fails whenever a cost-free interval is
    reachable.  ``min_eigenvalue`` is the smallest eigenvalue of the
    symmetrised gradient Jacobian found across the samples, a positive
    semidefiniteness cross-check of the same condition.
    """

    a: float
    gamma_max: float
    condition_holds: bool
    min_lhs_all: float
    min_lhs_restricted: float | None
    min_eigenvalue: float
    worst_profile: FlowProfile
    samples: int


@dataclass
class UniquenessReport:
    essentially_unique: bool
    inconclusive: bool
    witnesses: list[FlowProfile]
    witness_costs: np.ndarray
    aggregated_flows_agree: bool | None
    all_cost_free_regime: bool
    failed_starts: int


@dataclass
class FamilyPoint:
    value: float
    profile: FlowProfile | None
    is_ne: bool
    social_cost: float
    status: str


@dataclass
class PoaReport:
    optimum_cost: float
    worst_ne_cost: float
    poa: float
    provenance: str
    optimum_profile: FlowProfile
    worst_profile: FlowProfile


def default_kkt_tolerance(instance: GameInstance) -> float:
    """Verification tolerance scaled to the instance's demand volume."""
    return 1e-6 * max(1.0, float(instance.demands.sum()))


def kkt_verify(
    instance: GameInstance, profile: FlowProfile, tolerance: float | None = None
) -> KktReport:
    """Check the equilibrium optimality conditions on a profile.

    Never raises on bad profiles: an infeasible input simply reports a
    positive feasibility residual and a negative verdict.
    """
    if tolerance is None:
        tolerance = default_kkt_tolerance(instance)
    m = profile.matrix
    X = m[:, 1:].sum(axis=0)
    beta = instance.cost_matrix(X) + m[:, 1:] * instance.slope_matrix(X)
    prices = np.column_stack([instance.alphas, beta])

    lambdas = prices.min(axis=1)
    multipliers = prices - lambdas[:, None]
    complementarity = float(np.abs(multipliers * m).max())
    feasibility = profile.feasibility_violation(instance)
    costs = player_costs(instance, profile)

    is_ne = feasibility <= tolerance and complementarity <= tolerance
    return KktReport(
        lambdas=lambdas,
        multipliers=multipliers,
        stationarity_residual=0.0,
        complementarity_residual=complementarity,
        feasibility_residual=feasibility,
        tolerance=tolerance,
        is_ne=is_ne,
        costs=costs,
        social_cost=float(costs.sum()),
    )


def cocoercivity_lhs(instance: GameInstance, profile: FlowProfile) -> np.ndarray:
    """Per-route curvature margin ``2c' (1 - (c''/2c')^2 ||x_r||^2)``.

    Defined as zero on routes whose cost is locally flat (cost-free
    aggregated flow), matching the separate flat-case handling of the
    semidefiniteness argument.
    """
    m = profile.route_flows
    X = m.sum(axis=0)
    s = instance.slope_matrix(X)[0]
    q = instance.curvature_matrix(X)[0]
    norms2 = (m * m).sum(axis=0)
    out = np.zeros_like(s)
    pos = s > 1e-15
    ratio = np.zeros_like(s)
    ratio[pos] = q[pos] / (2.0 * s[pos])
    out[pos] = 2.0 * s[pos] * (1.0 - ratio[pos] ** 2 * norms2[pos])
    return out


def step_size_bound(
    instance: GameInstance, samples: int = 10_000, seed: int = 0
) -> StepBound:
    """Estimate the co-coercivity modulus by sampling feasible profiles.

    Requires identical delay costs across players.  Sampling uses a
    deterministic low-discrepancy sequence over the interior of the
    feasible set, so repeated calls with the same seed agree exactly.
    """
    if not instance.identical_costs:
        raise ValueError("step size bound requires identical delay costs across players")
    if samples < 1:
        raise ValueError("samples must be at least 1")

    min_all = np.inf
    min_restricted = np.inf
    min_eig = np.inf
    worst = None
    for profile in feasible_starts(instance, samples, seed):
        lhs = cocoercivity_lhs(instance, profile)
        flat = instance.slope_matrix(profile.route_flows.sum(axis=0))[0] <= 1e-15
        if not flat.all():
            r_min = float(lhs[~flat].min())
            if r_min < min_restricted:
                min_restricted = r_min
                worst = profile
        low = float(lhs.min())
        if low < min_all:
            min_all = low
            if worst is None:
                worst = profile
        blocks = route_jacobian_blocks(instance, profile)
        sym = blocks + np.transpose(blocks, (0, 2, 1))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(sym).min()))

    has_restricted = np.isfinite(min_restricted)
    a = max(0.0, min_restricted) if has_restricted else 0.0
    condition = bool(min_all >= a > 0.0)
    return StepBound(
        a=a,
        gamma_max=2.0 * a,
        condition_holds=condition,
        min_lhs_all=float(min_all),
        min_lhs_restricted=float(min_restricted) if has_restricted else None,
        min_eigenvalue=float(min_eig),
        worst_profile=worst,
        samples=samples,
    )


def detect_free_multiplicity(instance: GameInstance, profile: FlowProfile) -> list[int]:
    """Players whose best response is non-unique at this profile: total
    cost zero while some route still has strictly positive cost-free room."""
    scale = max(1.0, float(instance.demands.sum()))
    costs = player_costs(instance, profile)
    X = aggregate_flows(profile)
    slack = instance.chi - X[None, :]
    flagged = []
    for i in range(instance.n_players):
        if costs[i] <= 1e-9 * scale and float(slack[i].max()) > 1e-9 * scale:
            flagged.append(i)
    return flagged


def _polish(
    instance: GameInstance,
    profile: FlowProfile,
    config: SolverConfig,
    target: float,
) -> FlowProfile:
    """Refine a near-equilibrium by round-robin best responses until its
    residual drops below ``target``.

    Gradient steps of a best-response run started at a player's current
    vector vanish on her cost-free routes, so free-route splits (and with
    them witness diversity) are preserved.
    """
    m = profile.matrix.copy()
    scale = max(1.0, float(instance.demands.sum()))
    inner = max(1e-7, target / 50.0)
    for _ in range(60):
        change = 0.0
        for i in range(instance.n_players):
            res = best_response(
                instance, FlowProfile(m), i, config,
                kkt_tolerance=inner, warm_start=m[i].copy(),
            )
            change = max(change, float(np.abs(res.vector - m[i]).max()))
            m[i] = res.vector
        done = FlowProfile(m)
        if kkt_verify(instance, done, target).is_ne or change < 1e-12 * scale:
            break
    return done


def uniqueness_probe(
    instance: GameInstance,
    config: SolverConfig | None = None,
    starts: int = 8,
    kkt_tolerance: float | None = None,
) -> UniquenessReport:
    """Run the simultaneous dynamics from several well-spread starts and
    compare the verified equilibria they reach.

    Equilibria count as essentially unique when all witnesses produce the
    same per-player cost vector (1e-5 relative).  The report also states
    whether aggregated route flows agree across fully congested witnesses
    and whether a witness was found with every route cost-free, the two
    structural regimes that pin down uniqueness under identical costs.
    """
    if starts < 2:
        raise ValueError("uniqueness probe needs at least 2 starts")
    config = config or SolverConfig()
    if kkt_tolerance is None:
        kkt_tolerance = default_kkt_tolerance(instance)
    scale = max(1.0, float(instance.demands.sum()))

    run_cfg = SolverConfig(
        gamma=config.gamma,
        epsilon=config.epsilon,
        max_iterations=config.max_iterations,
        seed=config.seed,
    )
    if run_cfg.gamma is None:
        from .solvers import _resolve_gamma

        run_cfg.gamma, _ = _resolve_gamma(instance, config)

    witnesses: list[FlowProfile] = []
    cost_rows: list[np.ndarray] = []
    failed = 0
    for start in feasible_starts(instance, starts, config.seed):
        report = sird(instance, start, run_cfg)
        if report.stop_reason != STOP_CONVERGED:
            warnings.warn(
                f"probe start discarded: solver stopped with {report.stop_reason}",
                stacklevel=2,
            )
            failed += 1
            continue
        try:
            candidate = _polish(instance, report.profile, run_cfg, kkt_tolerance)
        except BestResponseError:
            candidate = report.profile
        check = kkt_verify(instance, candidate, kkt_tolerance)
        if not check.is_ne:
            failed += 1
            continue
        witnesses.append(candidate)
        cost_rows.append(check.costs)

    costs = np.array(cost_rows) if cost_rows else np.empty((0, instance.n_players))
    inconclusive = len(witnesses) < 2

    unique = True
    if not inconclusive:
        spread = costs.max(axis=0) - costs.min(axis=0)
        rel = spread / np.maximum(1.0, np.abs(costs).max(axis=0))
        unique = bool(rel.max() <= 1e-5)

    aggregates = [aggregate_flows(w) for w in witnesses]
    congested = [
        X for w, X in zip(witnesses, aggregates)
        if np.all(X > instance.chi.max(axis=0))
    ]
    flows_agree: bool | None = None
    if len(congested) >= 2:
        arr = np.array(congested)
        flows_agree = bool(
            (arr.max(axis=0) - arr.min(axis=0)).max() <= 1e-5 * scale
        )
    all_free = any(
        np.all(X <= instance.chi.min(axis=0) + 1e-9 * scale) for X in aggregates
    )

    return UniquenessReport(
        essentially_unique=unique and not inconclusive,
        inconclusive=inconclusive,
        witnesses=witnesses,
        witness_costs=costs,
        aggregated_flows_agree=flows_agree,
        all_cost_free_regime=all_free,
        failed_starts=failed,
    )


def ne_family_sweep(
    instance: GameInstance,
    free_player: int,
    free_route: int,
    grid: int,
    config: SolverConfig | None = None,
    lo: float | None = None,
    hi: float | None = None,
    kkt_tolerance: float | None = None,
) -> list[FamilyPoint]:
    """Pin one coordinate of a flexible player and test the assembled
    profiles for equilibrium.

    For each grid value ``v`` the free player's row is set to the family
    template (nothing on the direct option, ``v`` on the free route, the
    rest spread over her other routes), the remaining players are driven
    to a joint best-response fixed point, and the assembled profile is
    verified.  Grid points whose response iteration stalls are marked
    invalid instead of aborting the sweep.
    """
    if instance.n_routes < 2:
        raise ValueError("family template needs at least two routes")
    if grid < 1:
        raise ValueError("grid must be at least 1")
    if not 0 <= free_route < instance.n_routes:
        raise ValueError(f"route index {free_route} out of range")
    config = config or SolverConfig()
    if kkt_tolerance is None:
        kkt_tolerance = default_kkt_tolerance(instance)

    demand = float(instance.demands[free_player])
    lo = 0.0 if lo is None else lo
    hi = demand if hi is None else hi
    values = np.linspace(lo, hi, grid) if grid > 1 else np.array([lo])
    others = [j for j in range(instance.n_players) if j != free_player]
    fp_tol = 1e-8

    m = FlowProfile.uniform(instance).matrix.copy()
    points: list[FamilyPoint] = []
    for v in values:
        if v < -1e-12 or v > demand * (1 + 1e-12):
            points.append(FamilyPoint(float(v), None, False, np.nan, "infeasible"))
            continue
        row = np.zeros(instance.n_routes + 1)
        row[1 + free_route] = v
        rest = max(demand - v, 0.0) / (instance.n_routes - 1)
        for r in range(instance.n_routes):
            if r != free_route:
                row[1 + r] = rest
        m[free_player] = row

        status = "ok"
        try:
            for _ in range(200):
                change = 0.0
                for j in others:
                    res = best_response(
                        instance, FlowProfile(m), j, config, warm_start=m[j].copy()
                    )
                    change = max(change, float(np.abs(res.vector - m[j]).max()))
                    m[j] = res.vector
                if change < fp_tol:
                    break
            else:
                status = "no_fixed_point"
        except BestResponseError:
            status = "no_fixed_point"

        if status != "ok":
            points.append(FamilyPoint(float(v), None, False, np.nan, status))
            continue
        profile = FlowProfile(m)
        check = kkt_verify(instance, profile, kkt_tolerance)
        points.append(
            FamilyPoint(float(v), profile, check.is_ne, check.social_cost, "ok")
        )
    return points


def price_of_anarchy(
    instance: GameInstance,
    config: SolverConfig | None = None,
    starts: int = 8,
    optimum_starts: int = 5,
    family_grid: int = 33,
) -> PoaReport:
    """Worst verified equilibrium cost over the best social cost.

    The worst equilibrium search is heuristic: multi-start dynamics, plus
    one-dimensional family sweeps whenever a witness shows a player with
    cost-free best-response slack.  The provenance field records which
    stage produced the reported worst case.
    """
    config = config or SolverConfig()
    opt = social_optimum(instance, config, optimum_starts)
    opt_cost = social_cost(instance, opt.profile)

    probe = uniqueness_probe(instance, config, starts=max(2, starts))
    if not probe.witnesses:
        raise AnalysisError("no verified equilibrium found")

    socials = probe.witness_costs.sum(axis=1)
    worst_idx = int(np.argmax(socials))
    worst_cost = float(socials[worst_idx])
    worst_profile = probe.witnesses[worst_idx]
    provenance = "unique" if probe.essentially_unique else "multi-start"

    swept: set[int] = set()
    for witness in probe.witnesses:
        for i in detect_free_multiplicity(instance, witness):
            if i in swept or instance.n_routes < 2:
                continue
            swept.add(i)
            for r in range(instance.n_routes):
                for pt in ne_family_sweep(instance, i, r, family_grid, config):
                    if pt.is_ne and pt.social_cost > worst_cost:
                        worst_cost = pt.social_cost
                        worst_profile = pt.profile
                        provenance = "family-sweep"

    tiny = 1e-12 * max(1.0, float(instance.demands.sum()))
    if opt_cost <= tiny:
        poa = 1.0 if worst_cost <= tiny else float("inf")
    else:
        poa = worst_cost / opt_cost
    return PoaReport(opt_cost, worst_cost, poa, provenance, opt.profile, worst_profile)
