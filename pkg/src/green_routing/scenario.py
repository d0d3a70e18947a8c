"""Scenario files: one self-contained JSON document per experiment.

A scenario names the players (demand, pollution rate, deadline), the
routes (duration slope and base), optional explicit delay-cost overrides
per player/route cell, solver defaults, and sweep declarations.  Every
field is validated before any computation; diagnostics carry the JSON
path of the offending field.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .game import DelayCost, GameInstance, PlayerSpec, RouteSpec
from .solvers import SolverConfig

__all__ = [
    "ScenarioError",
    "SweepSpec",
    "Scenario",
    "load_scenario",
    "bundled_scenario_path",
    "config_hash",
]

SCHEMA_VERSION = 1
SWEEP_PARAMETERS = ("alpha_scale", "deadline_shift", "family_coordinate")


class ScenarioError(ValueError):
    """Validation failure; ``path`` is the JSON path of the bad field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ScenarioError(path, message)


_REQUIRED = object()


def _number(obj: dict, key: str, path: str, *, default=_REQUIRED, minimum=None, positive=False):
    if key not in obj:
        if default is not _REQUIRED:
            return default
        raise ScenarioError(f"{path}.{key}", "missing required field")
    v = obj[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool),
             f"{path}.{key}", "must be a number")
    v = float(v)
    _require(np.isfinite(v), f"{path}.{key}", "must be finite")
    if positive:
        _require(v > 0, f"{path}.{key}", "must be positive")
    if minimum is not None:
        _require(v >= minimum, f"{path}.{key}", f"must be at least {minimum}")
    return v


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    lo: float
    hi: float
    steps: int
    log: bool = False

    def grid(self) -> np.ndarray:
        if self.log:
            return np.geomspace(self.lo, self.hi, self.steps)
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass
class Scenario:
    name: str
    schema_version: int
    players: list[PlayerSpec]
    routes: list[RouteSpec]
    overrides: dict[tuple[int, int], DelayCost]
    identical_costs: bool | None
    solver: dict
    sweeps: list[SweepSpec] = field(default_factory=list)

    def build_instance(
        self, alpha_scale: float = 1.0, deadline_shift: float = 0.0
    ) -> GameInstance:
        """Materialise the game, optionally scaling every pollution rate or
        shifting the first player's deadline (overridden cells are taken
        verbatim and unaffected by the shift)."""
        players = [
            PlayerSpec(p.demand, p.alpha * alpha_scale,
                       p.tau + (deadline_shift if i == 0 else 0.0))
            for i, p in enumerate(self.players)
        ]
        matrix = []
        for i, p in enumerate(players):
            row = []
            for r, route in enumerate(self.routes):
                cost = self.overrides.get((i, r))
                if cost is None:
                    cost = DelayCost.from_deadline(route.mu, route.nu, p.tau)
                row.append(cost)
            matrix.append(row)
        return GameInstance(
            players, self.routes, matrix,
            require_identical_costs=bool(self.identical_costs) and deadline_shift == 0.0,
        )

    def solver_config(self, **cli_overrides) -> SolverConfig:
        """Scenario solver defaults merged with command-line overrides."""
        merged = dict(self.solver)
        merged.update({k: v for k, v in cli_overrides.items() if v is not None})
        return SolverConfig(**merged)


def _parse_delay_override(entry: dict, path: str, n: int, r: int) -> tuple[tuple[int, int], DelayCost]:
    _require(isinstance(entry, dict), path, "must be an object")
    for key in ("player", "route"):
        _require(key in entry, f"{path}.{key}", "missing required field")
        v = entry[key]
        _require(isinstance(v, int) and not isinstance(v, bool), f"{path}.{key}", "must be an integer")
    i, k = entry["player"], entry["route"]
    _require(0 <= i < n, f"{path}.player", f"must be in [0, {n - 1}]")
    _require(0 <= k < r, f"{path}.route", f"must be in [0, {r - 1}]")
    family = entry.get("family")
    _require(family in ("quadratic", "linear", "deadline"),
             f"{path}.family", "must be one of quadratic, linear, deadline")
    try:
        if family == "quadratic":
            cost = DelayCost.quadratic(
                _number(entry, "chi", path, minimum=0.0),
                _number(entry, "coefficient", path, default=1.0, positive=True),
            )
        elif family == "linear":
            cost = DelayCost.linear(
                _number(entry, "chi", path, minimum=0.0),
                _number(entry, "slope", path, positive=True),
            )
        else:
            cost = DelayCost.from_deadline(
                _number(entry, "mu", path, positive=True),
                _number(entry, "nu", path, positive=True),
                _number(entry, "tau", path, default=0.0, minimum=0.0),
            )
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None
    return (i, k), cost


def _consistency_check(cost: DelayCost, path: str):
    """Finite-difference probe of the cost's stated derivatives."""
    scale = max(1.0, abs(cost.chi))
    points = cost.chi + scale * np.array([0.11, 0.29, 0.53, 0.79, 1.13, 1.51, 2.17, 3.07])
    h = 1e-6 * scale
    fd1 = (cost.value(points + h) - cost.value(points - h)) / (2 * h)
    fd2 = (cost.slope(points + h) - cost.slope(points - h)) / (2 * h)
    ref1, ref2 = cost.slope(points), cost.curvature(points)
    ok1 = np.abs(fd1 - ref1) <= 1e-4 * np.maximum(1.0, np.abs(ref1))
    ok2 = np.abs(fd2 - ref2) <= 1e-4 * np.maximum(1.0, np.abs(ref2))
    _require(bool(ok1.all() and ok2.all()), path, "derivatives are inconsistent with values")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(str(path), "file not found")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"parse error: {exc}") from None
    _require(isinstance(raw, dict), "$", "scenario must be a JSON object")

    version = raw.get("schema_version")
    _require(version == SCHEMA_VERSION, "schema_version",
             f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
    name = raw.get("name", path.stem)
    _require(isinstance(name, str) and name != "", "name", "must be a nonempty string")

    players_raw = raw.get("players")
    _require(isinstance(players_raw, list) and players_raw, "players", "must be a nonempty array")
    players = []
    for i, entry in enumerate(players_raw):
        p = f"players[{i}]"
        _require(isinstance(entry, dict), p, "must be an object")
        players.append(PlayerSpec(
            demand=_number(entry, "demand", p, minimum=0.0),
            alpha=_number(entry, "alpha", p, minimum=0.0),
            tau=_number(entry, "tau", p, default=0.0, minimum=0.0),
        ))

    routes_raw = raw.get("routes")
    _require(isinstance(routes_raw, list) and routes_raw, "routes", "must be a nonempty array")
    routes = []
    for r, entry in enumerate(routes_raw):
        p = f"routes[{r}]"
        _require(isinstance(entry, dict), p, "must be an object")
        if "mu" in entry or "nu" in entry:
            routes.append(RouteSpec(
                mu=_number(entry, "mu", p, positive=True),
                nu=_number(entry, "nu", p, positive=True),
            ))
        else:
            routes.append(RouteSpec())

    overrides: dict[tuple[int, int], DelayCost] = {}
    for k, entry in enumerate(raw.get("delay_cost_overrides", [])):
        key, cost = _parse_delay_override(
            entry, f"delay_cost_overrides[{k}]", len(players), len(routes))
        _require(key not in overrides, f"delay_cost_overrides[{k}]",
                 f"duplicate override for player {key[0]}, route {key[1]}")
        overrides[key] = cost

    for r, route in enumerate(routes):
        if route.mu is None:
            for i in range(len(players)):
                _require((i, r) in overrides, f"routes[{r}]",
                         f"no duration parameters and no delay cost override for player {i}")

    solver = raw.get("solver", {})
    _require(isinstance(solver, dict), "solver", "must be an object")
    allowed = {"gamma", "epsilon", "max_iterations", "theta", "power", "seed"}
    for key in solver:
        _require(key in allowed, f"solver.{key}", "unknown solver option")
    if "gamma" in solver:
        _number(solver, "gamma", "solver", positive=True)
    if "epsilon" in solver:
        _number(solver, "epsilon", "solver", positive=True)
    if "theta" in solver:
        t = _number(solver, "theta", "solver")
        _require(0 < t < 1, "solver.theta", "must lie strictly between 0 and 1")
    if "power" in solver:
        t = _number(solver, "power", "solver")
        _require(0 <= t <= 1, "solver.power", "must lie in [0, 1]")
    if "max_iterations" in solver:
        _require(isinstance(solver["max_iterations"], int) and solver["max_iterations"] >= 1,
                 "solver.max_iterations", "must be a positive integer")
    if "seed" in solver:
        _require(isinstance(solver["seed"], int) and not isinstance(solver["seed"], bool),
                 "solver.seed", "must be an integer")

    sweeps = []
    sweeps_raw = raw.get("sweeps", [])
    _require(isinstance(sweeps_raw, list), "sweeps", "must be an array")
    for k, entry in enumerate(sweeps_raw):
        p = f"sweeps[{k}]"
        _require(isinstance(entry, dict), p, "must be an object")
        param = entry.get("parameter")
        _require(param in SWEEP_PARAMETERS, f"{p}.parameter",
                 f"must be one of {', '.join(SWEEP_PARAMETERS)}")
        lo = _number(entry, "from", p)
        hi = _number(entry, "to", p)
        _require(lo <= hi, f"{p}.from", "must not exceed 'to'")
        steps = entry.get("steps")
        _require(isinstance(steps, int) and steps >= 2, f"{p}.steps", "must be an integer >= 2")
        log = entry.get("log", False)
        _require(isinstance(log, bool), f"{p}.log", "must be a boolean")
        if log:
            _require(lo > 0, f"{p}.from", "must be positive for a log-spaced grid")
        sweeps.append(SweepSpec(param, lo, hi, steps, log))

    identical = raw.get("identical_costs")
    _require(identical is None or isinstance(identical, bool),
             "identical_costs", "must be a boolean")

    scenario = Scenario(
        name=name,
        schema_version=version,
        players=players,
        routes=routes,
        overrides=overrides,
        identical_costs=identical,
        solver=solver,
        sweeps=sweeps,
    )

    try:
        instance = scenario.build_instance()
    except ValueError as exc:
        raise ScenarioError("$", str(exc)) from None
    if identical:
        _require(instance.identical_costs, "identical_costs",
                 "delay costs differ across players")
    for i, row in enumerate(instance.delay_cost):
        for r, cost in enumerate(row):
            _consistency_check(cost, f"delay_cost[{i}][{r}]")
    return scenario


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``paper_sec5``."""
    stem = name[:-5] if name.endswith(".json") else name
    return Path(resources.files("green_routing") / "scenarios" / f"{stem}.json")


def config_hash(scenario_name: str, config: SolverConfig, seed: int) -> str:
    """Short stable digest of everything that determines a run's output."""
    payload = {
        "scenario": scenario_name,
        "seed": seed,
        "gamma": config.gamma,
        "epsilon": config.epsilon,
        "max_iterations": config.max_iterations,
        "theta": config.theta,
        "power": config.power,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
