from __future__ import annotations

import json

import numpy as np
import pytest

from green_routing import ScenarioError, load_scenario
from green_routing.scenario import SweepSpec, bundled_scenario_path, config_hash
from green_routing.solvers import SolverConfig


def write(tmp_path, payload, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


BASE = {
    "schema_version": 1,
    "name": "base",
    "players": [
        {"demand": 1.0, "alpha": 0.5, "tau": 2.0},
        {"demand": 2.0, "alpha": 1.5, "tau": 2.0},
    ],
    "routes": [{"mu": 1.0, "nu": 1.0}, {"mu": 2.0, "nu": 1.5}],
}


class TestBundledScenarios:
    def test_paper_sec5_loads(self):
        scenario = load_scenario(bundled_scenario_path("paper_sec5"))
        inst = scenario.build_instance()
        assert inst.n_players == 2 and inst.n_routes == 2
        assert inst.demands.tolist() == [100.0, 150.0]
        assert inst.alphas.tolist() == [0.5, 1.5]
        assert inst.identical_costs
        assert np.allclose(inst.chi, [[10.0, 4.0], [10.0, 4.0]])

    def test_example1_loads_with_heterogeneous_costs(self):
        scenario = load_scenario(bundled_scenario_path("example1"))
        inst = scenario.build_instance()
        assert inst.n_players == 2 and inst.n_routes == 2
        assert not inst.identical_costs
        assert np.allclose(inst.chi, [[10.0, 10.0], [1.0, 1.0]])

    def test_delta_scenario_declares_sweep(self):
        scenario = load_scenario(bundled_scenario_path("paper_sec5_delta"))
        assert scenario.sweeps[0].parameter == "deadline_shift"
        assert scenario.sweeps[0].hi == 0.5


class TestValidation:
    def test_negative_demand_names_field(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["players"][0]["demand"] = -1.0
        with pytest.raises(ScenarioError) as err:
            load_scenario(write(tmp_path, payload))
        assert err.value.path == "players[0].demand"

    def test_nonpositive_mu_rejected(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["routes"][1]["mu"] = 0.0
        with pytest.raises(ScenarioError) as err:
            load_scenario(write(tmp_path, payload))
        assert err.value.path == "routes[1].mu"

    def test_theta_outside_open_interval_rejected(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["solver"] = {"theta": 1.0}
        with pytest.raises(ScenarioError) as err:
            load_scenario(write(tmp_path, payload))
        assert err.value.path == "solver.theta"

    def test_route_without_duration_needs_overrides(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["routes"][1] = {}
        with pytest.raises(ScenarioError) as err:
            load_scenario(write(tmp_path, payload))
        assert err.value.path == "routes[1]"

    def test_duplicate_override_rejected(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["delay_cost_overrides"] = [
            {"player": 0, "route": 0, "family": "quadratic", "chi": 1.0},
            {"player": 0, "route": 0, "family": "quadratic", "chi": 2.0},
        ]
        with pytest.raises(ScenarioError, match="duplicate"):
            load_scenario(write(tmp_path, payload))

    def test_unknown_family_rejected(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["delay_cost_overrides"] = [
            {"player": 0, "route": 0, "family": "cubic", "chi": 1.0}]
        with pytest.raises(ScenarioError) as err:
            load_scenario(write(tmp_path, payload))
        assert "family" in err.value.path

    def test_bad_sweep_bounds_rejected(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["sweeps"] = [{"parameter": "alpha_scale", "from": 10.0, "to": 1.0, "steps": 3}]
        with pytest.raises(ScenarioError) as err:
            load_scenario(write(tmp_path, payload))
        assert err.value.path == "sweeps[0].from"

    def test_identical_costs_claim_checked(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["players"][0]["tau"] = 3.0
        payload["identical_costs"] = True
        with pytest.raises(ScenarioError) as err:
            load_scenario(write(tmp_path, payload))
        assert err.value.path == "identical_costs"

    def test_parse_error_reported(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioError, match="parse error"):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(tmp_path / "absent.json")

    def test_wrong_schema_version(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["schema_version"] = 99
        with pytest.raises(ScenarioError) as err:
            load_scenario(write(tmp_path, payload))
        assert err.value.path == "schema_version"


class TestInstanceBuilding:
    def test_alpha_scale(self, tmp_path):
        scenario = load_scenario(write(tmp_path, BASE))
        inst = scenario.build_instance(alpha_scale=10.0)
        assert inst.alphas.tolist() == [5.0, 15.0]

    def test_deadline_shift_applies_to_first_player_only(self, tmp_path):
        scenario = load_scenario(write(tmp_path, BASE))
        inst = scenario.build_instance(deadline_shift=0.5)
        assert inst.delay_cost[0][0].tau == 2.5
        assert inst.delay_cost[1][0].tau == 2.0
        assert not inst.identical_costs

    def test_solver_defaults_merged_with_overrides(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["solver"] = {"epsilon": 1e-7, "seed": 5}
        scenario = load_scenario(write(tmp_path, payload))
        config = scenario.solver_config(gamma=0.1, seed=None)
        assert config.epsilon == 1e-7
        assert config.seed == 5
        assert config.gamma == 0.1

    def test_overrides_take_precedence_over_durations(self, tmp_path):
        payload = json.loads(json.dumps(BASE))
        payload["delay_cost_overrides"] = [
            {"player": 0, "route": 0, "family": "linear", "chi": 0.3, "slope": 2.0}]
        scenario = load_scenario(write(tmp_path, payload))
        inst = scenario.build_instance()
        assert inst.delay_cost[0][0].family == "linear"
        assert inst.delay_cost[0][1].family == "deadline"


class TestSweepSpec:
    def test_linear_grid(self):
        grid = SweepSpec("alpha_scale", 0.0, 1.0, 5).grid()
        assert np.allclose(grid, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_log_grid(self):
        grid = SweepSpec("alpha_scale", 1.0, 100.0, 3, log=True).grid()
        assert np.allclose(grid, [1.0, 10.0, 100.0])


class TestConfigHash:
    def test_stable_and_sensitive(self):
        a = config_hash("s", SolverConfig(gamma=0.1), 0)
        b = config_hash("s", SolverConfig(gamma=0.1), 0)
        c = config_hash("s", SolverConfig(gamma=0.2), 0)
        d = config_hash("s", SolverConfig(gamma=0.1), 1)
        assert a == b
        assert len({a, c, d}) == 3
