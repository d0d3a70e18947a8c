from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from green_routing.projection import SimplexSpec, project, project_rows

from oracles import project_enumerate


coords = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False, allow_infinity=False)


def test_feasible_point_is_fixed():
    spec = SimplexSpec(3, 6.0)
    p = np.array([1.0, 2.0, 3.0])
    assert np.allclose(project(spec, p), p, atol=1e-12)


def test_symmetric_two_coordinates():
    assert np.allclose(project(SimplexSpec(2, 2.0), [3.0, 3.0]), [1.0, 1.0])


def test_corner_solution_matches_enumeration():
    out = project(SimplexSpec(3, 3.0), [5.0, 1.0, 0.0])
    assert np.allclose(out, [3.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(out, project_enumerate(3.0, np.array([5.0, 1.0, 0.0])), atol=1e-12)


def test_zero_total_collapses_to_origin():
    assert np.array_equal(project(SimplexSpec(3, 0.0), [4.0, -1.0, 2.0]), np.zeros(3))


def test_domain_errors():
    with pytest.raises(ValueError):
        SimplexSpec(3, -1.0)
    with pytest.raises(ValueError):
        project(SimplexSpec(2, 1.0), [np.inf, 0.0])
    with pytest.raises(ValueError):
        project(SimplexSpec(2, 1.0), [np.nan, 0.0])
    with pytest.raises(ValueError):
        project(SimplexSpec(3, 1.0), [0.0, 0.0])


@given(st.lists(coords, min_size=1, max_size=6), st.floats(min_value=0.0, max_value=40.0))
@settings(max_examples=80, deadline=None)
def test_output_feasible_and_idempotent(values, total):
    spec = SimplexSpec(len(values), total)
    out = project(spec, values)
    assert out.min() >= 0.0
    assert abs(out.sum() - total) <= 1e-12 * max(1.0, total)
    again = project(spec, out)
    assert np.abs(again - out).max() <= 1e-12


@given(st.lists(coords, min_size=2, max_size=5), st.lists(coords, min_size=2, max_size=5),
       st.floats(min_value=0.0, max_value=20.0))
@settings(max_examples=80, deadline=None)
def test_nonexpansive(u, v, total):
    d = min(len(u), len(v))
    u, v = np.array(u[:d]), np.array(v[:d])
    spec = SimplexSpec(d, total)
    pu, pv = project(spec, u), project(spec, v)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12


@given(st.lists(coords, min_size=1, max_size=6), st.floats(min_value=0.0, max_value=30.0))
@settings(max_examples=80, deadline=None)
def test_matches_enumeration_oracle(values, total):
    out = project(SimplexSpec(len(values), total), values)
    oracle = project_enumerate(total, np.array(values))
    assert np.abs(out - oracle).max() <= 1e-10


def test_variational_inequality_characterisation():
    # (input - projection) must not correlate positively with any feasible
    # direction away from the projection
    rng = np.random.default_rng(4)
    for _ in range(50):
        d = int(rng.integers(2, 7))
        total = float(rng.uniform(0.0, 10.0))
        p = rng.normal(0.0, 5.0, d)
        out = project(SimplexSpec(d, total), p)
        for _ in range(20):
            v = rng.dirichlet(np.ones(d)) * total
            assert (p - out) @ (v - out) <= 1e-9


def test_project_rows_agrees_with_scalar_projection():
    rng = np.random.default_rng(9)
    totals = np.array([0.0, 1.0, 7.5, 150.0])
    points = rng.normal(0.0, 20.0, (4, 5))
    out = project_rows(totals, points)
    for i, total in enumerate(totals):
        assert np.allclose(out[i], project(SimplexSpec(5, float(total)), points[i]), atol=1e-12)
