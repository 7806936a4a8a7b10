import logging

import numpy as np
import pytest

from models.convex_sets import Ball, Box, Halfspace, Hyperplane, Problem, Simplex
from models.exceptions import IndexOutOfRangeError, InvalidParameterError
from models.strings_weights import (
    Amalgamator,
    IndexVector,
    MStarParams,
    amalgamator_violations,
    apply_amalgamator,
    apply_string,
    is_fit,
    is_m_fit,
    parallel_executor,
    sequential_amalgamator,
    simultaneous_amalgamator,
    string_endpoints,
    validate_amalgamator,
)


@pytest.fixture
def two_halfspaces():
    """C_1 = {x_1 <= 0}, C_2 = {x_2 <= 1}."""
    return Problem(sets=(Halfspace(a=[1.0, 0.0], b=0.0), Halfspace(a=[0.0, 1.0], b=1.0)))


@pytest.fixture
def mixed_problem():
    """Four sets in R^4 with a common point at the origin."""
    return Problem(sets=(
        Halfspace(a=[1.0, 1.0, 0.0, -1.0], b=0.5),
        Ball(center=[0.2, 0.0, 0.0, 0.0], radius=1.0),
        Box(lo=[-1.0, -1.0, -1.0, -1.0], hi=[1.0, 0.5, 1.0, 1.0]),
        Halfspace(a=[0.0, -1.0, 2.0, 0.0], b=0.5),
    ), bounded_index_witness=2)


@pytest.fixture
def rng():
    """Seeded generator for randomized checks."""
    return np.random.default_rng(7)


def _random_string(rng, m):
    length = int(rng.integers(1, 2 * m + 1))
    return tuple(int(i) for i in rng.integers(1, m + 1, size=length))


def _random_amalgamator(rng, m):
    strings = [_random_string(rng, m) for _ in range(int(rng.integers(1, 4)))]
    strings.append(tuple(range(1, m + 1)))
    weights = rng.dirichlet(np.ones(len(strings)))
    return Amalgamator(strings=tuple(strings), weights=tuple(weights))


def _random_catalog_problem(rng):
    """
    A problem with J <= 10 and m <= 6 drawn from all five set kinds, plus a
    point z in every set.
    """
    J = int(rng.integers(1, 11))
    m = int(rng.integers(1, 7))
    scale = rng.uniform(0.5, 3.0)
    z = scale * rng.dirichlet(np.ones(J))
    sets = []
    for kind in rng.choice(['halfspace', 'hyperplane', 'box', 'ball', 'simplex'], size=m):
        a = rng.normal(size=J)
        if kind == 'halfspace':
            sets.append(Halfspace(a=a, b=float(a @ z) + rng.uniform(0.0, 1.0)))
        elif kind == 'hyperplane':
            sets.append(Hyperplane(a=a, b=float(a @ z)))
        elif kind == 'box':
            sets.append(Box(lo=z - rng.uniform(0.0, 1.0, size=J), hi=z + rng.uniform(0.0, 1.0, size=J)))
        elif kind == 'ball':
            offset = rng.normal(size=J)
            sets.append(Ball(center=z + offset, radius=float(np.linalg.norm(offset)) + rng.uniform(0.0, 1.0)))
        else:
            sets.append(Simplex(scale=float(z.sum()), size=J))
    return Problem(sets=tuple(sets)), z


def test_index_vector_validation():
    """Test index vector construction."""
    assert len(IndexVector((1, 2, 2))) == 3
    with pytest.raises(InvalidParameterError):
        IndexVector(())
    with pytest.raises(IndexOutOfRangeError):
        IndexVector((0, 1))


def test_apply_string_composes_left_to_right(two_halfspaces):
    """Test P[(1,2)] projects onto C_1 first and C_2 last."""
    assert np.allclose(apply_string(two_halfspaces, (1, 2), [2.0, 2.0]), [0.0, 1.0])


def test_apply_string_single_index(two_halfspaces):
    """Test a one-index string equals the projection onto that set."""
    x = np.array([2.0, 2.0])
    assert np.array_equal(apply_string(two_halfspaces, (2,), x), two_halfspaces.set_at(2).project(x))


def test_apply_string_fixed_point(two_halfspaces):
    """Test that members of C are fixed by every string."""
    assert np.array_equal(apply_string(two_halfspaces, (1, 2, 1), [-1.0, 0.5]), [-1.0, 0.5])


def test_apply_string_index_out_of_range(two_halfspaces):
    """Test that string indices above m are rejected."""
    with pytest.raises(IndexOutOfRangeError):
        apply_string(two_halfspaces, (1, 3), [0.0, 0.0])


def test_is_fit():
    """Test the fit condition."""
    assert is_fit([(1, 2), (2, 3)], 3)
    assert not is_fit([(1, 2), (2, 3)], 4)
    assert is_fit([tuple(range(1, 6))], 5)


def test_is_m_fit(mixed_problem):
    """Test the M-fit condition."""
    assert is_m_fit([(1, 2), (2, 3, 4)], mixed_problem, 1.2)
    assert not is_m_fit([(1, 4), (2, 3)], mixed_problem, 1.2)
    assert not is_m_fit([(1, 2), (2, 3)], mixed_problem, 1.2)
    single = Problem(sets=(Ball(center=[0.0, 0.0], radius=1.0),))
    assert is_m_fit([(1,)], single, 1.0)


def test_mstar_params_validation():
    """Test the bounds on delta and q_bar."""
    with pytest.raises(InvalidParameterError, match='0 < delta < 1/m'):
        MStarParams(delta=0.6, q_bar=2, m=2)
    with pytest.raises(InvalidParameterError, match='q_bar >= m'):
        MStarParams(delta=0.1, q_bar=1, m=2)
    default = MStarParams.default_for(4)
    assert default.delta == 0.125 and default.q_bar == 4


def test_amalgamator_weights():
    """Test weight positivity, renormalization and rejection."""
    a = Amalgamator(strings=((1,), (2,)), weights=(0.5, 0.5 + 5e-10))
    assert sum(a.weights) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(InvalidParameterError, match='sum to 1'):
        Amalgamator(strings=((1,), (2,)), weights=(0.5, 0.6))
    with pytest.raises(InvalidParameterError, match='positive'):
        Amalgamator(strings=((1,), (2,)), weights=(1.0, 0.0))
    with pytest.raises(InvalidParameterError):
        Amalgamator(strings=((1,), (2,)), weights=(1.0,))


def test_validate_amalgamator():
    """Test membership in M*(delta, q_bar)."""
    m = 3
    params = MStarParams(delta=0.2, q_bar=3, m=m)
    assert validate_amalgamator(sequential_amalgamator(m), params)
    assert validate_amalgamator(simultaneous_amalgamator(m), params)
    low_weight = Amalgamator(strings=((1, 2), (3,)), weights=(0.9, 0.1))
    assert not validate_amalgamator(low_weight, params)
    assert any('below delta' in v for v in amalgamator_violations(low_weight, params))
    too_long = Amalgamator(strings=((1, 2, 3, 1),), weights=(1.0,))
    assert not validate_amalgamator(too_long, params)
    not_fit = Amalgamator(strings=((1, 2),), weights=(1.0,))
    assert any('not fit' in v for v in amalgamator_violations(not_fit, params))


def test_amalgamator_record_round_trip():
    """Test amalgamator records."""
    a = Amalgamator(strings=((1, 2), (3,)), weights=(0.25, 0.75))
    b = Amalgamator.from_record(a.to_record())
    assert b.to_record() == a.to_record()


def test_apply_amalgamator_singleton(two_halfspaces):
    """Test a singleton amalgamator equals its string operator."""
    x = np.array([2.0, 2.0])
    a = Amalgamator(strings=((1, 2),), weights=(1.0,))
    assert np.array_equal(apply_amalgamator(two_halfspaces, a, x), apply_string(two_halfspaces, (1, 2), x))


def test_apply_amalgamator_average(two_halfspaces):
    """Test equal-weight averaging of end-points."""
    a = simultaneous_amalgamator(2)
    assert np.allclose(apply_amalgamator(two_halfspaces, a, [2.0, 2.0]), [1.0, 1.5])


def test_anchored_simultaneous_amalgamator(mixed_problem):
    """Test that anchoring makes simultaneous strings M-fit."""
    a = simultaneous_amalgamator(4, anchor=2)
    assert [t.indices for t in a.strings] == [(1, 2), (2,), (3, 2), (4, 2)]
    assert is_m_fit(a.strings, mixed_problem, mixed_problem.bound)


def test_string_nonexpansive(mixed_problem, rng):
    """Test nonexpansivity of random string operators."""
    for _ in range(300):
        t = _random_string(rng, mixed_problem.m)
        x, y = rng.normal(scale=3.0, size=(2, 4))
        px = apply_string(mixed_problem, t, x)
        py = apply_string(mixed_problem, t, y)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-10


def test_amalgamator_nonexpansive(mixed_problem, rng):
    """Test nonexpansivity of random amalgamators."""
    for _ in range(200):
        a = _random_amalgamator(rng, mixed_problem.m)
        x, y = rng.normal(scale=3.0, size=(2, 4))
        diff = apply_amalgamator(mixed_problem, a, x) - apply_amalgamator(mixed_problem, a, y)
        assert np.linalg.norm(diff) <= np.linalg.norm(x - y) + 1e-10


def test_fixed_points(mixed_problem, rng):
    """Test that points of C are fixed by strings and amalgamators."""
    for _ in range(100):
        z = rng.uniform(-0.1, 0.1, size=4)
        assert mixed_problem.distances(z).max() == 0.0
        a = _random_amalgamator(rng, mixed_problem.m)
        assert np.linalg.norm(apply_string(mixed_problem, _random_string(rng, 4), z) - z) <= 1e-10
        assert np.linalg.norm(apply_amalgamator(mixed_problem, a, z) - z) <= 1e-10


def test_output_in_hull_of_endpoints(mixed_problem, rng):
    """Test the average lies in the bounding box of the end-points."""
    for _ in range(100):
        a = _random_amalgamator(rng, mixed_problem.m)
        x = rng.normal(scale=3.0, size=4)
        endpoints = np.array(string_endpoints(mixed_problem, a, x))
        y = apply_amalgamator(mixed_problem, a, x)
        assert np.all(y >= endpoints.min(axis=0) - 1e-12)
        assert np.all(y <= endpoints.max(axis=0) + 1e-12)


def test_apply_amalgamator_deterministic(mixed_problem, rng):
    """Test bit-identical results, with and without a thread pool."""
    a = _random_amalgamator(rng, mixed_problem.m)
    x = rng.normal(scale=3.0, size=4)
    first = apply_amalgamator(mixed_problem, a, x)
    assert np.array_equal(first, apply_amalgamator(mixed_problem, a, x))
    with parallel_executor(max_workers=4) as executor:
        assert np.array_equal(first, apply_amalgamator(mixed_problem, a, x, executor))


def test_operators_on_random_catalog_problems(rng):
    """Test nonexpansivity and fixed points over random problems of every set kind."""
    kinds = set()
    for _ in range(100):
        problem, z = _random_catalog_problem(rng)
        kinds.update(s.kind for s in problem.sets)
        for _ in range(10):
            t = _random_string(rng, problem.m)
            x, y = rng.normal(scale=3.0, size=(2, problem.dim))
            px = apply_string(problem, t, x)
            py = apply_string(problem, t, y)
            assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-10
            assert np.linalg.norm(apply_string(problem, t, z) - z) <= 1e-10
            a = _random_amalgamator(rng, problem.m)
            diff = apply_amalgamator(problem, a, x) - apply_amalgamator(problem, a, y)
            assert np.linalg.norm(diff) <= np.linalg.norm(x - y) + 1e-10
            assert np.linalg.norm(apply_amalgamator(problem, a, z) - z) <= 1e-10
    assert kinds == {'halfspace', 'hyperplane', 'box', 'ball', 'simplex'}


def test_renormalization_is_logged(caplog):
    """Test that rescaling weights within the window logs a warning."""
    with caplog.at_level(logging.WARNING, logger='models.strings_weights'):
        Amalgamator(strings=((1,), (2,)), weights=(0.5, 0.5 + 5e-10))
    assert any('Renormalizing amalgamator weights' in r.getMessage() for r in caplog.records)
    caplog.clear()
    with caplog.at_level(logging.WARNING, logger='models.strings_weights'):
        Amalgamator(strings=((1,), (2,)), weights=(0.5, 0.5))
    assert not caplog.records
