import numpy as np
import pytest

from models.convex_sets import (
    Ball,
    Box,
    Halfspace,
    Hyperplane,
    Problem,
    Simplex,
    as_vector,
    set_from_record,
)
from models.exceptions import (
    DimensionMismatchError,
    IndexOutOfRangeError,
    InvalidParameterError,
    InvalidSetError,
    NonFiniteInputError,
)


@pytest.fixture
def rng():
    """Seeded generator for randomized checks."""
    return np.random.default_rng(20240601)


@pytest.fixture
def catalog():
    """One set of every variant in R^3."""
    return [
        Halfspace(a=[1.0, -2.0, 0.5], b=0.3),
        Hyperplane(a=[0.0, 1.0, 1.0], b=2.0),
        Box(lo=[-1.0, 0.0, -2.0], hi=[1.0, 0.5, 2.0]),
        Ball(center=[0.5, -0.5, 1.0], radius=1.5),
        Simplex(scale=2.0, size=3),
    ]


def _members(s, rng, count):
    """Points of the set, built by projecting random points onto it."""
    return [s.project(rng.normal(scale=3.0, size=s.dim)) for _ in range(count)]


def test_halfspace_projection():
    """Test projection onto a halfspace."""
    h = Halfspace(a=[1.0, 0.0], b=0.0)
    assert np.allclose(h.project([2.0, 3.0]), [0.0, 3.0])
    x = np.array([2.0, 3.0])
    expected = x - max(h.a @ x - h.b, 0.0) / (h.a @ h.a) * h.a
    assert np.allclose(h.project(x), expected)


def test_halfspace_projection_matches_grid_search():
    """Test halfspace projection against a dense grid search."""
    h = Halfspace(a=[1.0, 0.0], b=0.0)
    x = np.array([2.0, 3.0])
    g1, g2 = np.meshgrid(np.arange(-0.5, 0.5, 1e-3), np.arange(2.5, 3.5, 1e-3), indexing='ij')
    grid = np.column_stack([g1.ravel(), g2.ravel()])
    feasible = grid[grid[:, 0] <= 0.0]
    nearest = feasible[np.argmin(np.linalg.norm(feasible - x, axis=1))]
    assert np.linalg.norm(nearest - h.project(x)) <= 2e-3


def test_box_projection_identity():
    """Test that a point inside a box is its own projection."""
    box = Box(lo=[0.0, 0.0], hi=[1.0, 1.0])
    assert np.array_equal(box.project([0.5, 0.5]), [0.5, 0.5])


def test_ball_projection():
    """Test radial projection onto a ball."""
    ball = Ball(center=[0.0, 0.0], radius=1.0)
    assert np.allclose(ball.project([3.0, 4.0]), [0.6, 0.8])


def test_simplex_projection():
    """Test projection onto the probability simplex."""
    simplex = Simplex(scale=1.0, size=3)
    assert np.allclose(simplex.project([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])
    assert np.allclose(simplex.project([1.0, 1.0, 1.0]), [1 / 3, 1 / 3, 1 / 3])
    assert np.allclose(simplex.project([2.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    y = simplex.project([0.9, 0.8, -3.0])
    assert np.isclose(y.sum(), 1.0) and np.all(y >= 0.0)
    assert np.allclose(y, [0.55, 0.45, 0.0])


def test_contains():
    """Test membership with tolerances."""
    assert Ball(center=[0.0, 0.0], radius=1.0).contains([0.0, 0.0], tol=0.0)
    assert Halfspace(a=[1.0, 0.0], b=0.0).contains([1e-9, 0.0], tol=1e-8)
    assert not Box(lo=[0.0, 0.0], hi=[1.0, 1.0]).contains([2.0, 0.0], tol=0.5)


def test_contains_rejects_negative_tolerance():
    """Test that a negative tolerance is rejected."""
    with pytest.raises(InvalidParameterError):
        Ball(center=[0.0], radius=1.0).contains([0.0], tol=-1.0)


def test_distance():
    """Test distances to hyperplanes and balls."""
    assert Hyperplane(a=[0.0, 1.0], b=2.0).distance([5.0, 0.0]) == pytest.approx(2.0)
    assert Ball(center=[0.0, 0.0], radius=1.0).distance([3.0, 4.0]) == pytest.approx(4.0)
    assert Box(lo=[0.0, 0.0], hi=[1.0, 1.0]).distance([0.3, 0.7]) == 0.0


def test_distance_batch_matches_distance(catalog, rng):
    """Test the vectorized distances against the pointwise ones."""
    X = rng.normal(scale=3.0, size=(50, 3))
    for s in catalog:
        expected = np.array([s.distance(x) for x in X])
        assert np.allclose(s.distance_batch(X), expected, atol=1e-12)


def test_enclosing_radius():
    """Test enclosing radii of bounded and unbounded sets."""
    assert Ball(center=[0.0, 0.0], radius=2.0).enclosing_radius() == 2.0
    assert Box(lo=[-1.0, -1.0], hi=[1.0, 1.0]).enclosing_radius() == pytest.approx(np.sqrt(2.0))
    assert Simplex(scale=3.0, size=4).enclosing_radius() == 3.0
    assert Halfspace(a=[1.0, 0.0], b=0.0).enclosing_radius() is None
    assert Hyperplane(a=[1.0, 0.0], b=0.0).enclosing_radius() is None


def test_projection_idempotent(catalog, rng):
    """Test that projecting twice equals projecting once."""
    for s in catalog:
        for _ in range(100):
            y = s.project(rng.normal(scale=5.0, size=3))
            assert np.linalg.norm(s.project(y) - y) <= 1e-12 * max(1.0, np.linalg.norm(y))


def test_projection_lands_in_set(catalog, rng):
    """Test that projections are members of the set."""
    for s in catalog:
        for _ in range(100):
            assert s.distance(s.project(rng.normal(scale=5.0, size=3))) <= 1e-12


def test_projection_nonexpansive(catalog, rng):
    """Test nonexpansivity of every projection."""
    for s in catalog:
        for _ in range(200):
            x, y = rng.normal(scale=4.0, size=(2, 3))
            assert np.linalg.norm(s.project(x) - s.project(y)) <= np.linalg.norm(x - y) + 1e-12


def test_projection_variational_inequality(catalog, rng):
    """Test <x - Px, z - Px> <= 0 for members z."""
    for s in catalog:
        members = _members(s, rng, 20)
        for _ in range(20):
            x = rng.normal(scale=4.0, size=3)
            p = s.project(x)
            for z in members:
                assert float((x - p) @ (z - p)) <= 1e-10


def test_distance_matches_grid_oracle():
    """Test 2-D distances against a grid search over each set."""
    step = 1e-2
    g1, g2 = np.meshgrid(np.arange(-3.0, 3.0 + step, step), np.arange(-3.0, 3.0 + step, step),
                         indexing='ij')
    grid = np.column_stack([g1.ravel(), g2.ravel()])
    x = np.array([2.2, -1.7])
    for s in [Halfspace(a=[1.0, 1.0], b=0.0), Box(lo=[-1.0, -0.5], hi=[0.5, 1.0]),
              Ball(center=[-0.5, 0.5], radius=1.0)]:
        members = grid[s.distance_batch(grid) == 0.0]
        grid_distance = np.linalg.norm(members - x, axis=1).min()
        assert abs(grid_distance - s.distance(x)) <= 2 * step


def test_dimension_mismatch():
    """Test that a wrong-length vector is rejected."""
    with pytest.raises(DimensionMismatchError):
        Ball(center=[0.0, 0.0], radius=1.0).project([1.0, 2.0, 3.0])


def test_non_finite_input():
    """Test that NaN and Inf coordinates are rejected."""
    with pytest.raises(NonFiniteInputError):
        Box(lo=[0.0, 0.0], hi=[1.0, 1.0]).project([np.nan, 0.0])
    with pytest.raises(NonFiniteInputError):
        as_vector([np.inf, 1.0])


def test_degenerate_sets_rejected():
    """Test construction-time validation of set parameters."""
    with pytest.raises(InvalidSetError):
        Halfspace(a=[0.0, 0.0], b=1.0)
    with pytest.raises(InvalidSetError):
        Hyperplane(a=[0.0], b=1.0)
    with pytest.raises(InvalidSetError):
        Box(lo=[1.0, 0.0], hi=[0.0, 1.0])
    with pytest.raises(InvalidSetError):
        Ball(center=[0.0], radius=0.0)
    with pytest.raises(InvalidSetError):
        Simplex(scale=-1.0, size=2)


def test_set_from_record():
    """Test building sets from tagged records."""
    ball = set_from_record({'type': 'ball', 'center': [1.0, 2.0], 'radius': 0.5})
    assert isinstance(ball, Ball) and ball.radius == 0.5
    simplex = set_from_record({'type': 'simplex', 'scale': 1.0}, dim=4)
    assert simplex.dim == 4
    assert set_from_record(simplex.to_record()).to_record() == simplex.to_record()
    with pytest.raises(InvalidSetError, match='unknown set type'):
        set_from_record({'type': 'cone'})
    with pytest.raises(InvalidSetError, match="missing field 'b'"):
        set_from_record({'type': 'halfspace', 'a': [1.0]})


def test_problem_witness():
    """Test the bounded witness and its radius."""
    problem = Problem(sets=(Halfspace(a=[1.0, 0.0], b=0.0), Ball(center=[1.0, 0.0], radius=2.0)),
                      bounded_index_witness=2)
    assert problem.m == 2 and problem.dim == 2
    assert problem.bound == pytest.approx(3.0)
    assert Problem(sets=(Ball(center=[0.0, 0.0], radius=1.0),), bounded_index_witness=1,
                   witness_radius=5.0).bound == 5.0


def test_problem_witness_validation():
    """Test rejection of unusable witnesses."""
    sets = (Halfspace(a=[1.0, 0.0], b=0.0), Ball(center=[0.0, 0.0], radius=2.0))
    with pytest.raises(InvalidSetError, match='unbounded'):
        Problem(sets=sets, bounded_index_witness=1)
    with pytest.raises(IndexOutOfRangeError):
        Problem(sets=sets, bounded_index_witness=3)
    with pytest.raises(InvalidSetError):
        Problem(sets=sets, bounded_index_witness=2, witness_radius=1.0)
    with pytest.raises(DimensionMismatchError):
        Problem(sets=(Ball(center=[0.0], radius=1.0), Ball(center=[0.0, 0.0], radius=1.0)))


def test_problem_distances():
    """Test per-set distances and batch proximity."""
    problem = Problem(sets=(Halfspace(a=[1.0, 0.0], b=0.0), Halfspace(a=[0.0, 1.0], b=1.0)))
    assert np.allclose(problem.distances([2.0, 2.0]), [2.0, 1.0])
    assert np.allclose(problem.proximity_batch([[2.0, 2.0], [0.0, 0.0]]), [2.0, 0.0])
    assert problem.set_at(2).b == 1.0
    with pytest.raises(IndexOutOfRangeError):
        problem.set_at(0)
