import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from monotone_ot.convex import (
    POS_INF,
    LowerHullPotential,
    PiecewiseAffinePotential,
    build_max_form,
    evaluate_with_subdifferential,
    legendre_conjugate,
)

# tangents of z^2/2 at -1, 0, 1
QUAD = build_max_form([(-1.0, 0.5, -1.0), (0.0, 0.0, 0.0), (1.0, 0.5, 1.0)])
SQUARE = PiecewiseAffinePotential([[1, 1], [1, -1], [-1, 1], [-1, -1]], [0, 0, 0, 0])


def random_potential(seed, k=12, n=2):
    r = np.random.default_rng(seed)
    return PiecewiseAffinePotential(r.normal(size=(k, n)), r.normal(size=k))


def test_single_zero_support():
    u = build_max_form([(np.zeros(2), 0.0, np.zeros(2))])
    x = np.random.default_rng(0).normal(size=(50, 2))
    assert np.all(u(x) == 0.0)


def test_quadratic_tangents():
    assert np.allclose(QUAD.intercepts, [-0.5, 0.0, -0.5])
    assert QUAD(np.array([2.0])) == pytest.approx(1.5)
    z = np.linspace(-3, 3, 101)[:, None]
    assert np.allclose(QUAD(z), np.maximum.reduce([-z[:, 0] - 0.5, 0 * z[:, 0], z[:, 0] - 0.5]))


@given(st.integers(0, 10_000))
def test_max_form_below_convex_oracle(seed):
    r = np.random.default_rng(seed)
    f = lambda x: np.log(np.sum(np.exp(x), axis=-1))  # log-sum-exp
    grad = lambda x: np.exp(x) / np.exp(x).sum()
    base = r.normal(size=(15, 3))
    u = build_max_form([(b, f(b), grad(b)) for b in base])
    x = r.normal(scale=2, size=(200, 3))
    assert np.all(u(x) <= f(x) + 1e-12)
    assert np.allclose(u(base), f(base), atol=1e-12)


@pytest.mark.parametrize("z, value, verts", [
    (0.5, 0.0, [[0.0], [1.0]]),
    (2.0, 1.5, [[1.0]]),
])
def test_subdifferential_1d(z, value, verts):
    v, sub = evaluate_with_subdifferential(QUAD, [z])
    assert v == pytest.approx(value)
    assert np.allclose(np.sort(sub.vertices, axis=0), verts)


def test_subdifferential_square_at_origin():
    v, sub = evaluate_with_subdifferential(SQUARE, [0.0, 0.0])
    assert v == 0.0
    assert sub.volume() == pytest.approx(4.0)
    assert sub.contains([0.3, -0.9])
    assert not sub.contains([1.1, 0.0])


def test_conjugate_single_piece():
    u = PiecewiseAffinePotential([[2.0, -1.0]], [0.7])
    v = legendre_conjugate(u)
    assert v.evaluate(np.array([2.0, -1.0])) == pytest.approx(-0.7)
    assert v.evaluate(np.array([2.0, -0.9])) is POS_INF


def test_conjugate_quadratic_against_grid_sup():
    v = legendre_conjugate(QUAD)
    z = np.linspace(-50, 50, 200_001)
    p = 0.5
    brute = np.max(p * z - QUAD(z[:, None]))
    assert v.evaluate(np.array([p])) == pytest.approx(0.25, abs=1e-14)
    assert brute == pytest.approx(0.25, abs=1e-9)
    assert v.evaluate(np.array([1.5])) is POS_INF


@pytest.mark.parametrize("seed", range(5))
def test_double_conjugation(seed):
    u = random_potential(seed, k=30).canonical()
    uu = legendre_conjugate(legendre_conjugate(u))
    x = np.random.default_rng(seed + 100).uniform(-3, 3, (1000, 2))
    assert np.abs(uu(x) - u(x)).max() <= 1e-10
    assert uu.is_canonical


def test_conjugate_of_lower_hull_values():
    r = np.random.default_rng(3)
    pts = r.normal(size=(25, 2))
    vals = r.normal(size=25)
    v = LowerHullPotential(pts, vals)
    u = legendre_conjugate(v)
    # u(x) = max_j (p_j.x - v_j) regardless of which points are hull vertices
    x = r.normal(size=(300, 2))
    assert np.allclose(u(x), (x @ pts.T - vals).max(axis=1), atol=1e-12)


@given(st.integers(0, 10_000))
def test_fenchel_young(seed):
    u = random_potential(seed, k=10).canonical()
    v = legendre_conjugate(u)
    r = np.random.default_rng(seed)
    x = r.uniform(-3, 3, (50, 2))
    y = u.slopes[u.argmax(x)]
    vy = np.array([v.evaluate(row) for row in y])
    gap = u(x) + vy - np.einsum("ij,ij->i", x, y)
    assert np.abs(gap).max() <= 1e-12
    # Fenchel-Young inequality at an arbitrary hull point
    q = y[0] * 0.5 + y[-1] * 0.5
    assert np.all(u(x) + v.evaluate(q) >= x @ q - 1e-12)


def test_canonical_drops_redundant_pieces():
    u = PiecewiseAffinePotential([[0.0], [1.0], [0.5]], [0.0, -1.0, -10.0])
    c = u.canonical()
    assert c.n_pieces == 2
    z = np.linspace(-5, 5, 41)[:, None]
    assert np.array_equal(c(z), u(z))


def test_lipschitz_constant():
    assert SQUARE.lipschitz_constant == pytest.approx(np.sqrt(2))


@given(arrays(np.float64, (6, 2), elements=st.floats(-5, 5)), arrays(np.float64, 6, elements=st.floats(-5, 5)))
def test_json_round_trip(slopes, intercepts):
    u = PiecewiseAffinePotential(slopes, intercepts)
    back = PiecewiseAffinePotential.from_json(u.to_json())
    assert np.array_equal(back.slopes, u.slopes)
    assert np.array_equal(back.intercepts, u.intercepts)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        PiecewiseAffinePotential(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        PiecewiseAffinePotential([[0.0, 1.0]], [np.inf])
    with pytest.raises(ValueError):
        SQUARE(np.zeros(3))
