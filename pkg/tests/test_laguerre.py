import numpy as np
import pytest
from hypothesis import given, strategies as st

from monotone_ot.convex import DomainDescriptor
from monotone_ot.transport import (
    DiscreteMeasure,
    SourceDensity,
    clip_polygon,
    clip_polyhedron,
    laguerre_diagram,
)
from monotone_ot.transport.laguerre import _box_faces, _polyhedron_tets, _tet_volumes

UNIT1 = SourceDensity.uniform(DomainDescriptor.box([0.0], [1.0]))
UNIT3 = SourceDensity.uniform(DomainDescriptor.box([0.0] * 3, [1.0] * 3))
GAUSS2 = SourceDensity.gaussian(2)


def uniform_target(points):
    points = np.atleast_2d(points)
    return DiscreteMeasure.normalized(points, np.ones(len(points)))


def test_disk_split_by_symmetry():
    disk = SourceDensity.uniform(DomainDescriptor.ball([0.0, 0.0], 1.0))
    d = laguerre_diagram(disk, uniform_target([[1.0, 0.0], [-1.0, 0.0]]), [0.0, 0.0])
    assert np.allclose(d.masses, 0.5, atol=1e-12)
    assert np.allclose(d.cells[0].vertices[:, 0].min(), 0.0, atol=1e-12)


def test_1d_boundary():
    d = laguerre_diagram(UNIT1, uniform_target([[0.1], [0.9]]), [0.0, 0.24])
    assert d.cells[0].data == pytest.approx((0.0, 0.3))
    assert np.allclose(d.raw_masses, [0.3, 0.7], atol=1e-15)
    # dense scan of the argmax as a cross-check
    x = np.linspace(0, 1, 100_001)
    left = (0.1 * x - 0.0) >= (0.9 * x - 0.24)
    assert x[left].max() == pytest.approx(0.3, abs=1e-5)


@pytest.mark.parametrize("i", [0, 2])
def test_dominated_cell_is_empty(i):
    pts = np.array([[0.2, 0.3], [0.8, 0.1], [0.5, 0.9]])
    spread = np.abs(pts[:, None] - pts[None]).max()
    w = np.zeros(3)
    w[i] += np.sqrt(2) * spread + 1e-3  # cell_i = argmax x.y_i - w_i shrinks as w_i grows
    src = SourceDensity.uniform(DomainDescriptor.box([0, 0], [1, 1]))
    d = laguerre_diagram(src, uniform_target(pts), w)
    assert d.masses[i] == 0.0 and d.cells[i] is None
    assert d.masses.sum() == pytest.approx(1.0, abs=1e-14)


@given(st.integers(0, 10_000), st.integers(2, 25))
def test_uniform_cells_tile_the_square(seed, N):
    r = np.random.default_rng(seed)
    src = SourceDensity.uniform(DomainDescriptor.box([0, 0], [1, 1]))
    pts = r.normal(size=(N, 2))
    d = laguerre_diagram(src, uniform_target(pts), r.normal(scale=0.2, size=N))
    area = sum(c.measure for c in d.cells if c is not None)
    assert area == pytest.approx(1.0, abs=1e-12)
    assert d.raw_masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert d.tiling_error <= 1e-9
    # sampled points land in the cell their argmax says
    x = r.random((200, 2))
    idx = d.potential.argmax(x)
    for k in np.unique(idx):
        c = d.cells[k]
        assert c is not None
        v = c.vertices
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * (x[idx == k, None, 1] - v[:, 1]) - e[:, 1] * (x[idx == k, None, 0] - v[:, 0])
        assert np.all(cross >= -1e-12)


def test_weight_shift_invariance():
    r = np.random.default_rng(0)
    pts = r.normal(size=(12, 2))
    w = r.normal(scale=0.1, size=12)
    a = laguerre_diagram(GAUSS2, uniform_target(pts), w)
    b = laguerre_diagram(GAUSS2, uniform_target(pts), w + 3.7)
    assert np.allclose(a.masses, b.masses, atol=1e-13)


def test_gaussian_total_mass():
    r = np.random.default_rng(1)
    pts = r.normal(size=(30, 2))
    d = laguerre_diagram(GAUSS2, uniform_target(pts), np.zeros(30))
    # the region is a box holding all but a tiny tail of the Gaussian
    assert d.total_mass == pytest.approx(1 - GAUSS2.mass_deficit, abs=1e-10)


def _fd_jacobian(source, target, w, h=1e-6):
    N = len(w)
    J = np.zeros((N, N))
    for j in range(N):
        e = np.zeros(N)
        e[j] = h
        J[:, j] = (laguerre_diagram(source, target, w + e).masses - laguerre_diagram(source, target, w - e).masses) / (2 * h)
    return J


@pytest.mark.parametrize("source, N, dim", [
    (SourceDensity.uniform(DomainDescriptor.box([0, 0], [1, 1])), 15, 2),
    (GAUSS2, 15, 2),
    (UNIT3, 8, 3),
])
def test_jacobian_matches_finite_differences(source, N, dim):
    r = np.random.default_rng(2)
    pts = r.random((N, dim)) * (1 if source.domain.is_bounded else 3)
    target = uniform_target(pts)
    # w = 0 puts every cell boundary through the origin, where masses are not C^2
    w = 0.5 * np.sum(pts**2, axis=1) + r.normal(scale=0.01, size=N)
    d = laguerre_diagram(source, target, w)
    assert d.nonempty().sum() >= N // 2
    J = d.jacobian.toarray()
    assert np.allclose(J, J.T, atol=1e-12)
    assert np.allclose(J.sum(axis=1), 0, atol=1e-10)
    assert np.all(np.diag(J)[d.masses > 0] < 0)
    assert np.abs(J - _fd_jacobian(source, target, w)).max() <= 1e-8


def test_3d_masses_against_sampling():
    r = np.random.default_rng(3)
    pts = r.random((10, 3))
    w = r.normal(scale=0.05, size=10)
    d = laguerre_diagram(UNIT3, uniform_target(pts), w)
    x = r.random((400_000, 3))
    freq = np.bincount(d.potential.argmax(x), minlength=10) / len(x)
    se = np.sqrt(d.masses * (1 - d.masses) / len(x))
    assert np.all(np.abs(freq - d.masses) <= 5 * se + 1e-12)
    assert d.raw_masses.sum() == pytest.approx(1.0, abs=1e-12)


def test_3d_gaussian_masses_sum():
    g3 = SourceDensity.gaussian(3)
    r = np.random.default_rng(4)
    d = laguerre_diagram(g3, uniform_target(r.normal(size=(12, 3))), np.zeros(12))
    assert d.total_mass == pytest.approx(1 - g3.mass_deficit, abs=1e-9)


SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _area(v):
    return 0.5 * abs(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))


@given(st.floats(0, 2 * np.pi), st.floats(-0.8, 0.8))
def test_polygon_clip_complements(angle, off):
    a = np.array([np.cos(angle), np.sin(angle)])
    b = a @ [0.5, 0.5] + off
    labels = -np.arange(1, 5)
    v1, _ = clip_polygon(SQUARE, labels, a, b, 7)
    v2, _ = clip_polygon(SQUARE, labels, -a, -b, 7)
    total = sum(_area(v) for v in (v1, v2) if v is not None)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_polygon_clip_through_vertex():
    v, lab = clip_polygon(SQUARE, -np.arange(1, 5), np.array([1.0, 1.0]), 1.0, 9)
    assert len(v) == 3 and _area(v) == pytest.approx(0.5)
    assert 9 in lab


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.6, 0.6))
def test_polyhedron_clip_complements(a0, a1, a2, off):
    a = np.array([a0, a1, a2])
    if np.linalg.norm(a) < 1e-3:
        return
    b = a @ [0.5, 0.5, 0.5] + off
    cube = _box_faces(np.zeros(3), np.ones(3))
    vol = 0.0
    for s in (1, -1):
        f = clip_polyhedron(cube, s * a, s * b, 5)
        if f is not None:
            vol += float(np.sum(_tet_volumes(_polyhedron_tets(f))))
    assert vol == pytest.approx(1.0, abs=1e-11)


def test_dimension_checks():
    with pytest.raises(ValueError):
        laguerre_diagram(UNIT1, uniform_target([[0.1], [0.9]]), [0.0])
    with pytest.raises(ValueError):
        laguerre_diagram(UNIT1, uniform_target([[0.1, 0.0], [0.9, 0.0]]), [0.0, 0.0])


def test_polyhedron_clip_shaving_a_corner():
    # the cut points lie within the vertex tolerance of the corner, so the cap collapses
    cube = _box_faces(np.zeros(3), np.ones(3))
    f = clip_polyhedron(cube, np.ones(3), 3 - 5e-11, 5)
    assert f is not None
    # merging at the vertex tolerance (1e-10 of the size) moves the corner by that much
    assert float(np.sum(_tet_volumes(_polyhedron_tets(f)))) == pytest.approx(1.0, abs=1e-10)
