import math

import numpy as np
import pytest

from monotone_ot.convex import DomainDescriptor


@pytest.mark.parametrize("dom, vol", [
    (DomainDescriptor.box([0, 0], [2, 3]), 6.0),
    (DomainDescriptor.ball([0, 0], 1.0), math.pi),
    (DomainDescriptor.ball([1, 1, 1], 2.0), 4 / 3 * math.pi * 8),
    (DomainDescriptor.polygon([[0, 0], [1, 0], [0, 1]]), 0.5),
])
def test_volume(dom, vol):
    assert dom.volume() == pytest.approx(vol, rel=1e-12)


def test_graph_domain_volume_matches_sampling():
    dom = DomainDescriptor.graph_domain(2, 1.0, 2.0, 1.0)
    rng = np.random.default_rng(0)
    lo, hi = dom.bounding_box()
    x = lo + (hi - lo) * rng.random((400_000, 2))
    est = np.prod(hi - lo) * dom.contains(x).mean()
    assert dom.volume() == pytest.approx(est, rel=1e-2)


def test_contains_tolerance():
    box = DomainDescriptor.box([0, 0], [1, 1])
    assert box.contains([1.0, 0.5])
    assert not box.contains([1.0 + 1e-9, 0.5])
    assert box.contains([1.0 + 1e-9, 0.5], tol=1e-8)


def test_unbounded_has_no_volume():
    with pytest.raises(ValueError):
        DomainDescriptor.full_space(2).volume()


@pytest.mark.parametrize("dom", [
    DomainDescriptor.full_space(3),
    DomainDescriptor.box([0, -1], [1, 2]),
    DomainDescriptor.ball([0, 0, 0], 2.0),
    DomainDescriptor.polygon([[0, 0], [2, 0], [1, 1]]),
    DomainDescriptor.graph_domain(3, 0.5, 3.0, 2.0),
])
def test_json_round_trip(dom):
    back = DomainDescriptor.from_json(dom.to_json())
    assert back.to_json() == dom.to_json()


def test_as_polygon_ccw():
    v = DomainDescriptor.ball([0, 0], 1.0).as_polygon(64)
    area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    assert area > 0


@pytest.mark.parametrize("dom", [
    DomainDescriptor.ball([0.5, -1.0], 2.0),
    DomainDescriptor.graph_domain(2, 1.0, 2.0, 1.0),
    DomainDescriptor.graph_domain(2, 0.3, 4.0, 2.0),
])
def test_polygonization_is_simple_and_close(dom):
    v = dom.as_polygon(2048)
    area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    assert area == pytest.approx(dom.volume(), rel=1e-4)
    assert np.all(dom.contains(v, tol=1e-9))
