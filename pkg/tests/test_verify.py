import numpy as np
import pytest

from monotone_ot.convex import DomainDescriptor
from monotone_ot.transport import (
    DiscreteMeasure,
    SourceDensity,
    TransportProblem,
    binomial_bound,
    solve_weights,
    verify_alexandrov,
    verify_pushforward,
)


@pytest.fixture(scope="module")
def solved():
    prob = TransportProblem.from_presets("uniform2d", "gaussian2d", 64)
    s, t = prob.build_source(), prob.build_target()
    _, d, _ = solve_weights(s, t, tol=1e-10)
    return s, t, d


def test_single_cell_pushforward():
    s = SourceDensity.uniform(DomainDescriptor.box([0, 0], [1, 1]))
    t = DiscreteMeasure([[1.0, 1.0]], [1.0])
    _, d, _ = solve_weights(s, t)
    assert verify_pushforward(d, s, t, 1000, seed=0) == 0.0


def test_symmetric_pair_pushforward():
    disk = SourceDensity.uniform(DomainDescriptor.ball([0.0, 0.0], 1.0))
    t = DiscreteMeasure([[1.0, 0.0], [-1.0, 0.0]], [0.5, 0.5])
    _, d, _ = solve_weights(disk, t)
    assert verify_pushforward(d, disk, t, 1_000_000, seed=3) <= 3e-3


def test_binomial_bound():
    assert binomial_bound([0.5], 10**6)[0] == pytest.approx(1.5e-3)
    assert binomial_bound([0.0, 1.0], 10).tolist() == [0.0, 0.0]


def test_solved_pushforward_within_bound(solved):
    s, t, d = solved
    err = verify_pushforward(d, s, t, 200_000, seed=5)
    assert err <= 1e-9 + binomial_bound(t.masses, 200_000).max()


def test_alexandrov_identities(solved):
    s, t, d = solved
    cell = next(c for c in d.cells if c is not None and c.measure > 0.02)
    i = next(k for k, c in enumerate(d.cells) if c is cell)
    probes = [
        DomainDescriptor.box([1.5, 1.5], [2.0, 2.5]),
        DomainDescriptor.box([-1.0, 0.2], [-0.1, 0.4]),
        DomainDescriptor.box([0, 0], [1, 1]),
        DomainDescriptor.polygon(cell.vertices),
    ]
    rep = verify_alexandrov(d, s, probes, target_domain=DomainDescriptor.full_space(2), tol=1e-9)
    assert rep.passed
    assert rep.cell_mass_error <= 1e-9 and rep.recomputed_mass_error <= 1e-9
    assert [p.disjoint_from_closure for p in rep.probes] == [True, True, False, False]
    assert rep.probes[0].ma_mass == 0.0 and rep.probes[1].ma_mass == 0.0
    assert rep.probes[2].source_mass == pytest.approx(1.0, abs=1e-12)
    assert rep.probes[2].target_mass == pytest.approx(1.0, abs=1e-12)
    assert rep.probes[3].source_mass == pytest.approx(t.masses[i], abs=1e-9)
    assert rep.probes[3].target_mass == pytest.approx(t.masses[i], abs=1e-12)


def test_slopes_outside_target_domain(solved):
    s, _, d = solved
    rep = verify_alexandrov(d, s, [], target_domain=DomainDescriptor.box([-1, -1], [1, 1]))
    assert not rep.slopes_in_target_domain and not rep.passed


def test_unbounded_probe_rejected(solved):
    s, _, d = solved
    with pytest.raises(ValueError):
        verify_alexandrov(d, s, [DomainDescriptor.full_space(2)])
