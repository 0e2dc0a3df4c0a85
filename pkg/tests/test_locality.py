import math

import numpy as np
import pytest

from qrestrict.errors import DomainError, SingularEventError
from qrestrict.gibbs import classical_restriction, gibbs_state, ground_state
from qrestrict.locality import (
    ProbeSpec,
    conditional_probability,
    nonlocality_scan,
    parity_support,
    probe_interaction,
    probe_report,
    sector_extremes,
)
from qrestrict.spin_algebra import SIGMA_Z, Lattice, build_hamiltonian, spectral_projections, transverse_ising

Z = spectral_projections(SIGMA_Z)


def test_probe_geometry():
    p = ProbeSpec(0.2, 2, 3)
    assert p.N == 15
    assert p.origin == 7
    assert p.window == list(range(3, 12))
    with pytest.raises(DomainError):
        ProbeSpec(1.0, 1)
    with pytest.raises(DomainError):
        ProbeSpec(0.2, 4, 3)


def test_infinite_temperature_conditionals():
    lat = Lattice.chain(4)
    st = gibbs_state(build_hamiltonian(transverse_ising(), lat), 0.0, lat)
    assert conditional_probability(st, Z, (1, -1.0), {0: 1.0, 2: -1.0}) == pytest.approx(0.5, abs=1e-14)


def test_product_ground_state_conditionals():
    lat = Lattice.chain(3)
    st = ground_state(build_hamiltonian(transverse_ising(0, 1), lat), lattice=lat)
    assert conditional_probability(st, Z, (1, -1.0), {0: 1.0}) == 0
    with pytest.raises(SingularEventError):
        conditional_probability(st, Z, (1, -1.0), {0: -1.0})


def test_conditional_matches_joint_over_marginal():
    lat = Lattice.chain(4)
    st = ground_state(build_hamiltonian(transverse_ising(0.2, 1.0), lat), lattice=lat)
    mu = classical_restriction(st, Z, [0, 1, 2, 3])
    joint = mu.prob([1, 1, 1, 1])
    marg = joint + mu.prob([1, -1, 1, 1])
    assert conditional_probability(st, Z, (1, 1.0), {0: 1.0, 2: 1.0, 3: 1.0}) == pytest.approx(joint / marg, rel=1e-12)


def test_zero_coupling_scan():
    rep = probe_report(ProbeSpec(0.0, 1, 1))
    assert rep.p_zero == 0
    # the flipped spin has probability 0 without coupling, so p_one is undefined
    assert math.isnan(rep.p_one)
    assert rep.error


def test_small_probe_has_gap():
    rep = probe_report(ProbeSpec(0.2, 1, 2))
    assert rep.N == 7
    assert rep.gap > 0


def test_down_convention_agrees():
    up = probe_report(ProbeSpec(0.2, 1, 1, "up"))
    down = probe_report(ProbeSpec(0.2, 1, 1, "down"))
    assert down.p_zero == pytest.approx(up.p_zero, rel=1e-6)
    assert down.p_one == pytest.approx(up.p_one, rel=1e-6)


def test_scan_continues_after_failure():
    reps = nonlocality_scan([ProbeSpec(0.0, 1, 0), ProbeSpec(0.2, 1, 0)])
    assert len(reps) == 2
    assert reps[1].gap > 0


def test_probe_hamiltonians():
    up = probe_interaction(0.0, "up")
    down = probe_interaction(0.0, "down")
    assert np.allclose(up.terms[(0,)], -SIGMA_Z)
    assert np.allclose(down.terms[(0,)], SIGMA_Z + np.eye(2))


def test_parity_pair_exact():
    assert parity_support(2, 1.0) == 0.0


@pytest.mark.parametrize("N", [4, 6, 8, 10])
def test_parity_nullity(N):
    odd, even = sector_extremes(N, 0.2)
    assert odd <= 1e-12
    assert even > 0


def test_parity_zero_coupling():
    assert parity_support(4, 0.0) == 0.0
    with pytest.raises(DomainError):
        parity_support(3, 0.2)
