import json
import math

import numpy as np
import pytest

from qrestrict.errors import DomainError, SingularEventError
from qrestrict.fcs import (
    FcsModel,
    aklt,
    conditioned_correlation,
    conditioned_expectation,
    fcs_expectation,
    fcs_restriction,
    mie_scan,
    product_deviation,
    projector,
    proportional_unitary,
    spin_one_operators,
    transfer_spectrum,
    two_point,
)

M = aklt()
OPS = spin_one_operators()


def test_aklt_conditions():
    assert M.conditions() == {"proportional_unitary": True, "normalized": True, "full_algebra": True}


def test_normalization_required():
    with pytest.raises(DomainError):
        FcsModel(np.array([np.eye(2), np.eye(2)]))


def test_identity_word():
    assert fcs_expectation(M, [np.eye(3)] * 5) == pytest.approx(1, abs=1e-14)


def test_single_projector():
    for a in range(3):
        assert fcs_expectation(M, [projector(M, a)]) == pytest.approx(1 / 3, abs=1e-14)


def test_shape_mismatch():
    with pytest.raises(DomainError):
        fcs_expectation(M, [np.eye(2)])


def test_restrictions_are_uniform_products():
    assert np.allclose(fcs_restriction(M, 1).probs, 1 / 3, atol=1e-12)
    three = fcs_restriction(M, 3)
    assert np.allclose(three.probs, 1 / 27, atol=1e-12)
    assert three.probs.sum() == pytest.approx(1, abs=1e-12)
    assert product_deviation(M, 3) <= 1e-12


def test_product_check_flags_non_proportional_model():
    c, s = math.cos(0.4), math.sin(0.4)
    A = np.array([np.diag([c, s]), np.diag([s, c])])
    model = FcsModel(A)
    assert not model.conditions()["proportional_unitary"]
    assert product_deviation(model, 2) > 1e-3


def test_clustering_ratio():
    lam = abs(transfer_spectrum(M)[1])
    assert lam == pytest.approx(1 / 3, abs=1e-12)
    corr = [abs(two_point(M, OPS["Sz"], r)) for r in range(1, 9)]
    ratios = np.array(corr[1:]) / np.array(corr[:-1])
    assert np.allclose(ratios, lam, atol=1e-10)


def test_conditioned_state_normalized():
    x = (1, 2, 3, 1, 2, 3, 1, 2)
    val, prob = conditioned_expectation(M, x, np.eye(3), np.eye(3), 5)
    assert val == pytest.approx(1, abs=1e-12)
    assert prob == pytest.approx(3.0**-8, rel=1e-12)


def test_identity_probe_gives_zero():
    x = (1,) * 8
    assert conditioned_correlation(M, x, np.eye(3), OPS["Sx"], 5).value <= 1e-14


def test_aklt_long_range_entanglement():
    scan = mie_scan(M, 5)
    assert scan.best.value > 0.01


def test_two_site_probe():
    two = np.kron(OPS["Sx"], OPS["Sx"])
    x = (1,) * 8
    c = conditioned_correlation(M, x, OPS["Sz"], two, 5)
    assert math.isfinite(c.value)


def test_degenerate_model_is_uncorrelated():
    model = proportional_unitary([1.0, 0.5j, 0.3], np.array([[0, 1], [1, 0]]))
    assert not model.conditions()["full_algebra"]
    scan = mie_scan(model, 5)
    assert scan.best.value <= 1e-12


def test_singular_outcome():
    model = proportional_unitary([1.0, 0.0, 0.0], np.eye(2))
    with pytest.raises(SingularEventError):
        conditioned_correlation(model, (2,) * 8, OPS["Sx"], OPS["Sx"], 5)


def test_json_round_trip():
    back = FcsModel.from_json(json.loads(json.dumps(M.to_json())))
    assert np.allclose(back.A, M.A)
