import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import match_set
from photocal.errors import ValidationFailedError
from photocal.exposure import Stage, aggregate, estimate_exposure_ratio, ratio_terms, validate
from photocal.models import InverseResponse, VignetteModel

G = InverseResponse(0.0, 0.6, 0.4)
V = VignetteModel(-0.7, 0.3, -0.1)


def test_identical_frames_give_unit_ratio():
    ms = match_set([0.2, 0.5, 0.7], [0.2, 0.5, 0.7], R1=[0.1, 0.5, 0.9])
    assert estimate_exposure_ratio(ms, G) == 1.0
    assert estimate_exposure_ratio(ms, G, V) == 1.0


def test_noiseless_pair_recovers_metadata_ratio():
    rng = np.random.default_rng(0)
    n = 100
    R1, R2 = rng.uniform(0, 1, (2, n))
    L = rng.uniform(0.1, 0.9, n)
    e1, e2 = 0.5, 1.0
    # invert g analytically: c2 M^2 + c1 M - x = 0
    inv = lambda x: (-G.c1 + np.sqrt(G.c1**2 + 4 * G.c2 * x)) / (2 * G.c2)
    M1, M2 = inv(e1 * V(R1) * L), inv(e2 * V(R2) * L)
    ms = match_set(M1, M2, R1, R2, k=e1 / e2)
    assert estimate_exposure_ratio(ms, G, V) == pytest.approx(0.5, abs=1e-9)


def test_mean_of_terms():
    g = InverseResponse.identity()
    ms = match_set([0.4, 0.3], [1.0, 0.5])
    assert estimate_exposure_ratio(ms, g) == pytest.approx(0.5, abs=1e-15)


def test_no_usable_matches():
    ms = match_set([0.4], [0.0])
    with pytest.raises(ValueError, match="no usable matches"):
        estimate_exposure_ratio(ms, InverseResponse.identity())


@pytest.mark.parametrize(
    "k_hat, k_meta, accepted, rel",
    [(0.5, 0.5, True, 0.0), (0.55, 0.5, False, 0.1), (0.509, 0.5, True, 0.018)],
)
def test_validate(k_hat, k_meta, accepted, rel):
    r = validate(k_hat, k_meta, 0.02)
    assert r.accepted is accepted
    assert r.rel_error == pytest.approx(rel, abs=1e-12)
    assert r.rel_error >= 0


def test_validate_rejects_bad_metadata():
    with pytest.raises(ValueError):
        validate(1.0, 0.0)


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=100, derandomize=True)
def test_validation_monotone_in_tol(k_hat, k_meta, tol, extra):
    if validate(k_hat, k_meta, tol).accepted:
        assert validate(k_hat, k_meta, tol + extra).accepted


def test_report_row_format():
    r = validate(0.5, 0.5, pair=(3, 4), stage=Stage.CRF_AND_VIGNETTE)
    assert r.as_row().split("\t") == ["crf+vignette", "3", "4", "0.5", "0.5", "0", "ok"]


def test_aggregate_single_and_mean():
    g = InverseResponse(0, 0.3, 0.7)
    assert aggregate([g]) is g
    mean = aggregate([InverseResponse(0, 0.4, 0.6), InverseResponse(0, 0.6, 0.4)])
    np.testing.assert_allclose(mean.coeffs, [0, 0.5, 0.5], atol=1e-15)


def test_aggregate_uses_accepted_rounds_only():
    a, b = VignetteModel(-0.5, 0.1, 0.0), VignetteModel(-0.9, 0.3, -0.2)
    reports = [validate(1.0, 1.0), validate(2.0, 1.0)]
    assert aggregate([a, b], reports) == a
    c = VignetteModel(-0.7, 0.2, -0.1)
    np.testing.assert_allclose(aggregate([a, b, c], [True, False, True]).coeffs, (a.coeffs + c.coeffs) / 2)


def test_aggregate_reprojects_response():
    out = aggregate([InverseResponse(0.01, 0.5, 0.6), InverseResponse(0.0, 0.6, 0.5)])
    assert out.c0 == 0.0 and abs(out.c1 + out.c2 - 1) < 1e-15


def test_aggregate_requires_accepted_estimate():
    with pytest.raises(ValidationFailedError, match="calibration failed validation"):
        aggregate([InverseResponse()], [False])


@given(st.integers(0, 100_000))
@settings(max_examples=100, deadline=None, derandomize=True)
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    M1, M2 = rng.uniform(0.05, 0.95, (2, n))
    R1, R2 = rng.uniform(0, 1, (2, n))
    ms = match_set(M1, M2, R1, R2, k=0.7)
    perm = rng.permutation(n)
    shuffled = match_set(M1[perm], M2[perm], R1[perm], R2[perm], k=0.7)
    a = estimate_exposure_ratio(ms, G, V)
    b = estimate_exposure_ratio(shuffled, G, V)
    assert a == pytest.approx(b, rel=1e-13)


@given(st.integers(0, 100_000))
@settings(max_examples=100, deadline=None, derandomize=True)
def test_swap_gives_mean_of_reciprocals(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    ms = match_set(*rng.uniform(0.05, 0.95, (2, n)), *rng.uniform(0, 1, (2, n)), k=0.7)
    terms = ratio_terms(ms, G, V)
    swapped = estimate_exposure_ratio(ms.swapped(), G, V)
    assert swapped == pytest.approx(np.mean(1.0 / terms), rel=1e-12)
