import numpy as np
import pytest

from kobalab.constraints import cnorm, hdot
from kobalab.domains import contains, exp_model, unit_ball
from kobalab.errors import NotConvex
from kobalab.logtype import (NearBoundarySpec, calibrate_constant, complex_tangent_directions, direction_grid,
                             fit_exponent, log_type_certificate, measure_gaps, near_boundary_samples)

LEVELS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


def test_spec_validation():
    with pytest.raises(ValueError):
        NearBoundarySpec((1e-2, 1e-1))
    with pytest.raises(ValueError):
        NearBoundarySpec(())


def test_samples_hit_levels():
    B = unit_ball()
    Z, d, k, xi = near_boundary_samples(B, NearBoundarySpec(LEVELS, 4, seed=1))
    assert len(Z) == 4 * len(LEVELS)
    assert np.all(contains(B, Z))
    np.testing.assert_allclose(d, np.array(LEVELS)[k], rtol=1e-6)
    np.testing.assert_allclose(cnorm(xi), 1, atol=1e-9)


def test_direction_grid_unit():
    G = direction_grid(2, 96)
    np.testing.assert_allclose(cnorm(G), 1)
    assert len(G) >= 48


def test_complex_tangent():
    nrm = np.array([0.6, 0.8j])
    T = complex_tangent_directions(nrm)
    assert T.shape == (1, 2)
    assert abs(hdot(T[0], nrm)) < 1e-12


def test_ball_tangential_gap():
    B = unit_ball()
    g = measure_gaps(B, NearBoundarySpec(LEVELS, 2, seed=0))
    d = g["delta"]
    np.testing.assert_allclose(g["gap"], np.sqrt(2 * d - d * d), rtol=1e-4)


def test_ball_certificate_passes():
    B = unit_ball()
    spec = NearBoundarySpec(LEVELS, 4)
    gaps = measure_gaps(B, spec)
    C = calibrate_constant(gaps, 1.0)
    cert = log_type_certificate(B, spec, 1.0, C, gaps=gaps)
    assert cert.passed and cert.sample_count == 20
    assert np.isfinite(cert.lambda_hat)
    assert cert.worst["violated"] is False


def test_exp_model_exponents():
    spec = NearBoundarySpec(LEVELS, 2, anchor=np.zeros(2))
    lam, _ = fit_exponent(measure_gaps(exp_model(0.5), spec))
    assert 1.8 <= lam <= 2.2
    gaps = measure_gaps(exp_model(2.0), spec)
    lam, _ = fit_exponent(gaps)
    assert 0.4 <= lam <= 0.6
    for nu in (0.1, 0.5, 1.0, 3.0):
        # even calibrated on the shallowest level the bound is broken deeper in
        shallow = {k: v[gaps["level"] == 0] for k, v in gaps.items()}
        cert = log_type_certificate(exp_model(2.0), spec, nu, calibrate_constant(shallow, nu), gaps=gaps)
        assert not cert.passed and not cert.exponent_admissible
        assert cert.worst["violated"]


def test_certificate_rejects_nonconvex_and_bad_params():
    with pytest.raises(NotConvex):
        measure_gaps(exp_model(2.0, is_convex=False), NearBoundarySpec(LEVELS))
    with pytest.raises(ValueError):
        log_type_certificate(unit_ball(), NearBoundarySpec(LEVELS), 0.0, 1.0)
