import math

import numpy as np
import pytest

from weyllab.errors import QuadratureFailure
from weyllab.quadrature import gauss_legendre, tanh_sinh


def test_smooth_integrand():
    v, err = tanh_sinh(np.sin, 0.0, math.pi, rel_tol=1e-12)
    assert abs(v - 2.0) < 1e-13


def test_inverse_sqrt_endpoint_singularity():
    v, err = tanh_sinh(lambda w, d_lo, d_hi: 1.0 / np.sqrt(d_hi),
                       0.0, 1.0, rel_tol=1e-12, endpoint_distances=True)
    assert abs(v - 2.0) < 1e-12


def test_both_endpoint_singularities():
    # int_0^1 1/sqrt(x(1-x)) = pi
    v, err = tanh_sinh(lambda w, d_lo, d_hi: 1.0 / np.sqrt(d_lo * d_hi),
                       0.0, 1.0, rel_tol=1e-12, endpoint_distances=True)
    assert abs(v - math.pi) < 1e-11


def test_log_singularity_plain_interface():
    v, err = tanh_sinh(np.log, 0.0, 1.0, rel_tol=1e-11)
    assert abs(v + 1.0) < 1e-10


def test_orientation_and_empty():
    assert tanh_sinh(np.sin, 1.0, 1.0) == (0.0, 0.0)
    with pytest.raises(QuadratureFailure):
        tanh_sinh(np.sin, 1.0, 0.0)


def test_stall_reports_achieved_error():
    # A non-integrable singularity cannot converge.
    with pytest.raises(QuadratureFailure) as exc:
        tanh_sinh(lambda w, d_lo, d_hi: 1.0 / d_hi, 0.0, 1.0,
                  rel_tol=1e-10, endpoint_distances=True)
    assert exc.value.achieved is not None


def test_gauss_legendre():
    assert abs(gauss_legendre(np.cos, 0.0, 1.0, n=32) - math.sin(1.0)) < 1e-14
