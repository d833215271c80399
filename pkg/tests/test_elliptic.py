import math

import mpmath
import numpy as np
import pytest

from tokamak_uq.elliptic import elliptic_KE, elliptic_KE_vec


def mp_KE(k):
    """Defining integrals evaluated by adaptive quadrature, 30 digits."""
    with mpmath.workdps(30):
        k = mpmath.mpf(k)
        K = mpmath.quad(
            lambda t: 1 / mpmath.sqrt(1 - k**2 * mpmath.sin(t) ** 2),
            [0, mpmath.pi / 2])
        E = mpmath.quad(
            lambda t: mpmath.sqrt(1 - k**2 * mpmath.sin(t) ** 2),
            [0, mpmath.pi / 2])
        return float(K), float(E)


def test_zero_modulus():
    K, E = elliptic_KE(0.0)
    assert K == pytest.approx(math.pi / 2, abs=1e-15)
    assert E == pytest.approx(math.pi / 2, abs=1e-15)


def test_near_unit_modulus():
    K, E = elliptic_KE(1.0 - 1e-12)
    assert E == pytest.approx(1.0, abs=1e-5)   # E(1) = 1
    assert K > 10.0                            # logarithmic blowup


@pytest.mark.parametrize("k", [-0.1, 1.0, 1.5, float("nan")])
def test_domain_rejected(k):
    with pytest.raises(ValueError):
        elliptic_KE(k)


@pytest.mark.parametrize("k", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_against_quadrature_oracle(k):
    K, E = elliptic_KE(k)
    Kq, Eq = mp_KE(k)
    assert K == pytest.approx(Kq, rel=1e-10)
    assert E == pytest.approx(Eq, rel=1e-10)


def test_vectorised_matches_scalar():
    ks = np.linspace(0.0, 0.999, 57)
    Kv, Ev = elliptic_KE_vec(ks)
    for i, k in enumerate(ks):
        K, E = elliptic_KE(float(k))
        assert Kv[i] == K and Ev[i] == E


def test_legendre_relation():
    # K(k) E(k') + K(k') E(k) - K(k) K(k') = pi/2 with k'^2 = 1 - k^2
    k = 0.37
    kp = math.sqrt(1.0 - k * k)
    K, E = elliptic_KE(k)
    Kp, Ep = elliptic_KE(kp)
    assert K * Ep + Kp * E - K * Kp == pytest.approx(math.pi / 2, rel=1e-13)
