"""Complete elliptic integrals K(k), E(k) via the arithmetic-geometric mean.

Modulus convention: K(k) = int_0^{pi/2} dt / sqrt(1 - k^2 sin^2 t). The AGM
iteration converges quadratically; a fixed cap of 40 sweeps is far beyond
double precision for any k in [0, 1).
"""

from __future__ import annotations

import numpy as np


def elliptic_KE(k: float):
    """K and E for a scalar modulus k in [0, 1)."""
    if not 0.0 <= k < 1.0:
        raise ValueError(f"modulus k = {k!r} outside [0, 1)")
    K, E = elliptic_KE_vec(np.array([k]))
    return float(K[0]), float(E[0])


def elliptic_KE_vec(k: np.ndarray):
    """Vectorised K and E. No domain checks; caller guarantees 0 <= k < 1."""
    k = np.asarray(k, dtype=float)
    a = np.ones_like(k)
    # sqrt((1-k)(1+k)) avoids cancellation near k = 1
    b = np.sqrt((1.0 - k) * (1.0 + k))
    c = k.copy()
    csum = 0.5 * c * c
    power = 0.5
    for _ in range(40):
        if np.all(c < 5e-17):
            break
        a, b, c = 0.5 * (a + b), np.sqrt(a * b), 0.5 * (a - b)
        power *= 2.0
        csum = csum + power * c * c
    K = np.pi / (2.0 * a)
    E = K * (1.0 - csum)
    return K, E
