"""Shared scalar-loop reference implementations used as independent
oracles. Deliberately written with plain python loops and cmath so they
share no code path with the vectorized package."""

import cmath
import math

import numpy as np
import pytest


def steering_oracle(n_y, n_z, d_over_lambda, phi, theta):
    """Element-by-element steering vector, a_z fastest."""
    out = []
    for ay in range(n_y):
        for az in range(n_z):
            ph = -2.0 * math.pi * d_over_lambda * (
                ay * math.sin(phi) * math.sin(theta) + az * math.cos(theta)
            )
            out.append(cmath.exp(1j * ph))
    return np.array(out)


def beam_gain_oracle(weights, steering):
    acc = 0.0 + 0.0j
    for w, a in zip(weights, steering):
        acc += w.conjugate() * a
    return abs(acc) ** 2


def glrt_statistic_oracle(v, t0, delta_f, delay, doppler):
    """Triple-loop matched statistic from per-cell projections v[n, m]."""
    acc = 0.0 + 0.0j
    n_sym, m_sub = v.shape
    for n in range(n_sym):
        for m in range(m_sub):
            phase = cmath.exp(-2j * math.pi * doppler * n * t0) * cmath.exp(
                2j * math.pi * m * delta_f * delay
            )
            acc += phase * v[n, m]
    return abs(acc) ** 2


def gram_schmidt_projection_oracle(h_list, a):
    """Project a onto the complement of span{h_k} via classical
    Gram-Schmidt with re-orthogonalization, then normalize."""
    basis = []
    for h in h_list:
        v = np.array(h, dtype=complex)
        for _ in range(2):  # re-orthogonalize for numerical headroom
            for b in basis:
                v = v - b * np.vdot(b, v)
        norm = np.linalg.norm(v)
        if norm > 1e-12 * np.linalg.norm(h):
            basis.append(v / norm)
    r = np.array(a, dtype=complex)
    for _ in range(2):
        for b in basis:
            r = r - b * np.vdot(b, r)
    return r / np.linalg.norm(r)


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
