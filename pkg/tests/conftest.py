"""Shared fixtures and small builders used across the test modules."""

import math

import numpy as np
import pytest

from latticekg.lattice import LatticeWindow, build_operator
from latticekg.potential import cos_potential, zero_potential

# Constructed, not typed as a literal: the nearest-double of the product
# differs from the rounded decimal in the last bit.
GOLDEN_OMEGA = math.pi * (math.sqrt(5.0) - 1.0)


def free_operator(n_half, m=1.0, tag="T"):
    """Zero-potential operator on {-n_half..n_half}."""
    window = LatticeWindow(n_half)
    if tag == "T":
        return build_operator(zero_potential(), (0.0,), 0.0, window, "T", m=m)
    return build_operator(zero_potential(), (0.0,), 0.0, window, tag)


def cos_operator(lam, n_half, theta=0.0, m=1.0, tag="T"):
    """2*lam*cos potential sampled along the golden-frequency orbit."""
    window = LatticeWindow(n_half)
    if tag == "T":
        return build_operator(
            cos_potential(lam), (GOLDEN_OMEGA,), theta, window, "T", m=m
        )
    return build_operator(cos_potential(lam), (GOLDEN_OMEGA,), theta, window, tag)


def delta_data(window, site, amplitude=1.0):
    x = np.zeros(window.size)
    x[window.offset(site)] = amplitude
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(0x5EED)


@pytest.fixture
def small_free_T():
    return free_operator(30)


@pytest.fixture
def small_cos_T():
    return cos_operator(0.3, 40, theta=0.3)
