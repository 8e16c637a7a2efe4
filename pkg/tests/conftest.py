"""Shared fixtures: the reference cell and small deterministic traces."""

import numpy as np
import pytest

from ecmnet import ecm, network, profiles
from ecmnet import simulate as sim

TRUE_PARAMS = ecm.EcmParams(r0=0.06, r1=0.03, c=1000.0, q=2.0)


@pytest.fixture
def true_params():
    return TRUE_PARAMS


@pytest.fixture
def coeffs():
    return ecm.OCV_COEFFS_DEFAULT


@pytest.fixture
def small_trace(coeffs):
    """120 s dynamic trace through the true cell (deterministic)."""
    prof = profiles.synth_dynamic_profile(
        duration_s=120.0, dt=1.0, seed=7, soc_drop=0.01
    )
    return sim.simulate(TRUE_PARAMS, coeffs, prof, z0=0.6)


@pytest.fixture
def const_profile():
    """600 s constant 2 A discharge."""

    def make(i_amps=-2.0, n=601, dt=1.0):
        return profiles.CurrentProfile(dt=dt, currents=np.full(n, i_amps))

    return make


@pytest.fixture
def norm():
    return network.NormSpec()
