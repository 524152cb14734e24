import numpy as np
import pytest

from rydthz.levels import TWO_PI, default_fields, rb87_scheme

MHZ = TWO_PI * 1e6


def typical_fields(scheme, omega_t=0.0, omega_s=0.0):
    """Modest auxiliary drives with A1 slightly red detuned."""
    return default_fields(
        scheme,
        rabi={"A1": 5 * MHZ, "A2": 3 * MHZ, "A3": 10 * MHZ, "A4": 10 * MHZ,
              "T": omega_t, "S": omega_s},
        detuning={"A1": -5.2 * MHZ},
    )


def random_fields(scheme, rng, probes=True):
    rabi = {lab: rng.uniform(0.5, 20) * MHZ * np.exp(1j * rng.uniform(0, TWO_PI))
            for lab in ("A1", "A2", "A3", "A4")}
    if probes:
        rabi["T"] = rng.uniform(0.01, 2) * MHZ
        rabi["S"] = rng.uniform(0.01, 2) * MHZ
    det = {lab: rng.uniform(-20, 20) * MHZ for lab in ("A1", "A2", "A3", "T", "A4")}
    return default_fields(scheme, rabi=rabi, detuning=det)


@pytest.fixture(scope="session")
def scheme():
    return rb87_scheme()


@pytest.fixture
def loop_fields(scheme):
    return typical_fields(scheme)
