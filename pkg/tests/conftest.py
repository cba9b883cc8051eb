import numpy as np
import pytest

from bumphunt.basis import BasisSpec, evaluate_basis, rescale_times
from bumphunt.robust import LightCurve, PriorConfig
from bumphunt.simulator import SimulationConfig


@pytest.fixture(scope="session")
def small_spec():
    """Reduced basis (M=16, trend 8, detail level 3) for fast fits."""
    return BasisSpec(interval_length=512.0, n_components=16, n_trend=8)


@pytest.fixture(scope="session")
def full_spec():
    return BasisSpec()


@pytest.fixture(scope="session")
def prior():
    return PriorConfig()


@pytest.fixture(scope="session")
def fast_sim():
    """Small curves matched to the reduced basis."""
    return SimulationConfig(n_obs_range=(220, 260), seed=1234)


def make_design(spec, times, span_fraction=0.875):
    scaled = rescale_times(times, spec.interval_length * span_fraction)
    return evaluate_basis(spec, scaled)


def make_curve(times, values, sid="S0", fid="F0"):
    return LightCurve(source_id=sid, field_id=fid,
                      times=np.asarray(times, dtype=float),
                      values=np.asarray(values, dtype=float))


@pytest.fixture(scope="session")
def design_factory():
    return make_design


@pytest.fixture(scope="session")
def curve_factory():
    return make_curve
