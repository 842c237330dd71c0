import numpy as np
import pytest

from slicewatch import config


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def default_cfg():
    return config.load_config()


@pytest.fixture
def small_cfg():
    """Short horizon and few runs, for pipeline tests that only need shape and determinism."""
    return config.load_config(
        overrides=[
            "horizon=500",
            "experiment.num_runs=2",
            "ocsvm.warmup=150",
            "cca.calibration=150",
            "anomaly_rate=0.01",
            "experiment.curve_every=100",
        ]
    )
