from __future__ import annotations

import time

import pytest

from sixwheel.qtuner import train
from sixwheel.scenario import load_preset
from sixwheel.sim import integrated_square_error, run_scenario


@pytest.fixture(scope="session")
def s_curve_training():
    """Untuned baseline ISE and the 200 per-episode ISEs of a seeded training run."""
    start = time.perf_counter()
    sc = load_preset("s_curve")
    baseline = integrated_square_error(run_scenario(sc), sc.dt)
    tuner, ises = train(sc, 200)
    return {"scenario": sc, "baseline": baseline, "ises": ises, "tuner": tuner,
            "seconds": time.perf_counter() - start}
