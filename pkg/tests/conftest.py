import time

import pytest

from wtflow.data import gen_scenario
from wtflow.paths import PathKind
from wtflow.train import TrainConfig, train


def desk_config(seed, wt_enabled, direction=PathKind.REVERSE_RF, max_steps=4000):
    """Desk-scale toy settings: batch 256, constant lr 1e-3, capped steps."""
    return TrainConfig(learning_rate=1e-3, weight_decay=0.1, epochs=100000,
                       batch_size=256, lr_decay_every=20, lr_decay_factor=1.0,
                       seed=seed, direction=direction, wt_enabled=wt_enabled,
                       hidden=(256, 256), max_steps=max_steps)


@pytest.fixture(scope="session")
def disc_grid_run():
    """Reversed flow matching (no WT) on the in-disc lattice, fixed seed."""
    scenario = gen_scenario("disc_grid", 121, 64, seed=7)
    start = time.monotonic()
    result = train(scenario.train, desk_config(seed=7, wt_enabled=False))
    return scenario, result, time.monotonic() - start


@pytest.fixture(scope="session")
def disjoint_run():
    """WT-Flow on the disjoint-support scenario, fixed seed."""
    scenario = gen_scenario("disjoint", 512, 256, seed=11)
    start = time.monotonic()
    result = train(scenario.train, desk_config(seed=11, wt_enabled=True))
    return scenario, result, time.monotonic() - start
