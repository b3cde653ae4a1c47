import numpy as np
import pytest

import oodseg

# Benchmark sweeps in the tests run at the CLI's practical min-size so
# speckle discs (~13 px) survive while threshold noise is suppressed.
SWEEP_MIN_SIZE = 10


@pytest.fixture(scope="session")
def bench20():
    """The reference benchmark: 20 paired scenes from the default config."""
    return oodseg.build_benchmark(oodseg.DEFAULT_CONFIG, oodseg.DEFAULT_N_SCENES)


@pytest.fixture(scope="session")
def meta_model(bench20):
    """Meta classifier fitted on segments pooled over variants and thresholds."""
    features, labels = oodseg.build_training_table(
        bench20, oodseg.DEFAULT_GRID, min_size=SWEEP_MIN_SIZE
    )
    return oodseg.fit_meta(features, labels)


@pytest.fixture(scope="session")
def sweep_result(bench20, meta_model):
    return oodseg.sweep(bench20, oodseg.DEFAULT_GRID, model=meta_model, min_size=SWEEP_MIN_SIZE)


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)


def random_prob_map(rng, h, w, c, dtype=np.float32):
    """Random valid probability map (rows on the simplex)."""
    raw = rng.gamma(1.0, size=(h, w, c))
    return (raw / raw.sum(axis=2, keepdims=True)).astype(dtype)
