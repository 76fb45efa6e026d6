import numpy as np
import pytest

from ecdiff import (
    DegradationSpec,
    GaussianMixtureModelSpec,
    GaussianMixturePredictor,
    LatencyModel,
    LatentState,
    PayloadSpec,
    make_edge_predictor,
    make_linear_schedule,
)

DIM = 8
N_COMPONENTS = 5


@pytest.fixture(scope="session")
def schedule():
    return make_linear_schedule(50, 1e-4, 0.02)


@pytest.fixture(scope="session")
def alt_schedule():
    return make_linear_schedule(40, 5e-4, 0.035)


@pytest.fixture(scope="session")
def flat_schedule():
    return make_linear_schedule(50, 0.0, 0.0)


def make_mixture(mean_seed=7, scale=1.5, sigma=0.12, n=N_COMPONENTS, dim=DIM):
    rng = np.random.default_rng(mean_seed)
    means = rng.normal(0.0, scale, size=(n, dim))
    return GaussianMixtureModelSpec(means, np.full(n, 1.0 / n), sigma)


@pytest.fixture(scope="session")
def mixture():
    return make_mixture()


@pytest.fixture(scope="session")
def cloud(mixture, schedule):
    return GaussianMixturePredictor(mixture, schedule, cost_seconds=4.9)


@pytest.fixture(scope="session")
def edge(cloud):
    # The degraded-edge scenario shared by the quality-ordering and
    # smoothing-ablation tests.
    return make_edge_predictor(
        cloud, DegradationSpec(additive_bias_scale=0.04, seed=3), cost_seconds=1.82
    )


@pytest.fixture(scope="session")
def latency():
    return LatencyModel(
        bandwidth_bits_per_second=18.88e6,
        payload=PayloadSpec((4, 64, 64), (2, 77, 768), 2),
    )


def seeded_latent(seed, total_steps, dim=DIM):
    rng = np.random.default_rng(seed)
    return LatentState(rng.standard_normal(dim), total_steps)
