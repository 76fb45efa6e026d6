import math

import numpy as np
import pytest

from ecdiff import (
    LatentState,
    coefficients,
    denoise_step,
    make_linear_schedule,
)

# Cumulative product for T=50, betas 1e-4..0.02, frozen from the
# independent loop below.
ALPHA_BAR_50 = 0.602951597329715


def product_loop_alpha_bar(total_steps, beta_start, beta_end):
    """Throwaway-script oracle: plain-Python cumulative product."""
    out = [1.0]
    for j in range(total_steps):
        beta = beta_start + (beta_end - beta_start) * j / (total_steps - 1)
        out.append(out[-1] * (1.0 - beta))
    return out


def test_zero_noise_schedule_is_flat():
    sched = make_linear_schedule(2, 0.0, 0.0)
    assert sched.alpha_bar.tolist() == [1.0, 1.0, 1.0]


def test_linear_schedule_matches_product_loop():
    sched = make_linear_schedule(50, 1e-4, 0.02)
    oracle = product_loop_alpha_bar(50, 1e-4, 0.02)
    assert np.allclose(sched.alpha_bar, oracle, rtol=0, atol=1e-15)
    assert sched.alpha_bar[50] == pytest.approx(ALPHA_BAR_50, abs=1e-15)
    assert np.all(np.diff(sched.alpha_bar) < 0)


@pytest.mark.parametrize("bad", [(50, 1e-4, 1.5), (50, 0.5, 0.1), (50, -0.1, 0.2), (1, 1e-4, 0.02)])
def test_schedule_parameter_errors(bad):
    with pytest.raises(ValueError):
        make_linear_schedule(*bad)


def test_coefficients_flat_schedule_is_identity():
    sched = make_linear_schedule(10, 0.0, 0.0)
    for t in range(10):
        f, g = coefficients(sched, t)
        assert f == 1.0
        assert g == 0.0


def test_coefficients_formula_recomputation():
    # alpha_bar = [1, 0.5, 0.25] gives f = sqrt(2), g = sqrt(2)*sqrt(0.75) - sqrt(0.5)
    from ecdiff import SamplerSchedule

    sched = SamplerSchedule(2, np.array([1.0, 0.5, 0.25]))
    f, g = coefficients(sched, 1)
    assert f == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert g == pytest.approx(math.sqrt(2.0) * math.sqrt(0.75) - math.sqrt(0.5), rel=1e-15)


def test_coefficients_index_errors(schedule):
    with pytest.raises(IndexError):
        coefficients(schedule, schedule.total_steps)
    with pytest.raises(IndexError):
        coefficients(schedule, -1)


def test_denoise_step_zero_noise_scales_by_f(schedule):
    x = LatentState(np.ones(4), 30)
    out = denoise_step(x, np.zeros(4), schedule)
    f, _ = coefficients(schedule, 29)
    assert np.allclose(out.data, f * np.ones(4), rtol=0, atol=0)
    assert out.timestep == 29


def test_denoise_step_flat_schedule_identity(flat_schedule):
    rng = np.random.default_rng(5)
    x = LatentState(rng.standard_normal(6), 12)
    out = denoise_step(x, rng.standard_normal(6), flat_schedule)
    assert np.array_equal(out.data, x.data)


def test_denoise_step_scalar_recomputation(schedule):
    rng = np.random.default_rng(123)
    x = LatentState(rng.standard_normal(5), 17)
    eps = rng.standard_normal(5)
    out = denoise_step(x, eps, schedule)
    f, g = coefficients(schedule, 16)
    for i in range(5):
        assert out.data[i] == pytest.approx(f * x.data[i] - g * eps[i], rel=1e-15)


def test_denoise_step_errors(schedule):
    with pytest.raises(ValueError):
        denoise_step(LatentState(np.ones(3), 5), np.ones(4), schedule)
    with pytest.raises(ValueError):
        denoise_step(LatentState(np.ones(3), 0), np.ones(3), schedule)


def test_full_composition_stays_finite(schedule):
    # Bounded predictor, alpha_bar bounded well away from 0.
    assert schedule.alpha_bar.min() > 1e-6
    rng = np.random.default_rng(0)
    state = LatentState(rng.standard_normal(8), schedule.total_steps)
    while state.timestep > 0:
        eps = np.tanh(state.data)  # bounded in [-1, 1]
        state = denoise_step(state, eps, schedule)
    assert np.all(np.isfinite(state.data))
