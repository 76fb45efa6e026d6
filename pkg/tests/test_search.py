import numpy as np
import pytest

from ecdiff import (
    ObjectiveWeights,
    SearchSpace,
    burden,
    efficiency,
    exhaustive_stage1,
    exhaustive_stage2,
    greedy_stage1,
    greedy_stage2,
    objective,
    quality,
    ssim,
)

SPACE = SearchSpace()
WEIGHTS = ObjectiveWeights()


def test_quality_delegates_to_ssim():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(16), rng.standard_normal(16)
    assert quality(a, a) == pytest.approx(1.0, abs=1e-12)
    assert quality(a, -a) < 1.0
    assert quality(a, b) == ssim(a, b)


def test_efficiency_examples():
    assert efficiency(10.0, 4.0, 10.0) == 0.0
    assert efficiency(10.0, 4.0, 4.0) == 1.0
    assert efficiency(10.0, 4.0, 7.0) == pytest.approx(0.5)
    assert efficiency(10.0, 4.0, 2.0) > 1.0  # deliberately unclamped
    with pytest.raises(ValueError):
        efficiency(4.0, 4.0, 2.0)


def test_burden_examples():
    assert burden(50, 30, 30) == 1.0
    assert burden(50, 50, 30) == 0.0
    assert burden(50, 40, 30) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        burden(50, 40, 50)


def test_objective_examples():
    assert objective(WEIGHTS, 1.0, 1.0, 1.0) == pytest.approx(1.0)
    assert objective(WEIGHTS, 0.0, 0.0, 0.0) == 0.0
    assert objective(WEIGHTS, 0.9, 0.8, 0.5) == pytest.approx(0.71)
    with pytest.raises(ValueError):
        ObjectiveWeights(w1=-0.1)


def test_stage1_constant_evaluator_hand_simulation():
    calls = []

    def evaluator(p, k, alpha):
        calls.append((k, alpha))
        return 0.42

    result = greedy_stage1(evaluator, SPACE, p=7)
    assert (result.k_best, result.alpha_best) == (1, 0.5)
    # per k: start 0.5, then 0.6 (worse, flip), 0.4 (worse, flip), 0.7 (third
    # strike); the outer scan stops after three stagnant k values (k=2,3,4).
    walk = [0.5, 0.6, 0.4, 0.7]
    expected = [(k, a) for k in (1, 2, 3, 4) for a in walk]
    assert calls == expected
    assert result.evaluations == 16


def test_stage1_quadratic_matches_oracle():
    def evaluator(p, k, alpha):
        return -((alpha - 0.7) ** 2) - (k - 2) ** 2

    result = greedy_stage1(evaluator, SPACE, p=7)
    k_ex, a_ex, *_ = exhaustive_stage1(evaluator, SPACE, p=7)
    assert (result.k_best, result.alpha_best) == (2, pytest.approx(0.7)) == (k_ex, pytest.approx(a_ex))


def test_stage2_constant_evaluator_hand_simulation():
    calls = []

    def evaluator(s):
        calls.append(s)
        return 1.0

    result = greedy_stage2(evaluator, SPACE)
    assert result.s_best == 35
    assert calls == [35, 36, 34, 37]
    assert result.evaluations == 4


@pytest.mark.parametrize("peak", [30, 38, 40])
def test_stage2_unimodal_peaks(peak):
    def evaluator(s):
        return -abs(s - peak)

    result = greedy_stage2(evaluator, SPACE)
    s_ex, *_ = exhaustive_stage2(evaluator, SPACE)
    assert result.s_best == peak == s_ex


def _random_unimodal_landscape(rng):
    """Coordinate-wise unimodal objective on the (k, alpha) grid with
    distinct values: per-k alpha parabolas whose maxima are unimodal in k."""
    k_peak = int(rng.integers(1, 6))
    heights = {k: 2.0 - 0.35 * abs(k - k_peak) + 1e-3 * rng.standard_normal()
               for k in SPACE.k_values}
    alpha_peaks = {k: float(rng.choice(SPACE.alpha_values)) for k in SPACE.k_values}
    curv = {k: 0.5 + rng.random() for k in SPACE.k_values}

    def evaluator(p, k, alpha):
        return heights[k] - curv[k] * (alpha - alpha_peaks[k]) ** 2

    return evaluator


def test_stage1_randomized_unimodal_matches_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        evaluator = _random_unimodal_landscape(rng)
        greedy = greedy_stage1(evaluator, SPACE, p=7)
        k_ex, a_ex, v_ex, count = exhaustive_stage1(evaluator, SPACE, p=7)
        assert (greedy.k_best, greedy.alpha_best) == (k_ex, a_ex)
        assert greedy.evaluations <= 45 < count + 1
        assert count == 45


def test_stage2_randomized_unimodal_matches_oracle():
    rng = np.random.default_rng(31)
    for _ in range(20):
        peak = int(rng.integers(30, 41))
        scale = 0.1 + rng.random()

        def evaluator(s, _p=peak, _c=scale):
            return -_c * (s - _p) ** 2

        greedy = greedy_stage2(evaluator, SPACE)
        s_ex, *_ = exhaustive_stage2(evaluator, SPACE)
        assert greedy.s_best == peak == s_ex
        assert greedy.evaluations <= 11


def test_visit_sequences_deterministic():
    def evaluator(p, k, alpha):
        return k * 0.1 + alpha

    a = greedy_stage1(evaluator, SPACE, p=7)
    b = greedy_stage1(evaluator, SPACE, p=7)
    assert [(v.k, v.alpha, v.value) for v in a.visits] == [(v.k, v.alpha, v.value) for v in b.visits]


def test_exhaustive_tie_breaks_first_in_grid_order():
    k, a, value, _ = exhaustive_stage1(lambda p, k, alpha: 1.0, SPACE, p=7)
    assert (k, a) == (1, 0.1)
    s, value2, _ = exhaustive_stage2(lambda s: 1.0, SPACE)
    assert s == 30


def test_exhaustive_three_point_grid():
    space = SearchSpace(s_values=(30, 35, 36), s_start=35)
    values = {30: 0.2, 35: 0.9, 36: 0.4}
    s, v, count = exhaustive_stage2(lambda s: values[s], space)
    assert (s, v, count) == (35, 0.9, 3)


def test_exhaustive_invariant_to_value_permutation():
    # distinct values: the argmax does not depend on scan order
    rng = np.random.default_rng(8)
    values = rng.permutation(len(SPACE.s_values)).astype(float)
    table = dict(zip(SPACE.s_values, values))
    s, v, _ = exhaustive_stage2(lambda s: table[s], SPACE)
    assert table[s] == max(values)
