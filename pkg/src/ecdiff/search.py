"""Quality/Efficiency/Burden objective and the two-stage greedy search.

Stage 1 scans the approximation-step count k with an inner directed walk
over the smoothing-factor grid; stage 2 fixes (k, alpha) and walks the
switching-point grid.  Both walks start mid-grid, keep moving while the
objective improves, flip direction on a non-improvement, and stop after
three consecutive non-improvements (ties count as non-improvements) or
when the grid is exhausted.  The outer k scan stops after three
consecutive k values without a new global best.

An exhaustive grid evaluator is provided as the validation oracle; on
coordinate-wise unimodal landscapes the greedy walks return its argmax.
"""

from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricConfig, ssim


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of the scalarized objective plus the earliest allowed switch."""

    w1: float = 0.3   # quality
    w2: float = 0.3   # efficiency
    w3: float = 0.4   # cloud burden
    s_prime: int = 30

    def __post_init__(self):
        for w in (self.w1, self.w2, self.w3):
            if not np.isfinite(w) or w < 0:
                raise ValueError("weights must be finite and nonnegative")


@dataclass(frozen=True)
class SearchSpace:
    k_values: tuple[int, ...] = (1, 2, 3, 4, 5)
    alpha_values: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    s_values: tuple[int, ...] = tuple(range(30, 41))
    alpha_start: float = 0.5
    s_start: int = 35
    patience: int = 3

    def __post_init__(self):
        if self.alpha_start not in self.alpha_values:
            raise ValueError("alpha_start must belong to alpha_values")
        if self.s_start not in self.s_values:
            raise ValueError("s_start must belong to s_values")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def quality(x_cloud: np.ndarray, x_ec: np.ndarray,
            cfg: MetricConfig = MetricConfig()) -> float:
    """Structural similarity of the collaborative output to the cloud output."""
    return ssim(x_cloud, x_ec, cfg)


def efficiency(t_cloud: float, t_edge: float, t_ec: float) -> float:
    """Fraction of the cloud-to-edge latency gap the method recovers.

    Not clamped: a run faster than the edge model scores above 1.
    """
    if t_cloud <= t_edge:
        raise ValueError("cloud latency must exceed edge latency")
    return (t_cloud - t_ec) / (t_cloud - t_edge)


def burden(total_steps: int, s: int, s_prime: int) -> float:
    """Cloud-load penalty: (T - s) / (T - s'), 1 at the earliest switch."""
    if s_prime >= total_steps:
        raise ValueError("s_prime must be below the total step count")
    return (total_steps - s) / (total_steps - s_prime)


def objective(w: ObjectiveWeights, q: float, e: float, b: float) -> float:
    return w.w1 * q + w.w2 * e + w.w3 * b


@dataclass(frozen=True)
class Visit:
    stage: int
    k: int | None
    alpha: float | None
    s: int | None
    value: float


@dataclass
class StageOneResult:
    k_best: int
    alpha_best: float
    value: float
    evaluations: int
    visits: list[Visit] = field(default_factory=list)


@dataclass
class StageTwoResult:
    s_best: int
    value: float
    evaluations: int
    visits: list[Visit] = field(default_factory=list)


def _next_grid_value(values, current, visited, direction):
    """First unvisited grid value beyond `current` in `direction`."""
    if direction == 1:
        for v in values:
            if v > current and v not in visited:
                return v
    else:
        for v in reversed(values):
            if v < current and v not in visited:
                return v
    return None


def _directed_walk(values, start, evaluate, patience):
    """The shared inner walk; returns (best_x, best_value, visits)."""
    visited = [start]
    best_x = start
    best_v = evaluate(start)
    visits = [(start, best_v)]
    direction = 1
    worse = 0
    current = start
    while worse < patience and len(visited) < len(values):
        nxt = _next_grid_value(values, current, visited, direction)
        if nxt is None:
            break
        current = nxt
        visited.append(current)
        value = evaluate(current)
        visits.append((current, value))
        if value > best_v:
            best_v = value
            best_x = current
            worse = 0
        else:
            worse += 1
            direction = -direction
    return best_x, best_v, visits


def greedy_stage1(evaluator, space: SearchSpace, p: int) -> StageOneResult:
    """Find (k, alpha): directed alpha walk per k, early-stopped k scan.

    `evaluator(p, k, alpha)` must be deterministic.  The global best starts
    at -inf (not 0) so landscapes with non-positive objective values still
    return the best visited candidate; visit order is unchanged.
    """
    visits: list[Visit] = []
    best_v = -np.inf
    k_best = None
    alpha_best = None
    stagnant = 0
    for k in space.k_values:
        def eval_alpha(a, _k=k):
            value = evaluator(p, _k, a)
            visits.append(Visit(1, _k, a, None, value))
            return value

        a_best, v_best, _ = _directed_walk(
            space.alpha_values, space.alpha_start, eval_alpha, space.patience
        )
        if v_best > best_v:
            best_v = v_best
            k_best = k
            alpha_best = a_best
            stagnant = 0
        else:
            stagnant += 1
        if stagnant >= space.patience:
            break
    return StageOneResult(k_best, alpha_best, best_v, len(visits), visits)


def greedy_stage2(evaluator, space: SearchSpace) -> StageTwoResult:
    """Find the switching point with the same walk over the s grid."""
    visits: list[Visit] = []

    def eval_s(s):
        value = evaluator(s)
        visits.append(Visit(2, None, None, s, value))
        return value

    s_best, v_best, _ = _directed_walk(
        space.s_values, space.s_start, eval_s, space.patience
    )
    return StageTwoResult(s_best, v_best, len(visits), visits)


def exhaustive_stage1(evaluator, space: SearchSpace, p: int):
    """Full-grid argmax over (k, alpha); first encountered wins ties,
    scanning k ascending then alpha ascending."""
    best = None
    best_v = -np.inf
    count = 0
    for k in space.k_values:
        for a in space.alpha_values:
            v = evaluator(p, k, a)
            count += 1
            if v > best_v:
                best_v = v
                best = (k, a)
    return best[0], best[1], best_v, count


def exhaustive_stage2(evaluator, space: SearchSpace):
    """Full-grid argmax over s; first encountered wins ties (ascending)."""
    best = None
    best_v = -np.inf
    count = 0
    for s in space.s_values:
        v = evaluator(s)
        count += 1
        if v > best_v:
            best_v = v
            best = s
    return best, best_v, count
