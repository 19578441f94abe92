"""Discrete particle swarm optimization and randomized grid search over integer parameters."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class IntParam:
    """Integer parameter in [lower, upper], or one of ``values`` when given.

    With ``values`` the swarm moves over list positions, so neighbouring
    positions are neighbouring admissible values.
    """

    name: str
    lower: int = 0
    upper: int = 0
    values: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.values is not None:
            if not self.values:
                raise ValueError(f"{self.name}: empty admissible-value list")
            object.__setattr__(self, "lower", 0)
            object.__setattr__(self, "upper", len(self.values) - 1)
        if self.lower > self.upper:
            raise ValueError(f"{self.name}: empty range [{self.lower}, {self.upper}]")

    def decode(self, coord: int) -> int:
        return int(self.values[coord]) if self.values is not None else int(coord)


@dataclass
class ParamSpace:
    params: Sequence[IntParam]
    valid: Callable[[dict], bool] = field(default=lambda p: True)

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.params], dtype=np.int64)

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.params], dtype=np.int64)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def decode(self, coords) -> dict:
        return {p.name: p.decode(int(c)) for p, c in zip(self.params, coords)}

    def is_valid(self, coords) -> bool:
        return bool(self.valid(self.decode(coords)))

    def project(self, coords) -> np.ndarray:
        """Round, clamp, then move to the nearest valid point (L2, ties lexicographic)."""
        c = np.clip(np.floor(np.asarray(coords, dtype=np.float64) + 0.5), self.lower, self.upper).astype(np.int64)
        if self.is_valid(c):
            return c
        span = int((self.upper - self.lower).max())
        for radius in range(1, span + 1):
            best = None
            for delta in itertools.product(range(-radius, radius + 1), repeat=len(c)):
                if max(abs(d) for d in delta) != radius:
                    continue
                cand = c + np.array(delta, dtype=np.int64)
                if np.any(cand < self.lower) or np.any(cand > self.upper) or not self.is_valid(cand):
                    continue
                key = (int(np.sum((cand - c) ** 2)), tuple(cand.tolist()))
                if best is None or key < best[0]:
                    best = (key, cand)
            if best is not None:
                return best[1]
        raise ValueError("parameter space has no valid point")


@dataclass(frozen=True)
class SwarmConfig:
    swarm_size: int = 20
    iterations: int = 30
    inertia: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2 or self.iterations < 1:
            raise ValueError("need swarm_size >= 2 and iterations >= 1")
        if not 0.0 < self.inertia <= 1.0 or self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("need inertia in (0, 1] and positive c1, c2")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_score: float


@dataclass
class SearchResult:
    best: dict
    best_score: float
    trace: list = field(default_factory=list)  # (iteration, best score, best params)
    evaluations: int = 0


def dpso_optimize(space: ParamSpace, objective: Callable[[dict], float], config: SwarmConfig = SwarmConfig(),
                  mapper: Callable = map) -> SearchResult:
    """Maximize ``objective`` over the integer space.

    Continuous velocity updates, positions rounded and clamped after each
    step. Random numbers for a step are drawn before any evaluation and
    ``mapper`` (e.g. ``executor.map``) must preserve order, so results do
    not depend on how evaluations are scheduled.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = space.lower, space.upper
    span = (hi - lo).astype(np.float64)
    dims = len(lo)
    memo: dict[tuple, float] = {}

    def evaluate(positions):
        keys = [tuple(p.tolist()) for p in positions]
        todo = [k for k in dict.fromkeys(keys) if k not in memo]
        for key, score in zip(todo, mapper(lambda k: float(objective(space.decode(k))), todo)):
            memo[key] = score
        return [memo[k] for k in keys]

    start = rng.integers(lo, hi + 1, size=(config.swarm_size, dims))
    velocity = rng.uniform(-0.25, 0.25, size=(config.swarm_size, dims)) * span
    positions = [space.project(p) for p in start]
    scores = evaluate(positions)
    swarm = [Particle(p, v, p.copy(), s) for p, v, s in zip(positions, velocity, scores)]
    g = int(np.argmax(scores))
    g_pos, g_score = swarm[g].best_position.copy(), swarm[g].best_score
    trace = [(0, g_score, space.decode(g_pos))]

    for it in range(1, config.iterations + 1):
        r1 = rng.random((config.swarm_size, dims))
        r2 = rng.random((config.swarm_size, dims))
        for i, p in enumerate(swarm):
            v = (config.inertia * p.velocity
                 + config.c1 * r1[i] * (p.best_position - p.position)
                 + config.c2 * r2[i] * (g_pos - p.position))
            p.velocity = np.clip(v, -span, span)
            p.position = space.project(p.position + p.velocity)
        scores = evaluate([p.position for p in swarm])
        for p, s in zip(swarm, scores):
            if s > p.best_score:
                p.best_position, p.best_score = p.position.copy(), s
            if s > g_score:
                g_pos, g_score = p.position.copy(), s
        trace.append((it, g_score, space.decode(g_pos)))

    return SearchResult(space.decode(g_pos), g_score, trace, len(memo))


def random_grid_search(candidates: Sequence[int], objective: Callable[[int], float], n_draws: int,
                       seed: int = 0, mapper: Callable = map) -> SearchResult:
    """Evaluate ``n_draws`` distinct random candidates; ties go to the smaller value."""
    if not candidates:
        raise ValueError("no candidates to search")
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    rng = np.random.default_rng(seed)
    pool = list(candidates)
    picked = [pool[i] for i in rng.permutation(len(pool))[:n_draws]]
    scores = list(mapper(lambda v: float(objective(v)), picked))
    best_value, best_score = None, -np.inf
    trace = []
    for i, (v, s) in enumerate(zip(picked, scores)):
        if s > best_score or (s == best_score and v < best_value):
            best_value, best_score = v, s
        trace.append((i, best_score, {"value": best_value, "evaluated": v}))
    return SearchResult({"value": best_value}, best_score, trace, len(picked))


def write_trace(path, result: SearchResult) -> None:
    """CSV: iteration, best_score, then one column per parameter."""
    names = list(result.trace[0][2].keys()) if result.trace else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "best_score"] + names)
        for it, score, params in result.trace:
            w.writerow([it, f"{score:.9f}"] + [params[n] for n in names])
