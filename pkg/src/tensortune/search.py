"""Schedule spaces and the searches that walk them.

A ScheduleSpace is a per-task cross product of knob domains (tile factor
lists per axis, unroll, vectorize, optional GPU thread binding). Searches
score candidates through a caller-supplied scorer (higher is better) and only
ever score or return schedules that pass validity_check.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .data import (
    MAX_TILE_SLOTS,
    Dataset,
    Kernel,
    ScheduleConfig,
)
from .errors import DataValidationError, TensorTuneError
from .hardware import HardwareParams
from .sampling import task_priority_order

Scorer = Callable[[list[ScheduleConfig]], np.ndarray]
OracleFn = Callable[[Kernel, ScheduleConfig, HardwareParams], float]


@dataclass(frozen=True, eq=False)
class ScheduleSpace:
    """Cross product of knob domains for one (kernel, hardware) pair."""

    kernel: Kernel
    hw: HardwareParams
    tile_domains: tuple[tuple[tuple[int, ...], ...], ...]
    unroll_domain: tuple[int, ...]
    vectorize_domain: tuple[int, ...]
    bind_domain: tuple[tuple[int, int], ...] | None  # None on CPU targets

    def knob_domains(self) -> list[tuple]:
        knobs: list[tuple] = list(self.tile_domains)
        knobs.append(self.unroll_domain)
        knobs.append(self.vectorize_domain)
        if self.bind_domain is not None:
            knobs.append(self.bind_domain)
        return knobs

    def size(self) -> int:
        out = 1
        for domain in self.knob_domains():
            out *= len(domain)
        return out

    def config_from_indices(self, indices: Sequence[int]) -> ScheduleConfig:
        n_axes = len(self.tile_domains)
        tiles = tuple(
            self.tile_domains[a][indices[a]] for a in range(n_axes)
        )
        unroll = self.unroll_domain[indices[n_axes]]
        vectorize = self.vectorize_domain[indices[n_axes + 1]]
        binding = None
        if self.bind_domain is not None:
            binding = self.bind_domain[indices[n_axes + 2]]
        return ScheduleConfig(
            tile_factors=tiles,
            unroll_factor=unroll,
            vectorize_width=vectorize,
            thread_binding=binding,
        )


def _pow2_divisors(extent: int) -> list[int]:
    out = []
    f = 1
    while extent % f == 0 and f <= extent:
        out.append(f)
        f *= 2
    return out


def _axis_domain(extent: int, max_levels: int) -> tuple[tuple[int, ...], ...]:
    """Factor lists for one axis: singles, plus 2-level splits when allowed.

    Only powers of two whose product divides the extent are emitted, so every
    space point satisfies the tile-divisibility invariant by construction.
    """
    singles = [(f,) for f in _pow2_divisors(extent)]
    if max_levels < 2:
        return tuple(singles)
    pairs = []
    for a in _pow2_divisors(extent):
        if a < 2:
            continue
        for b in _pow2_divisors(extent // a):
            if b >= 2:
                pairs.append((a, b))
    ordered = singles + pairs
    ordered.sort(key=lambda fs: (math.prod(fs), len(fs), fs))
    return tuple(ordered)


DEFAULT_UNROLL_DOMAIN = (1, 2, 4, 8)
DEFAULT_VECTORIZE_DOMAIN = (1, 2, 4, 8, 16)


def _default_bind_domain(hw: HardwareParams) -> tuple[tuple[int, int], ...]:
    limit = hw.max_threads_per_block or 1024
    pairs = []
    for tx in (1, 2, 4, 8, 16, 32):
        for ty in (1, 2, 4, 8, 16, 32):
            if tx * ty <= limit:
                pairs.append((tx, ty))
    pairs.sort(key=lambda p: (p[0] * p[1], p))
    return tuple(pairs)


def default_space(
    kernel: Kernel,
    hw: HardwareParams,
    tile_axes: int = 2,
    max_levels: int = 2,
) -> ScheduleSpace:
    """Build the standard space for one task.

    The innermost `tile_axes` output axes get full power-of-two domains;
    leading axes stay untiled. Multi-level lists are budgeted so the
    flattened factor count never exceeds the layout cap.
    """
    extents = kernel.output_shape
    n_axes = len(extents)
    rich = min(tile_axes, n_axes)
    budget = MAX_TILE_SLOTS - (n_axes - rich)  # singles take one slot each
    levels = max_levels if budget >= 2 * rich else 1
    domains = []
    for axis, extent in enumerate(extents):
        if axis < n_axes - rich:
            domains.append(((1,),))
        else:
            domains.append(_axis_domain(extent, levels))
    bind = _default_bind_domain(hw) if hw.hardware_class == "GPU" else None
    return ScheduleSpace(
        kernel=kernel,
        hw=hw,
        tile_domains=tuple(domains),
        unroll_domain=DEFAULT_UNROLL_DOMAIN,
        vectorize_domain=DEFAULT_VECTORIZE_DOMAIN,
        bind_domain=bind,
    )


def validity_check(
    schedule: ScheduleConfig, kernel: Kernel, hw: HardwareParams
) -> list[str]:
    """Hardware-aware validity. Empty result means the schedule is runnable.

    GPU rules: bound threads within max_threads_per_block, staged tile
    footprint (4 bytes per element of the innermost tile) within shared
    memory, and virtual-thread usage (modeled as the unroll factor) within
    max_vthread_extent. CPU rules: vector width within the vector unit and no
    thread binding. Tile shape rules apply to both classes.
    """
    violations: list[str] = []
    extents = kernel.output_shape
    if len(schedule.tile_factors) != len(extents):
        violations.append("tile-axes-mismatch")
    total_slots = 0
    inner_product = 1
    for axis, factors in enumerate(schedule.tile_factors):
        total_slots += len(factors)
        prod = 1
        for f in factors:
            if f < 1:
                violations.append("bad-tile-factor")
                break
            prod *= f
        else:
            if axis < len(extents) and extents[axis] % prod != 0:
                violations.append("tile-divisibility")
            if factors:
                inner_product *= factors[-1]
    if total_slots > MAX_TILE_SLOTS:
        violations.append("tile-slots-exceeded")
    if schedule.unroll_factor < 1:
        violations.append("bad-unroll-factor")
    if schedule.vectorize_width < 1:
        violations.append("bad-vectorize-width")

    if hw.hardware_class == "CPU":
        if schedule.thread_binding is not None:
            violations.append("gpu-binding-on-cpu")
        if schedule.vectorize_width * 4 > hw.vector_unit_bytes:
            violations.append("vector-width")
    else:
        if schedule.thread_binding is not None:
            tx, ty = schedule.thread_binding
            if tx < 1 or ty < 1:
                violations.append("bad-thread-binding")
            elif tx * ty > (hw.max_threads_per_block or 0):
                violations.append("threads-per-block")
        if 4 * inner_product > (hw.max_shared_memory_per_block or 0):
            violations.append("shared-memory")
        if schedule.unroll_factor > (hw.max_vthread_extent or 0):
            violations.append("vthread-extent")
    return violations


def enumerate_space(space: ScheduleSpace, limit: int = 4096) -> list[ScheduleConfig]:
    """All valid points of a bounded space, in canonical domain order."""
    size = space.size()
    if size > limit:
        raise DataValidationError(
            f"space has {size} raw points, enumeration limit is {limit}"
        )
    domains = space.knob_domains()
    out = []
    for indices in itertools.product(*(range(len(d)) for d in domains)):
        cfg = space.config_from_indices(indices)
        if not validity_check(cfg, space.kernel, space.hw):
            out.append(cfg)
    return out


def sample_point(
    space: ScheduleSpace, rng: np.random.Generator, max_tries: int = 256
) -> ScheduleConfig | None:
    """One uniformly sampled valid point, or None when rejection fails."""
    domains = space.knob_domains()
    for _ in range(max_tries):
        indices = [int(rng.integers(len(d))) for d in domains]
        cfg = space.config_from_indices(indices)
        if not validity_check(cfg, space.kernel, space.hw):
            return cfg
    return None


@dataclass(frozen=True)
class SearchConfig:
    method: str = "anneal"
    steps: int = 512
    initial_temperature: float = 1.0
    cooling: float = 0.98
    population: int = 32
    generations: int = 16
    mutation_rate: float = 0.2
    top_k: int = 8
    seed: int = 0

    def validate(self) -> None:
        if self.method not in ("anneal", "evolve"):
            raise DataValidationError(f"unknown search method {self.method!r}")
        if self.steps < 1 or self.population < 1 or self.generations < 1:
            raise DataValidationError("search budget parameters must be positive")
        if not 0.0 < self.cooling <= 1.0:
            raise DataValidationError(f"cooling must be in (0, 1], got {self.cooling}")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise DataValidationError("mutation_rate must be in [0, 1]")
        if self.top_k < 1:
            raise DataValidationError("top_k must be >= 1")


@dataclass
class SearchResult:
    candidates: list[ScheduleConfig]
    scores: list[float]
    n_scored: int
    n_invalid_proposals: int


def _config_key(cfg: ScheduleConfig) -> tuple:
    return (cfg.tile_factors, cfg.unroll_factor, cfg.vectorize_width, cfg.thread_binding)


def _top_k(visited: dict[tuple, tuple[ScheduleConfig, float]], k: int) -> tuple[list, list]:
    ranked = sorted(visited.values(), key=lambda cs: (-cs[1], _config_key(cs[0])))
    top = ranked[:k]
    return [c for c, _ in top], [s for _, s in top]


def _initial_point(space: ScheduleSpace, rng: np.random.Generator) -> list[int]:
    domains = space.knob_domains()
    for _ in range(1024):
        indices = [int(rng.integers(len(d))) for d in domains]
        cfg = space.config_from_indices(indices)
        if not validity_check(cfg, space.kernel, space.hw):
            return indices
    # Dense fallback for heavily constrained spaces.
    for indices in itertools.product(*(range(len(d)) for d in domains)):
        cfg = space.config_from_indices(indices)
        if not validity_check(cfg, space.kernel, space.hw):
            return list(indices)
    raise DataValidationError("space contains no valid schedule")


def simulated_annealing(
    space: ScheduleSpace, scorer: Scorer, cfg: SearchConfig
) -> SearchResult:
    """Single-chain annealing over the knob grid.

    Proposals move one knob to an adjacent value in its domain ordering.
    Uphill moves are always taken; downhill moves are taken with probability
    exp(delta / (s * T)) under geometric cooling, where s is the running mean
    of |delta| over proposals so far. Normalizing by s makes the acceptance
    schedule invariant to the scorer's units, so the chain anneals the same
    way for scores of magnitude 1e-11 as for scores near 1. The best visited
    points are returned, not the final chain state.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    domains = space.knob_domains()
    mutable = [i for i, d in enumerate(domains) if len(d) > 1]

    current = _initial_point(space, rng)
    current_cfg = space.config_from_indices(current)
    current_score = float(scorer([current_cfg])[0])
    visited: dict[tuple, tuple[ScheduleConfig, float]] = {
        _config_key(current_cfg): (current_cfg, current_score)
    }
    n_scored = 1
    n_invalid = 0

    temperature = cfg.initial_temperature
    delta_scale = 0.0
    n_deltas = 0
    for _ in range(cfg.steps):
        if mutable:
            knob = mutable[int(rng.integers(len(mutable)))]
            index = current[knob]
            if index == 0:
                index = 1
            elif index == len(domains[knob]) - 1:
                index -= 1
            else:
                index += 1 if rng.random() < 0.5 else -1
            proposal = list(current)
            proposal[knob] = index
            prop_cfg = space.config_from_indices(proposal)
            if validity_check(prop_cfg, space.kernel, space.hw):
                n_invalid += 1
            else:
                key = _config_key(prop_cfg)
                if key in visited:
                    prop_score = visited[key][1]
                else:
                    prop_score = float(scorer([prop_cfg])[0])
                    visited[key] = (prop_cfg, prop_score)
                    n_scored += 1
                delta = prop_score - current_score
                n_deltas += 1
                delta_scale += (abs(delta) - delta_scale) / n_deltas
                scale = delta_scale if delta_scale > 0.0 else 1.0
                accept = delta / (scale * max(temperature, 1e-12))
                if delta > 0 or rng.random() < math.exp(max(accept, -700.0)):
                    current = proposal
                    current_score = prop_score
        temperature *= cfg.cooling

    candidates, scores = _top_k(visited, cfg.top_k)
    return SearchResult(candidates, scores, n_scored, n_invalid)


def evolutionary_search(
    space: ScheduleSpace, scorer: Scorer, cfg: SearchConfig
) -> SearchResult:
    """Tournament evolution with one-point crossover and per-knob mutation.

    Invalid offspring are re-mutated a bounded number of times and then
    discarded; elitism carries the best individual into every generation.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    domains = space.knob_domains()
    n_knobs = len(domains)

    population: list[list[int]] = []
    guard = 0
    while len(population) < cfg.population:
        point = _initial_point(space, rng)
        population.append(point)
        guard += 1
        if guard > cfg.population * 64:  # pragma: no cover - rejection guard
            raise DataValidationError("could not fill the initial population")

    visited: dict[tuple, tuple[ScheduleConfig, float]] = {}
    n_scored = 0
    n_invalid = 0

    def score_batch(points: list[list[int]]) -> list[float]:
        nonlocal n_scored
        configs = [space.config_from_indices(p) for p in points]
        fresh = [
            c for c in configs if _config_key(c) not in visited
        ]
        if fresh:
            seen: set[tuple] = set()
            unique = []
            for c in fresh:
                k = _config_key(c)
                if k not in seen:
                    seen.add(k)
                    unique.append(c)
            scores = scorer(unique)
            n_scored += len(unique)
            for c, s in zip(unique, scores):
                visited[_config_key(c)] = (c, float(s))
        return [visited[_config_key(c)][1] for c in configs]

    fitness = score_batch(population)

    def mutate(point: list[int]) -> list[int]:
        out = list(point)
        changed = False
        for i in range(n_knobs):
            if rng.random() < cfg.mutation_rate:
                out[i] = int(rng.integers(len(domains[i])))
                changed = True
        if not changed and n_knobs:
            i = int(rng.integers(n_knobs))
            out[i] = int(rng.integers(len(domains[i])))
        return out

    for _ in range(cfg.generations):
        best_i = int(np.argmax(fitness))
        next_pop: list[list[int]] = [list(population[best_i])]
        attempts = 0
        while len(next_pop) < cfg.population and attempts < cfg.population * 32:
            attempts += 1

            def tournament() -> list[int]:
                a, b = rng.integers(len(population)), rng.integers(len(population))
                return population[a] if fitness[a] >= fitness[b] else population[b]

            pa, pb = tournament(), tournament()
            point = pa
            if n_knobs > 1:
                cut = int(rng.integers(1, n_knobs))
                point = pa[:cut] + pb[cut:]
            child = mutate(point)
            ok = False
            for _ in range(8):
                if not validity_check(
                    space.config_from_indices(child), space.kernel, space.hw
                ):
                    ok = True
                    break
                n_invalid += 1
                child = mutate(point)
            if ok:
                next_pop.append(child)
        while len(next_pop) < cfg.population:
            next_pop.append(list(population[best_i]))
        population = next_pop
        fitness = score_batch(population)

    candidates, scores = _top_k(visited, cfg.top_k)
    return SearchResult(candidates, scores, n_scored, n_invalid)


def run_search(space: ScheduleSpace, scorer: Scorer, cfg: SearchConfig) -> SearchResult:
    if cfg.method == "anneal":
        return simulated_annealing(space, scorer, cfg)
    return evolutionary_search(space, scorer, cfg)


@dataclass
class TaskTuneEntry:
    task_id: str
    best_schedule: ScheduleConfig
    best_cost: float
    model_score: float
    oracle_calls: int


@dataclass
class TuneResult:
    entries: list[TaskTuneEntry]
    total_oracle_calls: int
    total_best_cost: float
    method: str
    top_k: int
    seed: int

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "top_k": self.top_k,
            "seed": self.seed,
            "total_oracle_calls": self.total_oracle_calls,
            "total_best_cost": self.total_best_cost,
            "tasks": [
                {
                    "task_id": e.task_id,
                    "best_schedule": e.best_schedule.to_json(),
                    "best_cost": e.best_cost,
                    "model_score": e.model_score,
                    "oracle_calls": e.oracle_calls,
                }
                for e in self.entries
            ],
        }


def _task_seed(base_seed: int, task_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}|{task_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def tune(
    ds: Dataset,
    task_ids: list[str],
    scorer_factory: Callable[[str], Scorer],
    oracle_fn: OracleFn,
    cfg: SearchConfig,
    jobs: int = 1,
    space_factory: Callable[[Kernel, HardwareParams], ScheduleSpace] | None = None,
) -> TuneResult:
    """Search each task's space, then measure the model's top_k on the oracle.

    Tasks run in priority order (operator occurrence times flop count,
    descending). Each task derives its own seed from (cfg.seed, task_id), so
    results are bit-identical for any jobs count.
    """
    cfg.validate()
    for tid in task_ids:
        if tid not in ds.task_by_id:
            raise DataValidationError(f"tune: unknown task {tid!r}")
    ordered = task_priority_order(ds, task_ids)
    make_space = space_factory or default_space

    def tune_one(tid: str) -> TaskTuneEntry:
        task = ds.task_by_id[tid]
        hw = ds.hardware_of(task)
        space = make_space(task.kernel, hw)
        result = run_search(
            space,
            scorer_factory(tid),
            replace(cfg, seed=_task_seed(cfg.seed, tid)),
        )
        best_cost = math.inf
        best_schedule = None
        best_score = 0.0
        calls = 0
        for candidate, score in zip(result.candidates, result.scores):
            bad = validity_check(candidate, task.kernel, hw)
            if bad:  # searches only emit valid points; fail loudly otherwise
                raise TensorTuneError(
                    f"search produced an invalid candidate for {tid}: {bad}"
                )
            cost = oracle_fn(task.kernel, candidate, hw)
            calls += 1
            if cost < best_cost:
                best_cost = cost
                best_schedule = candidate
                best_score = score
        if best_schedule is None:
            raise DataValidationError(f"tune: no valid candidate for task {tid!r}")
        return TaskTuneEntry(tid, best_schedule, best_cost, best_score, calls)

    if jobs <= 1:
        entries = [tune_one(tid) for tid in ordered]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(tune_one, ordered))

    return TuneResult(
        entries=entries,
        total_oracle_calls=sum(e.oracle_calls for e in entries),
        total_best_cost=float(sum(e.best_cost for e in entries)),
        method=cfg.method,
        top_k=cfg.top_k,
        seed=cfg.seed,
    )
