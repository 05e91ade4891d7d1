"""Iterated local search over pipe-type assignments.

The search keeps a single feasible incumbent and repeats: a greedy
randomized descent that shrinks pipe types (by the current reduction
factor, halved down to 1 over the first iterations), an acceptance step
backed by a small pool of solutions, and one of two feasibility-preserving
perturbations. The dispersed perturbation bumps a random pipe subset one
type up, backing off geometrically until a feasible move is found; the
concentrated one focuses the bumps around an expensive pipe using BFS
distance levels.

Every stochastic choice draws from one seeded ``random.Random`` stream in
a fixed call order, so a (instance, params, seed) triple replays exactly.
"""

from __future__ import annotations

import itertools
import random
import threading
import time
from dataclasses import dataclass, field

from .graphs import bfs_levels, path_list, shortest_path_tree
from .hydraulics import HydraulicSolver, SimulationCounter, SolverConfig
from .model import (
    ContractViolation,
    InstanceError,
    Network,
    PipeTypeCatalog,
    Solution,
    solution_cost,
    uniform_solution,
)


class InfeasibleInstanceError(InstanceError):
    """No feasible design exists within the catalog."""


VARIANTS = ("full", "base", "redu-only", "pool-only", "pert-only", "spt-only")


@dataclass(frozen=True)
class VariantFlags:
    reduction: bool
    pool: bool
    perturbations: bool
    spt: bool


def variant_flags(variant: str) -> VariantFlags:
    if variant not in VARIANTS:
        raise ContractViolation(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return VariantFlags(
        reduction=variant in ("full", "redu-only"),
        pool=variant in ("full", "pool-only"),
        perturbations=variant in ("full", "pert-only"),
        spt=variant in ("full", "spt-only"),
    )


@dataclass
class SearchParams:
    alpha: float = 0.05
    f0: int = 4
    nu: int = 3
    time_limit_s: float = 60.0
    seed: int = 0
    variant: str = "full"
    h_min: float = 20.0
    v_max: float = 2.0
    pert_prob: float | None = None  # chance of the dispersed move; default 1 - alpha
    max_iterations: int | None = None  # optional deterministic stop
    target_cost: float | None = None  # optional early stop once matched
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractViolation("alpha must lie in [0, 1]")
        if self.f0 < 1:
            raise ContractViolation("reduction factor must be at least 1")
        if self.nu < 1:
            raise ContractViolation("pool size must be at least 1")
        variant_flags(self.variant)


@dataclass
class SearchStats:
    iterations: int = 0
    simulator_calls: int = 0
    tested_solutions: int = 0
    feasible_tested: int = 0
    time_to_best_s: float = 0.0
    best_cost_trace: list[tuple[float, float]] = field(default_factory=list)
    factor_trace: list[int] = field(default_factory=list)

    @property
    def feasible_fraction(self) -> float:
        return self.feasible_tested / self.tested_solutions if self.tested_solutions else 0.0


class FeasibilityChecker:
    """Validation front end that accumulates the run's simulator accounting."""

    def __init__(self, net: Network, catalog: PipeTypeCatalog,
                 cfg: SolverConfig | None = None,
                 h_min: float = 20.0, v_max: float = 2.0) -> None:
        self.solver = HydraulicSolver(net, catalog, cfg)
        self.h_min = h_min
        self.v_max = v_max
        self.counter = SimulationCounter()
        self._lock = threading.Lock()
        self.tested = 0
        self.feasible = 0

    def __call__(self, solution: Solution) -> bool:
        verdict = self.solver.validate(solution, self.h_min, self.v_max, self.counter)
        with self._lock:
            self.tested += 1
            self.feasible += int(verdict.feasible)
        return verdict.feasible

    @property
    def sim_calls(self) -> int:
        return self.counter.value


@dataclass
class PoolEntry:
    solution: Solution
    cost: float
    seq: int


class Pool:
    """Fixed-size solution memory; the worst slot is the dearest one, ties
    resolved toward the oldest entry."""

    def __init__(self, entries: list[tuple[Solution, float]]) -> None:
        if not entries:
            raise ContractViolation("pool needs at least one slot")
        self._seq = itertools.count()
        self.slots = [PoolEntry(sol.copy(), cost, next(self._seq)) for sol, cost in entries]

    def __len__(self) -> int:
        return len(self.slots)

    def worst_index(self) -> int:
        worst = 0
        for i, entry in enumerate(self.slots[1:], start=1):
            best_so_far = self.slots[worst]
            if entry.cost > best_so_far.cost or (
                entry.cost == best_so_far.cost and entry.seq < best_so_far.seq
            ):
                worst = i
        return worst

    def replace_worst(self, solution: Solution, cost: float) -> None:
        self.slots[self.worst_index()] = PoolEntry(solution.copy(), cost, next(self._seq))

    def overwrite_all(self, solution: Solution, cost: float) -> None:
        self.slots = [PoolEntry(solution.copy(), cost, next(self._seq))
                      for _ in self.slots]

    def members(self) -> list[Solution]:
        return [entry.solution for entry in self.slots]


def initial_solution(net: Network, catalog: PipeTypeCatalog, is_feasible) -> Solution:
    """Cheapest feasible uniform design: sweep types from largest diameter
    down, keep the last feasible one, stop at the first failure."""
    kept: Solution | None = None
    for t in range(len(catalog), 0, -1):
        candidate = uniform_solution(net, t)
        if is_feasible(candidate):
            kept = candidate
        elif t != len(catalog):
            return kept
        else:
            raise InfeasibleInstanceError(
                "no feasible solution exists using the same type for all pipes"
            )
    return kept


def local_search(net: Network, catalog: PipeTypeCatalog, solution: Solution,
                 alpha: float, factor: int, path_set: frozenset[str],
                 is_feasible, rng: random.Random) -> Solution:
    """Greedy randomized descent: repeatedly pick a pipe from the longest
    slice of the untried ones and cut its type by ``factor``.

    Pipes whose reduction failed go tabu for the rest of this call. Pipes
    in ``path_set`` (reservoir-to-heavy-demand paths) are only picked when
    the candidate list holds nothing else, which postpones their reduction.
    """
    tabu: set[str] = set()
    current = solution
    lengths = {p.id: p.length_m for p in net.sorted_pipes}
    improve = True
    while improve:
        improve = False
        remaining = [p.id for p in net.sorted_pipes if p.id not in tabu]
        while remaining:
            l_max = max(lengths[pid] for pid in remaining)
            l_min = min(lengths[pid] for pid in remaining)
            threshold = l_max - alpha * (l_max - l_min)
            rcl = [pid for pid in remaining if lengths[pid] >= threshold]
            unprotected = [pid for pid in rcl if pid not in path_set]
            pick_from = unprotected if unprotected else rcl
            chosen = pick_from[rng.randrange(len(pick_from))]
            if current.type_of(chosen) > factor:
                candidate = current.with_type(chosen, current.type_of(chosen) - factor)
                if is_feasible(candidate):
                    current = candidate
                    improve = True
                else:
                    tabu.add(chosen)
            remaining.remove(chosen)
    return current


def _bump(solution: Solution, pipe_ids, catalog_size: int) -> Solution:
    new = dict(solution.assignment)
    for pid in pipe_ids:
        new[pid] = min(new[pid] + 1, catalog_size)
    return Solution(new)


def dispersed_perturbation(net: Network, catalog: PipeTypeCatalog, solution: Solution,
                           alpha: float, is_feasible, rng: random.Random) -> Solution:
    """Bump a random subset of about alpha * |E| pipes one type up, halving
    the subset size until some bumped design validates."""
    m = int(alpha * len(net.pipes))
    while m > 0:
        remaining = [p.id for p in net.sorted_pipes]
        while remaining:
            chosen = rng.sample(remaining, min(m, len(remaining)))
            candidate = _bump(solution, chosen, len(catalog))
            if is_feasible(candidate):
                return candidate
            remaining.remove(chosen[rng.randrange(len(chosen))])
        m //= 2
    return solution


def selection_criterion(pipe_ids: list[str], levels: dict[str, int], m: int,
                        rng: random.Random) -> list[str]:
    """Pick exactly min(m, |pipe_ids|) pipes, sweeping distance levels from
    the innermost outward.

    Within a level each still-unevaluated pipe is taken with probability
    (selections left) / (pipes left in the level), which makes every
    equally sized subset of a level equally likely and forces selection
    once the two counts meet.
    """
    if not pipe_ids:
        raise ContractViolation("selection over an empty pipe set")
    r1 = min(m, len(pipe_ids))
    chosen: list[str] = []
    for level in sorted({levels[pid] for pid in pipe_ids}):
        bucket = sorted(pid for pid in pipe_ids if levels[pid] == level)
        r2 = len(bucket)
        for pid in bucket:
            if r1 <= 0:
                return chosen
            if rng.random() < r1 / r2:
                chosen.append(pid)
                r1 -= 1
            r2 -= 1
    return chosen


def expensive_pipe_candidates(net: Network, catalog: PipeTypeCatalog,
                              solution: Solution, alpha: float) -> list[str]:
    """Pipes whose installed cost (unit cost of the assigned type times
    length) falls in the top alpha slice, widened so that at least the
    five dearest pipes always qualify. Returned in pipe-id order."""
    pipes = net.sorted_pipes
    cost_of = {
        p.id: catalog.get(solution.type_of(p.id)).unit_cost * p.length_m for p in pipes
    }
    if len(pipes) <= 5:
        return [p.id for p in pipes]
    psi_max = max(cost_of.values())
    psi_min = min(cost_of.values())
    threshold = psi_max - alpha * (psi_max - psi_min)
    by_cost = sorted(pipes, key=lambda p: (-cost_of[p.id], p.id))
    cutoff = min(threshold, cost_of[by_cost[4].id])
    return [p.id for p in pipes if cost_of[p.id] >= cutoff]


def concentrated_perturbation(net: Network, catalog: PipeTypeCatalog, solution: Solution,
                              alpha: float, is_feasible, rng: random.Random) -> Solution:
    """Bump pipes near one of the most expensive pipes, preferring low BFS
    distance levels around it, with the same geometric back-off as the
    dispersed move."""
    pipes = net.sorted_pipes
    rcl = expensive_pipe_candidates(net, catalog, solution, alpha)
    seed_pipe = net.pipe(rcl[rng.randrange(len(rcl))])
    levels = bfs_levels(net, (seed_pipe.node1, seed_pipe.node2))

    m = int(alpha * len(pipes))
    while m > 0:
        remaining = [p.id for p in pipes if p.id != seed_pipe.id]
        while remaining:
            chosen = selection_criterion(remaining, levels, m, rng)
            candidate = _bump(solution, chosen, len(catalog))
            if is_feasible(candidate):
                return candidate
            remaining.remove(chosen[rng.randrange(len(chosen))])
        m //= 2
    return solution


def acceptance_criterion(best: Solution, cand: Solution, cur: Solution, pool: Pool,
                         rng: random.Random, cost) -> tuple[Solution, Solution]:
    """Decide the next incumbent; returns (next current, best).

    A candidate cheaper than the incumbent is adopted: it either becomes
    the new best or displaces the pool's worst slot. Otherwise the next
    incumbent is drawn uniformly from the pool plus the best solution.
    """
    z_cand, z_cur, z_best = cost(cand), cost(cur), cost(best)
    if z_cand < z_cur:
        if z_cand < z_best:
            best = cand
        else:
            pool.replace_worst(cand, z_cand)
        return cand, best
    choices = pool.members() + [best]
    return choices[rng.randrange(len(choices))], best


def run(net: Network, catalog: PipeTypeCatalog,
        params: SearchParams | None = None) -> tuple[Solution, SearchStats]:
    """Full search: initial uniform design, then timed local search,
    acceptance and perturbation rounds. Returns the best design found."""
    params = params or SearchParams()
    flags = variant_flags(params.variant)
    rng = random.Random(params.seed)
    checker = FeasibilityChecker(net, catalog, params.solver, params.h_min, params.v_max)
    stats = SearchStats()

    def cost(sol: Solution) -> float:
        return solution_cost(sol, net, catalog)

    start = time.perf_counter()
    init = initial_solution(net, catalog, checker)
    best = cur = init
    best_cost = cost(init)
    stats.best_cost_trace.append((time.perf_counter() - start, best_cost))

    nu = params.nu if flags.pool else 1
    pool = Pool([(init, best_cost)] * nu)
    path_set = (
        path_list(net, shortest_path_tree(net), params.alpha)
        if flags.spt else frozenset()
    )
    factor = params.f0 if flags.reduction else 1
    dispersed_prob = params.pert_prob if params.pert_prob is not None else 1.0 - params.alpha

    while True:
        elapsed = time.perf_counter() - start
        if elapsed >= params.time_limit_s:
            break
        if params.max_iterations is not None and stats.iterations >= params.max_iterations:
            break
        if params.target_cost is not None and best_cost <= params.target_cost + 1e-9:
            break

        stats.factor_trace.append(factor)
        cand = local_search(net, catalog, cur, params.alpha, factor, path_set,
                            checker, rng)
        if factor > 1:
            factor //= 2
        cur, best = acceptance_criterion(best, cand, cur, pool, rng, cost)
        new_best_cost = cost(best)
        if new_best_cost < best_cost:
            best_cost = new_best_cost
            stats.time_to_best_s = time.perf_counter() - start
            stats.best_cost_trace.append((stats.time_to_best_s, best_cost))
        if not flags.pool:
            pool.overwrite_all(best, best_cost)

        if flags.perturbations:
            if rng.random() <= dispersed_prob:
                cur = dispersed_perturbation(net, catalog, cur, params.alpha, checker, rng)
            else:
                cur = concentrated_perturbation(net, catalog, cur, params.alpha,
                                                checker, rng)
        else:
            cur = dispersed_perturbation(net, catalog, cur, params.alpha, checker, rng)
        stats.iterations += 1

    stats.simulator_calls = checker.sim_calls
    stats.tested_solutions = checker.tested
    stats.feasible_tested = checker.feasible
    return best, stats


def brute_force_optimum(net: Network, catalog: PipeTypeCatalog, is_feasible,
                        limit: int = 1_000_000) -> tuple[Solution, float]:
    """Exhaustive reference optimum for desk-scale fixtures.

    Enumerates every assignment in lexicographic type order, skipping any
    at least as expensive as the incumbent before validating, which keeps
    the result exact and the tie-break (first found) deterministic.
    """
    n_types = len(catalog)
    pipes = net.sorted_pipes
    space = n_types ** len(pipes)
    if space > limit:
        raise ContractViolation(
            f"search space of {space} assignments exceeds the limit of {limit}"
        )
    pipe_ids = [p.id for p in pipes]
    cost_table = [
        [catalog.get(t).unit_cost * p.length_m for t in range(1, n_types + 1)]
        for p in pipes
    ]
    best: Solution | None = None
    best_cost = float("inf")
    for combo in itertools.product(range(1, n_types + 1), repeat=len(pipes)):
        total = sum(cost_table[i][t - 1] for i, t in enumerate(combo))
        if total >= best_cost:
            continue
        candidate = Solution(dict(zip(pipe_ids, combo)))
        if is_feasible(candidate):
            best = candidate
            best_cost = total
    if best is None:
        raise InfeasibleInstanceError("no feasible assignment exists for this instance")
    return best, best_cost
