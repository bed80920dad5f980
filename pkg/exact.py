"""
Exact solvers.

Dynamic program over suffix vectors for a fixed number of chains, the
single-common-deadline in-forest dynamic program, and two brute-force
oracles (chain interleavings, and technology diffusion on spiders).
"""

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from model import (
    Instance,
    InstanceValidationError,
    Job,
    PdlsError,
    Schedule,
    Spider,
    evaluate_schedule,
    interleaving_count,
    make_schedule,
    state_count,
)
from solver_config import SolverSettings, get_settings

logger = logging.getLogger(__name__)


class CapExceededError(PdlsError):
    """Problem size exceeds a configured cap"""
    pass


@dataclass(frozen=True)
class ExactResult:
    """Optimal penalty and a schedule achieving it"""
    opt_penalty: int
    schedule: Schedule
    method: str


@dataclass(frozen=True)
class SingleDeadlineResult:
    opt_penalty: int
    on_time_set: FrozenSet[int]


@dataclass(frozen=True)
class TdResult:
    opt_seed_size: int
    permutation: Tuple[int, ...]


def dp_fixed_chains(instance: Instance, settings: Optional[SolverSettings] = None) -> ExactResult:
    """Minimum penalty by memoization over suffix vectors.

    A state is the vector of scheduled-job counts per chain; the elapsed time is
    a function of that vector and is never part of the key.
    """
    settings = settings or get_settings()
    states = state_count(instance)
    cap = settings.exact.dp_state_cap
    if states > cap:
        raise CapExceededError(f"{states} suffix vectors exceed the cap of {cap}")
    logger.debug("dp_fixed_chains: %d chains, %d states", instance.q, states)

    chains = instance.chains
    lengths = tuple(len(c) for c in chains)
    elapsed = [[sums[0] - sums[s] for s in range(len(sums))] for sums in instance.suffix_p]
    jobs = [[instance.job(j) for j in chain] for chain in chains]

    def time_of(vector: Tuple[int, ...]) -> int:
        return sum(elapsed[p][s] for p, s in enumerate(vector))

    def step_cost(job: Job, t: int) -> int:
        return job.w if t + job.p > job.d else 0

    opt: Dict[Tuple[int, ...], int] = {}
    # Lexicographically descending order visits every successor state first.
    for vector in product(*(range(length, -1, -1) for length in lengths)):
        if vector == lengths:
            opt[vector] = 0
            continue
        t = time_of(vector)
        best = None
        for p, s in enumerate(vector):
            if s == lengths[p]:
                continue
            nxt = vector[:p] + (s + 1,) + vector[p + 1:]
            value = step_cost(jobs[p][s], t) + opt[nxt]
            if best is None or value < best:
                best = value
        opt[vector] = best

    vector = tuple(0 for _ in lengths)
    t = 0
    order: List[int] = []
    while vector != lengths:
        assert t == time_of(vector), "elapsed time must follow from the suffix vector"
        for p, s in enumerate(vector):
            if s == lengths[p]:
                continue
            nxt = vector[:p] + (s + 1,) + vector[p + 1:]
            job = jobs[p][s]
            if step_cost(job, t) + opt[nxt] == opt[vector]:
                order.append(job.id)
                t += job.p
                vector = nxt
                break

    best = opt[tuple(0 for _ in lengths)]
    schedule = make_schedule(instance, order)
    assert schedule.penalty == best
    return ExactResult(best, schedule, "exact-dp")


@dataclass(frozen=True)
class ForestInstance:
    """Jobs whose successor relation is an in-forest, all sharing one deadline"""
    jobs: Tuple[Job, ...]
    successor: Dict[int, Optional[int]] = field(compare=False)
    deadline: int

    preorder: Tuple[int, ...] = field(init=False, compare=False, repr=False)
    next_index: Tuple[int, ...] = field(init=False, compare=False, repr=False)
    subtree_w: Tuple[int, ...] = field(init=False, compare=False, repr=False)
    subtree_p: Tuple[int, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        by_id = {job.id: job for job in self.jobs}
        if len(by_id) != len(self.jobs):
            raise InstanceValidationError("duplicate job id")
        if self.deadline < 0:
            raise InstanceValidationError("negative deadline")
        successor = {job.id: self.successor.get(job.id) for job in self.jobs}
        for job in self.jobs:
            if job.d != self.deadline:
                raise InstanceValidationError(f"job {job.id} deadline differs from the common deadline")
            if job.p < 0 or job.w < 0:
                raise InstanceValidationError(f"negative field on job {job.id}")
            nxt = successor[job.id]
            if nxt is not None and nxt not in by_id:
                raise InstanceValidationError(f"successor {nxt} of job {job.id} is unknown")
        object.__setattr__(self, "successor", successor)

        predecessors: Dict[int, List[int]] = {job.id: [] for job in self.jobs}
        roots = []
        for job in self.jobs:
            nxt = successor[job.id]
            if nxt is None:
                roots.append(job.id)
            else:
                predecessors[nxt].append(job.id)

        preorder: List[int] = []
        stack = list(reversed(roots))
        while stack:
            job_id = stack.pop()
            preorder.append(job_id)
            stack.extend(reversed(predecessors[job_id]))
        if len(preorder) != len(self.jobs):
            raise InstanceValidationError("successor relation contains a cycle")

        n = len(preorder)
        position = {job_id: idx for idx, job_id in enumerate(preorder)}
        next_index = [0] * n
        subtree_w = [0] * n
        subtree_p = [0] * n
        for idx in range(n - 1, -1, -1):
            job = by_id[preorder[idx]]
            end = idx + 1
            w_total, p_total = job.w, job.p
            for pred in predecessors[job.id]:
                child = position[pred]
                end = max(end, next_index[child])
                w_total += subtree_w[child]
                p_total += subtree_p[child]
            next_index[idx] = end
            subtree_w[idx] = w_total
            subtree_p[idx] = p_total

        object.__setattr__(self, "preorder", tuple(preorder))
        object.__setattr__(self, "next_index", tuple(next_index))
        object.__setattr__(self, "subtree_w", tuple(subtree_w))
        object.__setattr__(self, "subtree_p", tuple(subtree_p))

    def job(self, job_id: int) -> Job:
        return next(job for job in self.jobs if job.id == job_id)


def forest_from_chains(instance: Instance) -> ForestInstance:
    """Chains with a single common deadline, as an in-forest"""
    if len(instance.deadlines) != 1:
        raise InstanceValidationError("single-deadline solver needs exactly one distinct deadline")
    successor: Dict[int, Optional[int]] = {}
    for chain in instance.chains:
        for pos, job_id in enumerate(chain):
            successor[job_id] = chain[pos + 1] if pos + 1 < len(chain) else None
    return ForestInstance(instance.jobs, successor, instance.deadlines[0])


def dp_single_deadline(forest: ForestInstance) -> SingleDeadlineResult:
    """OPT(j,t) = min(OPT(next(j), t - P(j)), w_j + OPT(j+1, t)) over pre-order indices"""
    n = len(forest.preorder)
    capacity = min(forest.deadline, sum(job.p for job in forest.jobs))
    weights = {job.id: job.w for job in forest.jobs}
    infinity = sum(weights.values()) + 1

    opt = np.zeros((n + 1, capacity + 1), dtype=np.int64)
    for idx in range(n - 1, -1, -1):
        size = forest.subtree_p[idx]
        take = np.full(capacity + 1, infinity, dtype=np.int64)
        if size <= capacity:
            take[size:] = opt[forest.next_index[idx], : capacity + 1 - size]
        skip = weights[forest.preorder[idx]] + opt[idx + 1]
        opt[idx] = np.minimum(take, skip)

    on_time: List[int] = []
    idx, t = 0, capacity
    while idx < n:
        size = forest.subtree_p[idx]
        nxt = forest.next_index[idx]
        if size <= t and opt[nxt, t - size] == opt[idx, t]:
            on_time.extend(forest.preorder[idx:nxt])
            t -= size
            idx = nxt
        else:
            idx += 1

    best = int(opt[0, capacity])
    logger.debug("dp_single_deadline: n=%d capacity=%d opt=%d", n, capacity, best)
    return SingleDeadlineResult(best, frozenset(on_time))


def schedule_single_deadline(instance: Instance) -> ExactResult:
    """Single-deadline optimum as a full schedule: on-time prefixes first, then the rest"""
    result = dp_single_deadline(forest_from_chains(instance))
    first = [j for chain in instance.chains for j in chain if j in result.on_time_set]
    rest = [j for chain in instance.chains for j in chain if j not in result.on_time_set]
    schedule = make_schedule(instance, first + rest)
    assert schedule.penalty <= result.opt_penalty
    return ExactResult(schedule.penalty, schedule, "single-deadline")


def _interleavings(chains: Sequence[Sequence[int]]) -> Iterator[Tuple[int, ...]]:
    total = sum(len(c) for c in chains)
    pos = [0] * len(chains)
    order: List[int] = []

    def extend() -> Iterator[Tuple[int, ...]]:
        if len(order) == total:
            yield tuple(order)
            return
        for p, chain in enumerate(chains):
            if pos[p] < len(chain):
                order.append(chain[pos[p]])
                pos[p] += 1
                yield from extend()
                pos[p] -= 1
                order.pop()

    yield from extend()


def brute_force_schedule(instance: Instance, settings: Optional[SolverSettings] = None) -> ExactResult:
    """Exhaustive enumeration of every chain interleaving"""
    settings = settings or get_settings()
    count = interleaving_count(instance)
    cap = settings.exact.brute_force_cap
    if count > cap:
        raise CapExceededError(f"{count} interleavings exceed the cap of {cap}")

    best_order = None
    best_penalty = None
    for order in _interleavings(instance.chains):
        penalty = evaluate_schedule(instance, order).penalty
        if best_penalty is None or penalty < best_penalty:
            best_order, best_penalty = order, penalty
    return ExactResult(best_penalty, make_schedule(instance, best_order), "exact-bf")


def brute_force_td_spider(spider: Spider, connectivity: str = "hub",
                          settings: Optional[SolverSettings] = None) -> TdResult:
    """Minimum seed set over activation orders of a spider.

    A vertex at 1-based position i of the order needs seeding iff i < theta(v).
    With ``connectivity="strict"`` every prefix of the order must induce a
    connected subgraph. With ``"hub"`` every prefix together with the center
    must do so; this is the rule under which the chain reduction is exact.
    """
    if connectivity not in ("hub", "strict"):
        raise ValueError(f"unknown connectivity rule {connectivity!r}")
    settings = settings or get_settings()
    cap = settings.exact.td_spider_max_vertices
    if spider.n > cap:
        raise CapExceededError(f"spider has {spider.n} vertices, cap is {cap}")

    graph = spider.graph()
    neighbors = {v: set(graph.neighbors(v)) for v in graph.nodes}
    center = spider.center
    n = spider.n
    best: List = [n + 1, ()]
    order: List[int] = []
    active = set()

    def can_activate(v: int) -> bool:
        if connectivity == "hub":
            return v == center or center in neighbors[v] or bool(neighbors[v] & active)
        return not active or bool(neighbors[v] & active)

    def search(seeds: int) -> None:
        if seeds >= best[0]:
            return
        if len(order) == n:
            best[0], best[1] = seeds, tuple(order)
            return
        position = len(order) + 1
        for v in graph.nodes:
            if v in active or not can_activate(v):
                continue
            order.append(v)
            active.add(v)
            search(seeds + (1 if position < spider.thresholds[v] else 0))
            active.discard(v)
            order.pop()

    search(0)
    return TdResult(best[0], best[1])
