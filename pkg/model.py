"""
Scheduling Model Module

Data model for single-machine deadline scheduling with chain precedences:
jobs, instances, suffix chains and their families, schedules, fractional
points of the configuration and compact programs, and spiders for the
technology-diffusion reduction.

Layers are 1-based throughout. A suffix chain stores one start position per
layer; the suffix at layer i is every job of the path at a position >= starts[i-1],
so a start equal to the path length encodes the empty suffix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np


class PdlsError(Exception):
    """Base error for the scheduling toolkit"""
    pass


class InstanceValidationError(PdlsError, ValueError):
    """Instance invariant violation"""
    pass


class ScheduleError(PdlsError, ValueError):
    """Malformed schedule input"""
    pass


class DocumentError(PdlsError, ValueError):
    """Malformed JSON document"""
    pass


@dataclass(frozen=True)
class Job:
    """Job with processing time, penalty and deadline"""
    id: int
    p: int
    w: int
    d: int


@dataclass(frozen=True)
class Instance:
    """Jobs partitioned into ordered chains.

    ``reference_deadlines`` pins the layer list of a modified instance to the
    layers of the instance it was derived from; ``deadlines`` and
    ``deadline_index`` always describe the instance's own deadline values.
    """
    jobs: Tuple[Job, ...]
    chains: Tuple[Tuple[int, ...], ...]
    reference_deadlines: Optional[Tuple[int, ...]] = None

    gamma: int = field(init=False, compare=False)
    deadlines: Tuple[int, ...] = field(init=False, compare=False)
    deadline_index: Dict[int, int] = field(init=False, compare=False, repr=False)
    job_by_id: Dict[int, Job] = field(init=False, compare=False, repr=False)
    index_of: Dict[int, int] = field(init=False, compare=False, repr=False)
    path_of: Dict[int, int] = field(init=False, compare=False, repr=False)
    position_of: Dict[int, int] = field(init=False, compare=False, repr=False)
    suffix_p: Tuple[Tuple[int, ...], ...] = field(init=False, compare=False, repr=False)
    layer_of: Dict[int, Optional[int]] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        object.__setattr__(self, "chains", tuple(tuple(c) for c in self.chains))
        if self.reference_deadlines is not None:
            object.__setattr__(self, "reference_deadlines", tuple(self.reference_deadlines))
        self._validate()
        self._derive()

    def _validate(self) -> None:
        by_id: Dict[int, Job] = {}
        for job in self.jobs:
            if job.id in by_id:
                raise InstanceValidationError(f"duplicate job id {job.id}")
            if job.p < 0 or job.w < 0 or job.d < 0:
                raise InstanceValidationError(f"negative field on job {job.id}")
            by_id[job.id] = job

        seen = set()
        for chain in self.chains:
            if not chain:
                raise InstanceValidationError("empty chain")
            for job_id in chain:
                if job_id not in by_id:
                    raise InstanceValidationError(f"chain references unknown job {job_id}")
                if job_id in seen:
                    raise InstanceValidationError(f"overlapping chains at job {job_id}")
                seen.add(job_id)

        missing = [job_id for job_id in by_id if job_id not in seen]
        if missing:
            raise InstanceValidationError(f"uncovered job {missing[0]}")

        ref = self.reference_deadlines
        if ref is not None and any(a >= b for a, b in zip(ref, ref[1:])):
            raise InstanceValidationError("reference deadlines must be strictly increasing")

    def _derive(self) -> None:
        by_id = {job.id: job for job in self.jobs}
        deadlines = tuple(sorted({job.d for job in self.jobs}))
        layers = self.reference_deadlines if self.reference_deadlines is not None else deadlines
        layer_pos = {d: i + 1 for i, d in enumerate(layers)}

        path_of: Dict[int, int] = {}
        position_of: Dict[int, int] = {}
        suffix_p: List[Tuple[int, ...]] = []
        for path_index, chain in enumerate(self.chains):
            sums = [0] * (len(chain) + 1)
            for pos in range(len(chain) - 1, -1, -1):
                sums[pos] = sums[pos + 1] + by_id[chain[pos]].p
            suffix_p.append(tuple(sums))
            for pos, job_id in enumerate(chain):
                path_of[job_id] = path_index
                position_of[job_id] = pos

        object.__setattr__(self, "gamma", sum(job.p for job in self.jobs))
        object.__setattr__(self, "deadlines", deadlines)
        object.__setattr__(self, "deadline_index", {job.id: deadlines.index(job.d) + 1 for job in self.jobs})
        object.__setattr__(self, "job_by_id", by_id)
        object.__setattr__(self, "index_of", {job.id: idx for idx, job in enumerate(self.jobs)})
        object.__setattr__(self, "path_of", path_of)
        object.__setattr__(self, "position_of", position_of)
        object.__setattr__(self, "suffix_p", tuple(suffix_p))
        object.__setattr__(self, "layer_of", {job.id: layer_pos.get(job.d) for job in self.jobs})

    @property
    def n(self) -> int:
        return len(self.jobs)

    @property
    def q(self) -> int:
        return len(self.chains)

    @property
    def layer_deadlines(self) -> Tuple[int, ...]:
        """Deadline list D_1 < ... < D_k all layer-indexed quantities use"""
        return self.reference_deadlines if self.reference_deadlines is not None else self.deadlines

    @property
    def k(self) -> int:
        return len(self.layer_deadlines)

    def job(self, job_id: int) -> Job:
        return self.job_by_id[job_id]

    def path_length(self, path_index: int) -> int:
        return len(self.chains[path_index])


def validate(instance: Instance) -> Instance:
    """Re-check every Instance invariant and return the instance"""
    instance._validate()
    return instance


def make_instance(
    jobs: Iterable[Union[Job, Tuple[int, int, int, int]]],
    chains: Iterable[Sequence[int]],
) -> Instance:
    """Build an instance from Job objects or (id, p, w, d) tuples"""
    built = [job if isinstance(job, Job) else Job(*job) for job in jobs]
    return Instance(jobs=tuple(built), chains=tuple(tuple(c) for c in chains))


def interleaving_count(instance: Instance) -> int:
    """Number of schedules respecting the chains (multinomial coefficient)"""
    total = 0
    count = 1
    for chain in instance.chains:
        total += len(chain)
        count *= math.comb(total, len(chain))
    return count


def state_count(instance: Instance) -> int:
    """Number of suffix vectors over all chains"""
    return math.prod(len(chain) + 1 for chain in instance.chains)


@dataclass(frozen=True)
class SuffixChain:
    """Nested suffixes S_1 >= ... >= S_k of one path, stored as start positions"""
    path_index: int
    starts: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(int(s) for s in self.starts))
        if any(s < 0 for s in self.starts):
            raise ValueError("suffix start must be non-negative")
        if any(a > b for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError(f"suffix starts must be nondecreasing: {self.starts}")

    def contains(self, layer: int, position: int) -> bool:
        """Whether the job at ``position`` lies in the suffix of ``layer``"""
        return position >= self.starts[layer - 1]


@dataclass(frozen=True)
class SuffixChainFamily:
    """One suffix chain per path"""
    chains: Tuple[SuffixChain, ...]

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        for slot, chain in enumerate(self.chains):
            if chain.path_index != slot:
                raise ValueError(f"family slot {slot} holds chain of path {chain.path_index}")

    def __getitem__(self, path_index: int) -> SuffixChain:
        return self.chains[path_index]

    def __len__(self) -> int:
        return len(self.chains)

    def __iter__(self):
        return iter(self.chains)


def check_chain(instance: Instance, chain: SuffixChain) -> None:
    """Raise ValueError unless ``chain`` is a suffix chain of the instance"""
    if not 0 <= chain.path_index < instance.q:
        raise ValueError(f"unknown path {chain.path_index}")
    if len(chain.starts) != instance.k:
        raise ValueError(f"suffix chain has {len(chain.starts)} layers, instance has {instance.k}")
    if chain.starts and chain.starts[-1] > instance.path_length(chain.path_index):
        raise ValueError("suffix start beyond path end")


def family_from_starts(starts: Sequence[Sequence[int]]) -> SuffixChainFamily:
    return SuffixChainFamily(tuple(SuffixChain(p, tuple(s)) for p, s in enumerate(starts)))


def empty_family(instance: Instance) -> SuffixChainFamily:
    """Family deferring nothing at any layer"""
    return family_from_starts([[len(chain)] * instance.k for chain in instance.chains])


def full_family(instance: Instance) -> SuffixChainFamily:
    """Family deferring every job at every layer"""
    return family_from_starts([[0] * instance.k for _ in instance.chains])


def canonical_family(instance: Instance) -> SuffixChainFamily:
    """Per path and layer, the longest suffix whose jobs all have d_j > D_i"""
    starts = []
    for chain in instance.chains:
        path_starts = []
        for deadline in instance.layer_deadlines:
            start = len(chain)
            while start > 0 and instance.job(chain[start - 1]).d > deadline:
                start -= 1
            path_starts.append(start)
        starts.append(path_starts)
    return family_from_starts(starts)


def _check_layer(instance: Instance, layer: int) -> None:
    if not 1 <= layer <= instance.k:
        raise ValueError(f"layer {layer} out of range 1..{instance.k}")


def theta(instance: Instance, family: SuffixChainFamily, layer: int) -> int:
    """Processing demand that must still be deferred past D_i beyond the family"""
    _check_layer(instance, layer)
    deferred = sum(
        instance.suffix_p[chain.path_index][chain.starts[layer - 1]] for chain in family
    )
    return max(instance.gamma - instance.layer_deadlines[layer - 1] - deferred, 0)


def _capped_residual(instance: Instance, family: SuffixChainFamily, layer: int,
                     path_index: int, start: int) -> int:
    sums = instance.suffix_p[path_index]
    excluded = max(start, family[path_index].starts[layer - 1])
    return min(sums[start] - sums[excluded], theta(instance, family, layer))


def capped_coeff_job(instance: Instance, family: SuffixChainFamily, layer: int, job_id: int) -> int:
    """p^{i,F}_j: processing of the suffix from j outside F^P_i, capped at theta"""
    _check_layer(instance, layer)
    return _capped_residual(instance, family, layer, instance.path_of[job_id], instance.position_of[job_id])


def capped_coeff_suffix(instance: Instance, family: SuffixChainFamily, layer: int,
                        path_index: int, chain: SuffixChain) -> int:
    """p^{i,F}_S for the layer-i suffix of ``chain``"""
    _check_layer(instance, layer)
    return _capped_residual(instance, family, layer, path_index, chain.starts[layer - 1])


def chain_penalty(instance: Instance, path_index: int, chain: SuffixChain) -> int:
    """w_S: total penalty of jobs of the path lying in the suffix of their own layer"""
    total = 0
    for pos, job_id in enumerate(instance.chains[path_index]):
        layer = instance.layer_of[job_id]
        if layer is not None and pos >= chain.starts[layer - 1]:
            total += instance.job(job_id).w
    return total


def makes_late(instance: Instance, path_index: int, chain: SuffixChain,
               skip: FrozenSet[int] = frozenset()) -> bool:
    """Whether the chain defers some job outside ``skip`` past its own deadline"""
    for pos, job_id in enumerate(instance.chains[path_index]):
        if job_id in skip:
            continue
        layer = instance.layer_of[job_id]
        if layer is not None and pos >= chain.starts[layer - 1]:
            return True
    return False


class ChainOrder(str, Enum):
    PRECEDES = "precedes"  # S below S', every S_i contains S'_i
    FOLLOWS = "follows"
    EQUAL = "equal"
    CROSS = "cross"


def _check_comparable(a: SuffixChain, b: SuffixChain) -> None:
    if a.path_index != b.path_index:
        raise ValueError("suffix chains belong to different paths")
    if len(a.starts) != len(b.starts):
        raise ValueError("suffix chains have different layer counts")


def chain_order(a: SuffixChain, b: SuffixChain) -> ChainOrder:
    _check_comparable(a, b)
    if a.starts == b.starts:
        return ChainOrder.EQUAL
    if all(x <= y for x, y in zip(a.starts, b.starts)):
        return ChainOrder.PRECEDES
    if all(x >= y for x, y in zip(a.starts, b.starts)):
        return ChainOrder.FOLLOWS
    return ChainOrder.CROSS


def join(a: SuffixChain, b: SuffixChain) -> SuffixChain:
    """Levelwise union"""
    _check_comparable(a, b)
    return SuffixChain(a.path_index, tuple(min(x, y) for x, y in zip(a.starts, b.starts)))


def meet(a: SuffixChain, b: SuffixChain) -> SuffixChain:
    """Levelwise intersection"""
    _check_comparable(a, b)
    return SuffixChain(a.path_index, tuple(max(x, y) for x, y in zip(a.starts, b.starts)))


def is_cross_free(chains: Iterable[SuffixChain]) -> bool:
    items = list(chains)
    for idx, a in enumerate(items):
        for b in items[idx + 1:]:
            if chain_order(a, b) is ChainOrder.CROSS:
                return False
    return True


@dataclass(frozen=True)
class Schedule:
    """Gapless job order with derived completions, late set and penalty"""
    order: Tuple[int, ...]
    completions: Dict[int, int] = field(compare=False)
    late: FrozenSet[int]
    penalty: int


@dataclass(frozen=True)
class ScheduleEvaluation:
    feasible: bool
    penalty: int
    late: FrozenSet[int]
    completions: Dict[int, int] = field(compare=False)
    violation: Optional[str] = None


def evaluate_schedule(instance: Instance, order: Union[Schedule, Sequence[int]]) -> ScheduleEvaluation:
    """Completion times, late set and penalty of an order, plus chain feasibility"""
    if isinstance(order, Schedule):
        order = order.order
    order = tuple(order)
    if len(order) != instance.n or set(order) != set(instance.job_by_id):
        raise ScheduleError("order is not a permutation of the job ids")

    violation = None
    next_pos = [0] * instance.q
    for job_id in order:
        path_index = instance.path_of[job_id]
        if instance.position_of[job_id] != next_pos[path_index] and violation is None:
            violation = f"precedence violated at job {job_id}"
        next_pos[path_index] += 1

    completions: Dict[int, int] = {}
    late = set()
    elapsed = 0
    for job_id in order:
        job = instance.job(job_id)
        elapsed += job.p
        completions[job_id] = elapsed
        if elapsed > job.d:
            late.add(job_id)
    penalty = sum(instance.job(j).w for j in late)
    return ScheduleEvaluation(violation is None, penalty, frozenset(late), completions, violation)


def make_schedule(instance: Instance, order: Sequence[int]) -> Schedule:
    """Evaluate ``order`` and wrap it as a Schedule; infeasible orders are rejected"""
    result = evaluate_schedule(instance, order)
    if not result.feasible:
        raise ScheduleError(result.violation)
    return Schedule(tuple(order), result.completions, result.late, result.penalty)


def modify_instance(instance: Instance, late: Iterable[int]) -> Instance:
    """I[L]: deadlines of jobs in ``late`` raised to gamma, layers kept from ``instance``"""
    late = frozenset(late)
    unknown = late - set(instance.job_by_id)
    if unknown:
        raise ValueError(f"jobs not in instance: {sorted(unknown)}")
    if not late:
        return instance
    jobs = tuple(
        Job(job.id, job.p, job.w, instance.gamma) if job.id in late else job
        for job in instance.jobs
    )
    return Instance(jobs=jobs, chains=instance.chains, reference_deadlines=instance.layer_deadlines)


@dataclass(frozen=True)
class ConfigSolution:
    """Weighted suffix chains per path (configuration program variables)"""
    paths: Tuple[Dict[SuffixChain, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(dict(p) for p in self.paths))
        for weights in self.paths:
            for chain, weight in weights.items():
                if weight < 0:
                    raise ValueError(f"negative weight on {chain}")

    def path_mass(self, path_index: int):
        return sum(self.paths[path_index].values())

    def support(self, path_index: int) -> List[SuffixChain]:
        return [chain for chain, weight in self.paths[path_index].items() if weight > 0]

    def is_cross_free(self) -> bool:
        return all(is_cross_free(weights) for weights in self.paths)

    def u_values(self, instance: Instance) -> Dict[int, float]:
        """U_j: total weight of chains deferring j past its own layer"""
        values: Dict[int, float] = {}
        for path_index, chain_ids in enumerate(instance.chains):
            weights = self.paths[path_index]
            for pos, job_id in enumerate(chain_ids):
                layer = instance.layer_of[job_id]
                if layer is None:
                    values[job_id] = 0
                    continue
                values[job_id] = sum(w for s, w in weights.items() if pos >= s.starts[layer - 1])
        return values


def config_objective(instance: Instance, config: ConfigSolution):
    """Objective of a configuration point: sum of w_S x_S"""
    return sum(
        chain_penalty(instance, path_index, chain) * weight
        for path_index, weights in enumerate(config.paths)
        for chain, weight in weights.items()
    )


@dataclass(frozen=True, eq=False)
class CompactSolution:
    """Values x^i_j stored as a (k, n) array; column order follows ``instance.jobs``"""
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @classmethod
    def zeros(cls, instance: Instance) -> "CompactSolution":
        return cls(np.zeros((instance.k, instance.n)))

    @classmethod
    def from_mapping(cls, instance: Instance, entries: Mapping[Tuple[int, int], float]) -> "CompactSolution":
        """Build from {(layer, job_id): value}"""
        values = np.zeros((instance.k, instance.n))
        for (layer, job_id), value in entries.items():
            values[layer - 1, instance.index_of[job_id]] = value
        return cls(values)

    def value(self, instance: Instance, layer: int, job_id: int) -> float:
        return float(self.values[layer - 1, instance.index_of[job_id]])

    def cumulative(self, instance: Instance, path_index: int) -> np.ndarray:
        """(k, |P|) array of prefix sums along the path, per layer"""
        columns = [instance.index_of[j] for j in instance.chains[path_index]]
        return np.cumsum(self.values[:, columns], axis=1)

    def u_values(self, instance: Instance) -> Dict[int, float]:
        values: Dict[int, float] = {}
        for path_index, chain_ids in enumerate(instance.chains):
            cum = self.cumulative(instance, path_index)
            for pos, job_id in enumerate(chain_ids):
                layer = instance.layer_of[job_id]
                values[job_id] = 0.0 if layer is None else float(cum[layer - 1, pos])
        return values


def compact_objective(instance: Instance, point: CompactSolution) -> float:
    u = point.u_values(instance)
    return float(sum(instance.job(j).w * value for j, value in u.items()))


@dataclass(frozen=True)
class Spider:
    """Tree with one center; legs listed leaf first, ending next to the center"""
    center: int
    legs: Tuple[Tuple[int, ...], ...]
    thresholds: Dict[int, int] = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(tuple(leg) for leg in self.legs))
        object.__setattr__(self, "thresholds", dict(self.thresholds))
        vertices = [self.center] + [v for leg in self.legs for v in leg]
        if len(set(vertices)) != len(vertices):
            raise InstanceValidationError("spider legs must be vertex-disjoint and avoid the center")
        if any(not leg for leg in self.legs):
            raise InstanceValidationError("empty spider leg")
        if set(self.thresholds) != set(vertices):
            raise InstanceValidationError("every vertex needs exactly one threshold")
        n = len(vertices)
        for vertex, value in self.thresholds.items():
            if not 1 <= value <= n:
                raise InstanceValidationError(f"threshold of vertex {vertex} outside [1, {n}]")

    @property
    def n(self) -> int:
        return 1 + sum(len(leg) for leg in self.legs)

    def vertices(self) -> List[int]:
        return [self.center] + [v for leg in self.legs for v in leg]

    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.vertices())
        for leg in self.legs:
            nx.add_path(graph, list(leg) + [self.center])
        return graph


def td_spider_to_pdls(spider: Spider) -> Instance:
    """Unit jobs with d_v = n - theta(v) + 1; one chain per leg plus the center alone"""
    n = spider.n
    jobs = [Job(v, 1, 1, n - spider.thresholds[v] + 1) for leg in spider.legs for v in leg]
    jobs.append(Job(spider.center, 1, 1, n - spider.thresholds[spider.center] + 1))
    chains = [tuple(leg) for leg in spider.legs] + [(spider.center,)]
    return Instance(jobs=tuple(jobs), chains=tuple(chains))
