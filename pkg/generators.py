"""
Instance generators.

Random chain instances and in-forests for test corpora, the single-chain
integrality-gap construction with its fractional witness, the rounding
tightness construction with its witness and path partition, and random spiders.
Every generator is a pure function of its parameters.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from exact import ForestInstance
from lpcore import logk_eff
from model import ConfigSolution, Instance, Job, Spider, SuffixChain


class RandomSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(..., ge=1, description="Number of jobs")
    q: int = Field(..., ge=1, description="Number of chains")
    k: int = Field(..., ge=1, description="Number of distinct deadlines")
    p_max: int = Field(5, ge=1)
    w_max: int = Field(9, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_sizes(self):
        if self.q > self.n:
            raise ValueError("more chains than jobs")
        if self.k > self.n:
            raise ValueError("more deadlines than jobs")
        return self


class SpiderSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    leg_lengths: List[int] = Field(..., min_length=1)
    theta_min: int = Field(1, ge=1)
    theta_max: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_legs(self):
        if any(length < 1 for length in self.leg_lengths):
            raise ValueError("leg lengths must be positive")
        if self.theta_max is not None and self.theta_max < self.theta_min:
            raise ValueError("theta_max below theta_min")
        return self


def gen_random(spec: RandomSpec) -> Instance:
    """Random p, w and k distinct deadlines from [1, gamma]; jobs dealt round-robin to q chains"""
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n, spec.k
    p = rng.integers(1, spec.p_max + 1, size=n)
    w = rng.integers(0, spec.w_max + 1, size=n)
    gamma = int(p.sum())
    values = np.sort(rng.choice(np.arange(1, gamma + 1), size=k, replace=False))
    layer = rng.permutation(np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)]))
    jobs = tuple(Job(j + 1, int(p[j]), int(w[j]), int(values[layer[j]])) for j in range(n))

    dealt = rng.permutation(np.arange(1, n + 1))
    chains = tuple(tuple(int(j) for j in dealt[c::spec.q]) for c in range(spec.q))
    return Instance(jobs=jobs, chains=chains)


def gen_random_forest(n: int, deadline: int, p_max: int = 5, w_max: int = 9,
                      seed: int = 0, link_probability: float = 0.7) -> ForestInstance:
    """Random in-forest; each job's successor, if any, has a larger id"""
    rng = np.random.default_rng(seed)
    jobs = tuple(
        Job(j, int(rng.integers(1, p_max + 1)), int(rng.integers(0, w_max + 1)), deadline)
        for j in range(1, n + 1)
    )
    successor: Dict[int, Optional[int]] = {}
    for j in range(1, n + 1):
        if j < n and rng.random() < link_probability:
            successor[j] = int(rng.integers(j + 1, n + 1))
        else:
            successor[j] = None
    return ForestInstance(jobs, successor, deadline)


@dataclass(frozen=True)
class GapConstruction:
    instance: Instance
    witness: ConfigSolution
    weights: Tuple[Fraction, ...]


def gap_witness_weights(k: int) -> List[Fraction]:
    """1/2, then 1/(2l) - 1/(2(l+1)) for 1 <= l < k, then 1/(2k)"""
    weights = [Fraction(1, 2)]
    weights.extend(Fraction(1, 2 * l) - Fraction(1, 2 * (l + 1)) for l in range(1, k))
    weights.append(Fraction(1, 2 * k))
    return weights


def gen_gap(n: int) -> GapConstruction:
    """Single unit chain with d_j = j (odd j) or j - 1 (even j) and its fractional witness"""
    if n < 4 or n % 2:
        raise ValueError("gap construction needs an even n >= 4")
    k = n // 2
    jobs = tuple(Job(j, 1, 1, j if j % 2 else j - 1) for j in range(1, n + 1))
    instance = Instance(jobs=jobs, chains=(tuple(range(1, n + 1)),))

    weights = gap_witness_weights(k)
    support: Dict[SuffixChain, Fraction] = {}
    for level, weight in enumerate(weights):
        starts = tuple(0 if i <= level else 2 * i for i in range(1, k + 1))
        support[SuffixChain(0, starts)] = weight
    return GapConstruction(instance, ConfigSolution((support,)), tuple(weights))


@dataclass(frozen=True)
class TightConstruction:
    instance: Instance
    witness: ConfigSolution
    partition: Tuple[Tuple[int, ...], ...]
    group_size: int
    extra_weight: float


def gen_tight(k: int, gamma: float) -> TightConstruction:
    """Identical unit paths of length k split into k groups of m = ceil(2 gamma logk_eff) paths.

    The job at position l of every path has deadline l*n/k - 1. The witness puts
    weight 1 - 1/(2 gamma logk_eff) on the canonical chain and the rest on a chain
    deferring one more job at the layer of the path's group.
    """
    if k < 2:
        raise ValueError("tightness construction needs k >= 2")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    scale = 2 * gamma * logk_eff(k)
    if scale < 1:
        raise ValueError("2 * gamma * logk_eff(k) must be at least 1")
    m = math.ceil(scale)
    n = k * k * m
    paths = n // k
    jobs = []
    chains = []
    for r in range(paths):
        chain = []
        for pos in range(1, k + 1):
            job_id = r * k + pos
            jobs.append(Job(job_id, 1, 1, pos * (n // k) - 1))
            chain.append(job_id)
        chains.append(tuple(chain))
    instance = Instance(jobs=tuple(jobs), chains=tuple(chains))

    partition = tuple(tuple(range(g * m, (g + 1) * m)) for g in range(k))
    extra = 1.0 / scale
    canonical_starts = tuple(range(1, k + 1))
    support = []
    for g, group in enumerate(partition):
        modified_starts = canonical_starts[:g] + (g,) + canonical_starts[g + 1:]
        for r in group:
            support.append({
                SuffixChain(r, canonical_starts): 1.0 - extra,
                SuffixChain(r, modified_starts): extra,
            })
    return TightConstruction(instance, ConfigSolution(tuple(support)), partition, m, extra)


def gen_td_spider(spec: SpiderSpec) -> Spider:
    """Center 0; vertices numbered outward leg by leg, legs stored leaf first"""
    rng = np.random.default_rng(spec.seed)
    n = 1 + sum(spec.leg_lengths)
    legs = []
    next_id = 1
    for length in spec.leg_lengths:
        outward = list(range(next_id, next_id + length))
        next_id += length
        legs.append(tuple(reversed(outward)))
    low = min(spec.theta_min, n)
    high = min(spec.theta_max or n, n)
    thresholds = {v: int(rng.integers(low, high + 1)) for v in range(n)}
    return Spider(center=0, legs=tuple(legs), thresholds=thresholds)
