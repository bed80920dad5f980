"""
Approximation pipelines.

Moves between compact points and cross-free configuration points, filters and
boosts the configuration point, rounds it (independently per path, or with
one shared uniform draw for two paths), and turns every sampled family into a
feasible schedule with the layer-by-layer greedy rule.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from exact import dp_fixed_chains, schedule_single_deadline
from lpcore import cutting_plane_solve, logk_eff, select_late_jobs
from model import (
    ChainOrder,
    CompactSolution,
    ConfigSolution,
    Instance,
    PdlsError,
    Schedule,
    SuffixChain,
    SuffixChainFamily,
    capped_coeff_suffix,
    canonical_family,
    chain_order,
    evaluate_schedule,
    interleaving_count,
    join,
    make_schedule,
    makes_late,
    modify_instance,
    state_count,
    theta,
)
from solver_config import SolverSettings, get_settings

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.PCG64"
LOG_CONVENTION = "max(ln k, 1)"


class RoundingError(PdlsError):
    """Rounding precondition or guarantee violated"""
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def project(instance: Instance, config: ConfigSolution) -> CompactSolution:
    """x^i_j = total weight of chains whose layer-i suffix starts at j"""
    values = np.zeros((instance.k, instance.n))
    for path_index, weights in enumerate(config.paths):
        job_ids = instance.chains[path_index]
        for chain, weight in weights.items():
            for i, start in enumerate(chain.starts):
                if start < len(job_ids):
                    values[i, instance.index_of[job_ids[start]]] += float(weight)
    return CompactSolution(values)


def lift(instance: Instance, compact: CompactSolution,
         settings: Optional[SolverSettings] = None) -> ConfigSolution:
    """Cross-free configuration point whose projection is ``compact``.

    On each path the suffix chain S(alpha) takes, per layer, the suffix starting
    at the first job whose cumulative value reaches alpha; weights are the
    lengths of the alpha-intervals on which S(alpha) is constant. The mass left
    over below 1 stays implicit.
    """
    settings = settings or get_settings()
    tol = settings.lift.tolerance
    paths: List[Dict[SuffixChain, float]] = []
    for path_index, job_ids in enumerate(instance.chains):
        columns = [instance.index_of[j] for j in job_ids]
        block = compact.values[:, columns]
        if (block < -tol).any():
            raise RoundingError(f"negative value on path {path_index}")
        cum = np.cumsum(np.maximum(block, 0.0), axis=1)
        if (cum[:, -1] > 1.0 + tol).any():
            raise RoundingError(f"path {path_index} carries more than one unit at some layer")
        if (cum[1:] > cum[:-1] + tol).any():
            raise RoundingError(f"path {path_index} breaks layer nesting")
        # nesting within tolerance made exact
        cum = np.minimum.accumulate(cum, axis=0)

        breakpoints = np.unique(np.concatenate(([0.0], cum.ravel())))
        weights: Dict[SuffixChain, float] = {}
        for low, high in zip(breakpoints[:-1], breakpoints[1:]):
            starts = tuple(int(np.searchsorted(row, high, side="left")) for row in cum)
            if all(s >= len(job_ids) for s in starts):
                continue
            chain = SuffixChain(path_index, starts)
            weights[chain] = weights.get(chain, 0.0) + float(high - low)
        paths.append(weights)
    return ConfigSolution(tuple(paths))


def ordered_support(weights: Dict[SuffixChain, float]) -> List[SuffixChain]:
    """Support sorted from the chain deferring most to the one deferring least"""
    return sorted((s for s, w in weights.items() if w > 0), key=lambda s: (sum(s.starts), s.starts))


def config_kc_lhs(instance: Instance, config: ConfigSolution, family: SuffixChainFamily,
                  layer: int, capped: bool = True):
    """Left side of the family's cover constraint at ``layer`` for a configuration point"""
    total = 0
    for path_index, weights in enumerate(config.paths):
        sums = instance.suffix_p[path_index]
        f_start = family[path_index].starts[layer - 1]
        for chain, weight in weights.items():
            if capped:
                coef = capped_coeff_suffix(instance, family, layer, path_index, chain)
            else:
                start = chain.starts[layer - 1]
                coef = sums[start] - sums[max(start, f_start)]
            total += coef * weight
    return total


@dataclass(frozen=True)
class BoostedSolution:
    """Chains that defer some job outside L, scaled by the boost factor"""
    late: FrozenSet[int]
    factor: float
    threshold: float
    modified: Instance
    canonical: SuffixChainFamily
    base: Tuple[Dict[SuffixChain, float], ...] = field(compare=False)
    boosted: Tuple[Dict[SuffixChain, float], ...] = field(compare=False)
    u_bar: Dict[int, float] = field(compare=False)


def filter_and_boost(
    instance: Instance,
    config: ConfigSolution,
    gamma: Optional[float] = None,
    *,
    factor: Optional[float] = None,
    late: Optional[FrozenSet[int]] = None,
    settings: Optional[SolverSettings] = None,
) -> BoostedSolution:
    """Drop chains harmless in I[L] and scale the rest by ``factor``.

    ``factor`` defaults to gamma * logk_eff(k) and the late set L to the jobs
    with U_j >= 1 / factor; a caller that already fixed L passes it in.
    """
    settings = settings or get_settings()
    if factor is None:
        if gamma is None or gamma <= 0:
            raise ValueError("gamma must be positive when no factor is given")
        factor = gamma * logk_eff(instance.k)
    threshold = 1.0 / factor
    if late is None:
        late = select_late_jobs(config.u_values(instance), threshold)
    late = frozenset(late)
    modified = modify_instance(instance, late)
    canonical = canonical_family(modified)
    eps = settings.separation.violation_tolerance

    base: List[Dict[SuffixChain, float]] = []
    boosted: List[Dict[SuffixChain, float]] = []
    for path_index, weights in enumerate(config.paths):
        kept = {s: w for s, w in weights.items() if w > 0 and makes_late(instance, path_index, s, late)}
        scaled = {s: factor * float(w) for s, w in kept.items()}
        mass = sum(scaled.values())
        if mass > 1.0 + eps:
            raise RoundingError(f"boosted mass {mass:.6f} exceeds 1 on path {path_index}")
        base.append(kept)
        boosted.append(scaled)

    u_bar: Dict[int, float] = {}
    for path_index, job_ids in enumerate(instance.chains):
        for pos, job_id in enumerate(job_ids):
            layer = instance.layer_of[job_id]
            if job_id in late or layer is None:
                u_bar[job_id] = 0.0
                continue
            u_bar[job_id] = sum(w for s, w in boosted[path_index].items() if pos >= s.starts[layer - 1])
    logger.debug("filter: |L|=%d, factor %.4f", len(late), factor)
    return BoostedSolution(late, factor, threshold, modified, canonical, tuple(base), tuple(boosted), u_bar)


def sample_independent(instance: Instance, boosted: BoostedSolution,
                       rng: np.random.Generator) -> SuffixChainFamily:
    """One chain per path drawn with probability x-bar, canonical chain otherwise"""
    chains = []
    for path_index in range(instance.q):
        weights = boosted.boosted[path_index]
        draw = rng.random()
        picked = boosted.canonical[path_index]
        cumulative = 0.0
        for chain in ordered_support(weights):
            cumulative += weights[chain]
            if draw < cumulative:
                picked = chain
                break
        chains.append(picked)
    return SuffixChainFamily(tuple(chains))


def layer_feasibility(instance: Instance, canonical: SuffixChainFamily,
                      sample: SuffixChainFamily) -> List[bool]:
    """Per layer, whether the sample defers at least theta of capped processing"""
    flags = []
    for i in range(1, instance.k + 1):
        demand = theta(instance, canonical, i)
        supplied = 0
        for p, sums in enumerate(instance.suffix_p):
            start = sample[p].starts[i - 1]
            supplied += min(sums[start] - sums[max(start, canonical[p].starts[i - 1])], demand)
        flags.append(supplied >= demand)
    return flags


def check_feas_constraint(instance: Instance, canonical: SuffixChainFamily,
                          sample: SuffixChainFamily) -> bool:
    return all(layer_feasibility(instance, canonical, sample))


def greedy_schedule(instance: Instance, sample: SuffixChainFamily,
                    canonical: SuffixChainFamily) -> Schedule:
    """Per layer and path, run every unscheduled job outside the joined suffix"""
    joined = [join(sample[p], canonical[p]) for p in range(instance.q)]
    pointer = [0] * instance.q
    order: List[int] = []
    for i in range(1, instance.k + 1):
        for p, job_ids in enumerate(instance.chains):
            target = joined[p].starts[i - 1]
            while pointer[p] < target:
                order.append(job_ids[pointer[p]])
                pointer[p] += 1
    for p, job_ids in enumerate(instance.chains):
        order.extend(job_ids[pointer[p]:])
    return make_schedule(instance, order)


def sampled_late_penalty(instance: Instance, boosted: BoostedSolution,
                         sample: SuffixChainFamily) -> int:
    """Total penalty of jobs outside L that the sample defers past their own layer"""
    total = 0
    for p, job_ids in enumerate(instance.chains):
        for pos, job_id in enumerate(job_ids):
            layer = instance.layer_of[job_id]
            if job_id in boosted.late or layer is None:
                continue
            if pos >= sample[p].starts[layer - 1]:
                total += instance.job(job_id).w
    return total


@dataclass(frozen=True)
class SampleOutcome:
    family: SuffixChainFamily
    passed: bool
    penalty: int
    modified_penalty: int
    sampled_bound: int


@dataclass(frozen=True)
class ApproxResult:
    schedule: Schedule
    penalty: int
    route: str
    lp_value: Optional[float] = None
    samples_used: int = 0
    feas_passes: int = 0
    feas_rate: Optional[float] = None
    first_passing_penalty: Optional[int] = None
    bound: Optional[float] = None
    gamma: Optional[float] = None
    seed: Optional[int] = None
    rng_algorithm: str = RNG_ALGORITHM
    log_convention: str = LOG_CONVENTION
    iterations: int = 0
    late: FrozenSet[int] = frozenset()
    samples: Tuple[SampleOutcome, ...] = field(default=(), compare=False, repr=False)


def _exact_shortcut(instance: Instance, settings: SolverSettings):
    if instance.k == 1:
        return schedule_single_deadline(instance)
    if (interleaving_count(instance) <= settings.exact.brute_force_cap
            and state_count(instance) <= settings.exact.dp_state_cap):
        return dp_fixed_chains(instance, settings)
    return None


def approximate(instance: Instance, settings: Optional[SolverSettings] = None) -> ApproxResult:
    """Cutting planes, lift, filter and boost, then best of up to max_samples roundings"""
    settings = settings or get_settings()
    cfg = settings.rounding
    if cfg.exact_shortcut:
        exact = _exact_shortcut(instance, settings)
        if exact is not None:
            logger.info("approximate: routed to %s", exact.method)
            return ApproxResult(exact.schedule, exact.opt_penalty, exact.method,
                                gamma=cfg.gamma, seed=cfg.seed)

    cp = cutting_plane_solve(instance, cfg.gamma, settings=settings)
    config = lift(instance, cp.point, settings)
    boosted = filter_and_boost(instance, config, cfg.gamma, late=cp.late, settings=settings)
    rng = make_rng(cfg.seed)

    outcomes: List[SampleOutcome] = []
    best: Optional[Schedule] = None
    for _ in range(cfg.max_samples):
        family = sample_independent(instance, boosted, rng)
        passed = check_feas_constraint(instance, boosted.canonical, family)
        schedule = greedy_schedule(instance, family, boosted.canonical)
        outcomes.append(SampleOutcome(
            family, passed, schedule.penalty,
            evaluate_schedule(boosted.modified, schedule).penalty,
            sampled_late_penalty(instance, boosted, family),
        ))
        if best is None or schedule.penalty < best.penalty:
            best = schedule
        if best.penalty == 0:
            break

    passes = sum(1 for o in outcomes if o.passed)
    first = next((o.penalty for o in outcomes if o.passed), None)
    bound = 8 * logk_eff(instance.k) * cp.objective
    logger.info("approximate: lp %.6g, penalty %d, %d/%d samples passed",
                cp.objective, best.penalty, passes, len(outcomes))
    return ApproxResult(
        best, best.penalty, "lp-rounding", cp.objective, len(outcomes), passes,
        passes / len(outcomes), first, bound, cfg.gamma, cfg.seed,
        iterations=cp.iterations, late=cp.late, samples=tuple(outcomes),
    )


def _pick_by_threshold(weights: Dict[SuffixChain, float], level: float,
                       fallback: SuffixChain) -> SuffixChain:
    support = ordered_support(weights)
    for a, b in zip(support, support[1:]):
        if chain_order(a, b) not in (ChainOrder.PRECEDES, ChainOrder.EQUAL):
            raise RoundingError("support of the boosted solution is not totally ordered")
    cumulative = 0.0
    for chain in support:
        cumulative += weights[chain]
        if cumulative > level:
            return chain
    return fallback


def sample_correlated_2path(instance: Instance, boosted: BoostedSolution, alpha: float) -> SuffixChainFamily:
    """First path reads the support at alpha, second path at 1 - alpha"""
    if instance.q != 2:
        raise RoundingError(f"correlated rounding needs exactly 2 chains, got {instance.q}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    first = _pick_by_threshold(boosted.boosted[0], alpha, boosted.canonical[0])
    second = _pick_by_threshold(boosted.boosted[1], 1.0 - alpha, boosted.canonical[1])
    return SuffixChainFamily((first, second))


@dataclass(frozen=True)
class TwoPathResult:
    schedule: Schedule
    penalty: int
    lp_value: float
    alpha: float
    mean_penalty: float
    stderr: float
    grid_size: int
    seed: Optional[int] = None
    rng_algorithm: str = RNG_ALGORITHM
    iterations: int = 0


def _correlated_round(instance: Instance, boosted: BoostedSolution, alpha: float) -> Schedule:
    family = sample_correlated_2path(instance, boosted, alpha)
    if not check_feas_constraint(instance, boosted.canonical, family):
        raise RoundingError(f"two-chain cover inequality fails at alpha={alpha}")
    return greedy_schedule(instance, family, boosted.canonical)


def approximate_2path(instance: Instance, rng: Optional[np.random.Generator] = None,
                      settings: Optional[SolverSettings] = None) -> TwoPathResult:
    """Filter at 1/2, boost by 2, round both chains from one uniform draw"""
    settings = settings or get_settings()
    if instance.q != 2:
        raise RoundingError(f"two-chain rounding needs exactly 2 chains, got {instance.q}")
    seed = None
    if rng is None:
        seed = settings.rounding.seed
        rng = make_rng(seed)

    cp = cutting_plane_solve(instance, settings.rounding.gamma, threshold=0.5, settings=settings)
    config = lift(instance, cp.point, settings)
    boosted = filter_and_boost(instance, config, factor=2.0, late=cp.late, settings=settings)

    alpha = float(rng.random())
    schedule = _correlated_round(instance, boosted, alpha)

    grid = settings.rounding.alpha_grid
    penalties = np.array([
        _correlated_round(instance, boosted, (g + 0.5) / grid).penalty for g in range(grid)
    ], dtype=float)
    mean = float(penalties.mean())
    stderr = float(penalties.std(ddof=1) / math.sqrt(grid)) if grid > 1 else 0.0
    logger.info("approximate_2path: lp %.6g, penalty %d, grid mean %.4f", cp.objective, schedule.penalty, mean)
    return TwoPathResult(schedule, schedule.penalty, cp.objective, alpha, mean, stderr, grid,
                         seed, iterations=cp.iterations)


def rounding_guarantee(instance: Instance, boosted: BoostedSolution,
                       samples: Sequence[SuffixChainFamily]) -> Tuple[float, float]:
    """Empirical mean of the sampled late penalty next to its expectation under x-bar"""
    empirical = float(np.mean([sampled_late_penalty(instance, boosted, s) for s in samples]))
    expected = sum(instance.job(j).w * u for j, u in boosted.u_bar.items())
    return empirical, float(expected)
