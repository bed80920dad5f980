"""
Construction checks and benchmark tables.

The gap experiment certifies the fractional witness of the single-chain gap
construction; the tightness experiment estimates how often independent
rounding satisfies every layer on the tightness construction; the bench runs
the solver matrix over a directory of instance files.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from approx import (
    approximate,
    approximate_2path,
    config_kc_lhs,
    filter_and_boost,
    layer_feasibility,
    make_rng,
    sample_independent,
)
from exact import CapExceededError, dp_fixed_chains
from generators import gen_gap, gen_tight
from io_models import parse_instance
from lpcore import logk_eff
from model import PdlsError, SuffixChain, SuffixChainFamily, canonical_family, theta
from solver_config import SolverSettings, get_settings

logger = logging.getLogger(__name__)


class ExperimentError(PdlsError):
    """A construction failed its own certificate"""
    pass


def harmonic(n: int) -> Fraction:
    return sum((Fraction(1, j) for j in range(1, n + 1)), Fraction(0))


@dataclass
class GapReport:
    n: int
    k: int
    exact_opt: int
    witness_objective: float
    harmonic_bound: float
    gap: float
    c1_mass: float
    families_checked: int
    uncapped_failures: int
    capped_canonical_slack: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _gap_families(n: int, k: int, count: int, rng: np.random.Generator) -> List[SuffixChainFamily]:
    # constant-start families cover every case shape |F_i| vs n - D_i at every layer
    families = [SuffixChainFamily((SuffixChain(0, (s,) * k),)) for s in range(n + 1)]
    while len(families) < count:
        starts = tuple(int(s) for s in np.sort(rng.integers(0, n + 1, size=k)))
        families.append(SuffixChainFamily((SuffixChain(0, starts),)))
    return families


def run_gap_experiment(n: int, families: int = 200, seed: int = 0,
                       settings: Optional[SolverSettings] = None) -> GapReport:
    construction = gen_gap(n)
    instance, witness = construction.instance, construction.witness
    k = instance.k

    mass = witness.path_mass(0)
    if mass != 1:
        raise ExperimentError(f"witness mass is {mass}, expected 1")
    u = witness.u_values(instance)
    for job_id, value in u.items():
        if value > Fraction(1, job_id):
            raise ExperimentError(f"U_{job_id} = {value} exceeds 1/{job_id}")
    objective = sum((instance.job(j).w * value for j, value in u.items()), Fraction(0))
    bound = harmonic(n)
    if objective > bound:
        raise ExperimentError(f"witness objective {objective} exceeds H_{n}")

    exact_opt = dp_fixed_chains(instance, settings).opt_penalty
    if exact_opt != n // 2:
        raise ExperimentError(f"exact optimum {exact_opt}, expected {n // 2}")

    checked = _gap_families(n, k, families, make_rng(seed))
    failures = 0
    for family in checked:
        for i in range(1, k + 1):
            if config_kc_lhs(instance, witness, family, i, capped=False) < theta(instance, family, i):
                failures += 1
    if failures:
        raise ExperimentError(f"uncapped cover constraint fails {failures} times")

    canonical = canonical_family(instance)
    slack = [
        float(config_kc_lhs(instance, witness, canonical, i) - theta(instance, canonical, i))
        for i in range(1, k + 1)
    ]
    if all(s >= 0 for s in slack):
        raise ExperimentError("capped canonical cover constraint unexpectedly holds")

    gap = Fraction(n, 2) / objective
    logger.info("gap experiment n=%d: opt %d, witness %.4f, gap %.4f", n, exact_opt, float(objective), float(gap))
    return GapReport(n, k, exact_opt, float(objective), float(bound), float(gap), float(mass),
                     len(checked), failures, slack)


@dataclass
class TightnessRow:
    k: int
    n: int
    group_size: int
    trials: int
    per_layer_prediction: float
    prediction: float
    estimate: float
    sigma: float
    within_3sigma: bool
    per_layer_estimates: List[float] = field(default_factory=list)


def run_tightness_experiment(k_list: Sequence[int], gamma: float, trials: int = 1000,
                             seed: int = 0, settings: Optional[SolverSettings] = None) -> List[TightnessRow]:
    """Empirical all-layer success of independent rounding against (1 - 2^-m)^k"""
    if list(k_list) != sorted(k_list):
        raise ValueError("k_list must be ascending")
    rows = []
    for k in k_list:
        construction = gen_tight(k, gamma)
        instance = construction.instance
        boosted = filter_and_boost(instance, construction.witness, gamma, settings=settings)
        if boosted.late:
            raise ExperimentError("tightness witness should leave the late set empty")
        rng = make_rng(seed + k)
        layer_hits = np.zeros(k)
        all_hits = 0
        for _ in range(trials):
            flags = layer_feasibility(instance, boosted.canonical, sample_independent(instance, boosted, rng))
            layer_hits += flags
            all_hits += all(flags)
        m = construction.group_size
        per_layer = 1.0 - 2.0 ** (-m)
        prediction = per_layer ** k
        estimate = all_hits / trials
        sigma = math.sqrt(prediction * (1 - prediction) / trials)
        rows.append(TightnessRow(
            k, instance.n, m, trials, per_layer, prediction, estimate, sigma,
            abs(estimate - prediction) <= 3 * sigma + 1e-12, list(layer_hits / trials),
        ))
        logger.info("tightness k=%d m=%d: estimate %.4f, prediction %.4f", k, m, estimate, prediction)
    return rows


@dataclass
class BenchRow:
    instance: str
    method: str
    penalty: int
    opt: Optional[int]
    lp_value: Optional[float]
    ratio: float
    ratio_basis: str
    feas_rate: Optional[float] = None
    within_bound: Optional[bool] = None


def _ratio(penalty: int, reference) -> float:
    if reference is None:
        return math.nan
    if reference > 0:
        return penalty / reference
    return 1.0 if penalty == 0 else math.inf


def run_bench(corpus: Path, methods: Sequence[str] = ("exact-dp", "approx", "approx2"),
              settings: Optional[SolverSettings] = None) -> List[BenchRow]:
    settings = settings or get_settings()
    rows: List[BenchRow] = []
    for path in sorted(Path(corpus).glob("*.json")):
        instance = parse_instance(path.read_bytes())
        try:
            opt = dp_fixed_chains(instance, settings).opt_penalty
        except CapExceededError:
            opt = None

        for method in methods:
            if method == "exact-dp":
                if opt is None:
                    continue
                rows.append(BenchRow(path.name, method, opt, opt, None, _ratio(opt, opt), "opt"))
            elif method == "approx":
                result = approximate(instance, settings)
                basis = "opt" if opt is not None else "lp"
                ratio = _ratio(result.penalty, opt if opt is not None else result.lp_value)
                within = None
                if result.feas_passes and opt is not None:
                    within = ratio <= 8 * logk_eff(instance.k)
                    if not within:
                        logger.warning("%s: approx ratio %.3f above 8*logk_eff", path.name, ratio)
                rows.append(BenchRow(path.name, method, result.penalty, opt, result.lp_value,
                                     ratio, basis, result.feas_rate, within))
            elif method == "approx2":
                if instance.q != 2:
                    continue
                result = approximate_2path(instance, settings=settings)
                basis = "opt" if opt is not None else "lp"
                ratio = _ratio(result.penalty, opt if opt is not None else result.lp_value)
                rows.append(BenchRow(path.name, method, result.penalty, opt, result.lp_value, ratio, basis))
            else:
                raise ValueError(f"unknown method {method!r}")
    return rows


def render_table(rows: Sequence[BenchRow]) -> str:
    header = f"{'instance':<24} {'method':<10} {'penalty':>8} {'opt':>6} {'lp':>10} {'ratio':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        opt = "-" if row.opt is None else str(row.opt)
        lp = "-" if row.lp_value is None else f"{row.lp_value:.4f}"
        lines.append(f"{row.instance:<24} {row.method:<10} {row.penalty:>8} {opt:>6} {lp:>10} {row.ratio:>8.3f}")
    return "\n".join(lines)
