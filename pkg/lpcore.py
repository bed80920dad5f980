"""
LP core.

Builds the compact program over variables x^i_j (one per layer and job) with
knapsack-cover rows added on demand, solves it with a dense two-phase tableau
simplex under Bland's rule, and drives the row-generation loop that stops at
the first family the separation check accepts.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from model import (
    CompactSolution,
    Instance,
    PdlsError,
    SuffixChainFamily,
    canonical_family,
    capped_coeff_job,
    modify_instance,
    theta,
)
from solver_config import SolverSettings, get_settings

logger = logging.getLogger(__name__)

# U values this close below a threshold still count as reaching it
THRESHOLD_SLACK = 1e-12


class LpError(PdlsError):
    """LP construction or solve failure"""
    pass


class SeparationError(LpError):
    """Cutting-plane loop could not certify a point"""
    pass


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class LpRow:
    """sum(coeffs[v] * x_v) <relation> rhs, with relation '>=' or '<='"""
    coeffs: Dict[int, float] = field(compare=False)
    relation: str
    rhs: float
    label: str = ""


@dataclass
class LpProblem:
    """minimize objective . x subject to rows, x >= 0"""
    num_vars: int
    objective: np.ndarray
    rows: List[LpRow] = field(default_factory=list)
    var_labels: List[str] = field(default_factory=list)

    def add_row(self, row: LpRow) -> None:
        if row.relation not in (">=", "<="):
            raise LpError(f"unsupported relation {row.relation!r}")
        if not math.isfinite(row.rhs):
            raise LpError(f"non-finite rhs in row {row.label}")
        for var, coef in row.coeffs.items():
            if not 0 <= var < self.num_vars:
                raise LpError(f"row {row.label} references unknown variable {var}")
            if not math.isfinite(coef):
                raise LpError(f"non-finite coefficient in row {row.label}")
        self.rows.append(row)

    def row_activity(self, row: LpRow, x: np.ndarray) -> float:
        return float(sum(coef * x[var] for var, coef in row.coeffs.items()))

    def max_row_violation(self, x: np.ndarray) -> float:
        """Largest violation over rows and nonnegativity (0 when feasible)"""
        worst = max(0.0, float(-np.min(x))) if len(x) else 0.0
        for row in self.rows:
            activity = self.row_activity(row, x)
            gap = row.rhs - activity if row.relation == ">=" else activity - row.rhs
            worst = max(worst, gap)
        return worst


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray] = field(default=None, compare=False)
    objective: Optional[float] = None
    pivots: int = 0


class _Tableau:
    """Constraint rows plus a reduced-cost row; the last column holds the rhs"""

    def __init__(self, table: np.ndarray, basis: List[int], settings: SolverSettings):
        self.table = table
        self.basis = basis
        self.rc_tol = settings.lp.reduced_cost_tolerance
        self.pivot_tol = settings.lp.pivot_tolerance
        self.pivots = 0

    def set_costs(self, costs: np.ndarray) -> None:
        t = self.table
        t[-1, :] = 0.0
        t[-1, : len(costs)] = costs
        for r, var in enumerate(self.basis):
            if t[-1, var] != 0.0:
                t[-1, :] -= t[-1, var] * t[r, :]

    def pivot(self, r: int, c: int) -> None:
        t = self.table
        t[r, :] /= t[r, c]
        column = t[:, c].copy()
        column[r] = 0.0
        t -= np.outer(column, t[r, :])
        self.basis[r] = c
        self.pivots += 1

    def entering(self, allowed: int) -> Optional[int]:
        reduced = self.table[-1, :allowed]
        candidates = np.nonzero(reduced < -self.rc_tol)[0]
        return int(candidates[0]) if len(candidates) else None

    def leaving(self, c: int) -> Optional[int]:
        t = self.table
        best_row = None
        best_ratio = None
        for r in range(t.shape[0] - 1):
            a = t[r, c]
            if a <= self.pivot_tol:
                continue
            ratio = t[r, -1] / a
            if (best_ratio is None or ratio < best_ratio - 1e-12
                    or (abs(ratio - best_ratio) <= 1e-12 and self.basis[r] < self.basis[best_row])):
                best_row, best_ratio = r, ratio
        return best_row

    def run(self, allowed: int, max_pivots: int) -> LpStatus:
        while True:
            c = self.entering(allowed)
            if c is None:
                return LpStatus.OPTIMAL
            r = self.leaving(c)
            if r is None:
                return LpStatus.UNBOUNDED
            if self.pivots >= max_pivots:
                return LpStatus.ITERATION_LIMIT
            self.pivot(r, c)

    def drop_row(self, r: int) -> None:
        self.table = np.delete(self.table, r, axis=0)
        del self.basis[r]


def solve_lp(problem: LpProblem, settings: Optional[SolverSettings] = None) -> LpSolution:
    """Two-phase dense tableau simplex with Bland's anti-cycling rule"""
    settings = settings or get_settings()
    n = problem.num_vars
    rows = []
    for row in problem.rows:
        coeffs, relation, rhs = dict(row.coeffs), row.relation, row.rhs
        if rhs < 0:
            coeffs = {v: -a for v, a in coeffs.items()}
            relation = "<=" if relation == ">=" else ">="
            rhs = -rhs
        rows.append((coeffs, relation, rhs))

    m = len(rows)
    n_slack = m
    n_art = sum(1 for _, relation, _ in rows if relation == ">=")
    total = n + n_slack + n_art
    table = np.zeros((m + 1, total + 1))
    basis: List[int] = []
    art = n + n_slack
    for r, (coeffs, relation, rhs) in enumerate(rows):
        for var, coef in coeffs.items():
            table[r, var] += coef
        table[r, -1] = rhs
        if relation == "<=":
            table[r, n + r] = 1.0
            basis.append(n + r)
        else:
            table[r, n + r] = -1.0
            table[r, art] = 1.0
            basis.append(art)
            art += 1

    tableau = _Tableau(table, basis, settings)
    max_pivots = settings.lp.max_pivots
    eps_feas = settings.lp.feasibility_tolerance

    if n_art:
        phase_one = np.zeros(total)
        phase_one[n + n_slack:] = 1.0
        tableau.set_costs(phase_one)
        status = tableau.run(total, max_pivots)
        if status is LpStatus.ITERATION_LIMIT:
            return LpSolution(status, pivots=tableau.pivots)
        infeasibility = -tableau.table[-1, -1]
        logger.debug("phase 1: infeasibility %.3g after %d pivots", infeasibility, tableau.pivots)
        if infeasibility > eps_feas:
            return LpSolution(LpStatus.INFEASIBLE, pivots=tableau.pivots)

        r = 0
        while r < len(tableau.basis):
            if tableau.basis[r] >= n + n_slack:
                row = tableau.table[r, : n + n_slack]
                candidates = np.nonzero(np.abs(row) > settings.lp.pivot_tolerance)[0]
                if len(candidates):
                    tableau.pivot(r, int(candidates[0]))
                else:
                    tableau.drop_row(r)
                    continue
            r += 1
        tableau.table = np.delete(tableau.table, np.s_[n + n_slack: total], axis=1)

    phase_two = np.zeros(n + n_slack)
    phase_two[:n] = problem.objective
    tableau.set_costs(phase_two)
    status = tableau.run(n + n_slack, max_pivots)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, pivots=tableau.pivots)

    x = np.zeros(n + n_slack)
    for r, var in enumerate(tableau.basis):
        x[var] = tableau.table[r, -1]
    x = np.maximum(x[:n], 0.0)
    objective = float(problem.objective @ x)
    logger.debug("simplex optimal: objective %.9g, %d pivots", objective, tableau.pivots)
    return LpSolution(LpStatus.OPTIMAL, x, objective, tableau.pivots)


def logk_eff(k: int) -> float:
    """Natural log of the layer count, floored at 1"""
    return max(math.log(k), 1.0) if k >= 1 else 1.0


def var_index(instance: Instance, layer: int, job_id: int) -> int:
    return (layer - 1) * instance.n + instance.index_of[job_id]


class WorkingSet:
    """Families whose knapsack-cover rows are in the program, canonical family first"""

    def __init__(self, canonical: SuffixChainFamily):
        self._families: List[SuffixChainFamily] = [canonical]
        self._seen = {canonical}

    def add(self, family: SuffixChainFamily) -> bool:
        """Append ``family``; False if it is already present"""
        if family in self._seen:
            return False
        self._families.append(family)
        self._seen.add(family)
        return True

    def __contains__(self, family: SuffixChainFamily) -> bool:
        return family in self._seen

    def __iter__(self) -> Iterator[SuffixChainFamily]:
        return iter(self._families)

    def __len__(self) -> int:
        return len(self._families)

    @property
    def families(self) -> Tuple[SuffixChainFamily, ...]:
        return tuple(self._families)


def kc_row(instance: Instance, family: SuffixChainFamily, layer: int) -> LpRow:
    """Capped knapsack-cover row of ``family`` at ``layer``"""
    demand = theta(instance, family, layer)
    if demand == 0:
        raise ValueError(f"family defers enough at layer {layer}; no cover row exists")
    coeffs: Dict[int, float] = {}
    for chain, job_ids in zip(family, instance.chains):
        for job_id in job_ids[: chain.starts[layer - 1]]:
            coef = capped_coeff_job(instance, family, layer, job_id)
            if coef > 0:
                coeffs[var_index(instance, layer, job_id)] = float(coef)
    return LpRow(coeffs, ">=", float(demand), f"D2[i{layer}]")


def build_p2(instance: Instance, working_set: WorkingSet) -> LpProblem:
    k, n = instance.k, instance.n
    objective = np.zeros(k * n)
    for job_ids in instance.chains:
        for pos, job_id in enumerate(job_ids):
            job = instance.job(job_id)
            layer = instance.layer_of[job_id]
            # a job due at gamma or later is never late
            if layer is None or job.w == 0 or job.d >= instance.gamma:
                continue
            for earlier in job_ids[: pos + 1]:
                objective[var_index(instance, layer, earlier)] += job.w

    labels = [f"x_{i}_{job.id}" for i in range(1, k + 1) for job in instance.jobs]
    problem = LpProblem(k * n, objective, [], labels)

    for p, job_ids in enumerate(instance.chains):
        for i in range(1, k + 1):
            coeffs = {var_index(instance, i, j): 1.0 for j in job_ids}
            problem.add_row(LpRow(coeffs, "<=", 1.0, f"D1[P{p},i{i}]"))

    for p, job_ids in enumerate(instance.chains):
        for pos in range(len(job_ids)):
            for i in range(1, k):
                coeffs: Dict[int, float] = {}
                for j in job_ids[: pos + 1]:
                    coeffs[var_index(instance, i + 1, j)] = 1.0
                    coeffs[var_index(instance, i, j)] = -1.0
                problem.add_row(LpRow(coeffs, "<=", 0.0, f"D3[P{p},{job_ids[pos]},i{i}]"))

    for f_index, family in enumerate(working_set):
        for i in range(1, k + 1):
            if theta(instance, family, i) > 0:
                row = kc_row(instance, family, i)
                problem.add_row(LpRow(row.coeffs, row.relation, row.rhs, f"D2[F{f_index},i{i}]"))
    return problem


def format_problem(problem: LpProblem) -> str:
    """Plain inequality text, one row per line"""

    def terms(coeffs: Mapping[int, float]) -> str:
        parts = [f"{coef:g}*{problem.var_labels[var]}" for var, coef in sorted(coeffs.items()) if coef != 0]
        return " + ".join(parts).replace("+ -", "- ") if parts else "0"

    objective = {v: float(c) for v, c in enumerate(problem.objective) if c != 0}
    lines = [f"min: {terms(objective)}"]
    for row in problem.rows:
        lines.append(f"{row.label}: {terms(row.coeffs)} {row.relation} {row.rhs:g}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class KcCheck:
    max_violation: float
    worst_layer: Optional[int]


def check_kc(instance: Instance, family: SuffixChainFamily, point: CompactSolution) -> KcCheck:
    """Largest shortfall of the family's cover rows at ``point`` (0 when all hold)"""
    worst, worst_layer = 0.0, None
    for i in range(1, instance.k + 1):
        demand = theta(instance, family, i)
        if demand == 0:
            continue
        row = kc_row(instance, family, i)
        lhs = sum(coef * point.values[i - 1, var - (i - 1) * instance.n] for var, coef in row.coeffs.items())
        violation = demand - lhs
        if violation > worst:
            worst, worst_layer = float(violation), i
    return KcCheck(worst, worst_layer)


def select_late_jobs(u: Mapping[int, float], threshold: float) -> FrozenSet[int]:
    """Jobs whose U value reaches the filtering threshold"""
    return frozenset(j for j, value in u.items() if value >= threshold - THRESHOLD_SLACK)


@dataclass(frozen=True)
class CuttingPlaneResult:
    point: CompactSolution
    u: Dict[int, float] = field(compare=False)
    late: FrozenSet[int]
    late_family: SuffixChainFamily
    working_set: Tuple[SuffixChainFamily, ...]
    iterations: int
    objective: float
    objective_history: Tuple[float, ...]
    threshold: float


def cutting_plane_solve(
    instance: Instance,
    gamma: float,
    threshold: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
) -> CuttingPlaneResult:
    """Row generation with the relaxed separation check.

    Each round solves the program, takes the late set L of jobs with
    U_j >= threshold (default 1/(gamma * logk_eff)), and tests the cover rows of
    the canonical family of I[L]. The loop returns at the first round whose
    family is satisfied within the separation tolerance.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    settings = settings or get_settings()
    if threshold is None:
        threshold = 1.0 / (gamma * logk_eff(instance.k))
    eps_sep = settings.separation.violation_tolerance
    eps_feas = settings.lp.feasibility_tolerance
    cap = instance.n * instance.k + settings.separation.extra_iterations

    working = WorkingSet(canonical_family(instance))
    history: List[float] = []
    for iteration in range(1, cap + 1):
        problem = build_p2(instance, working)
        solution = solve_lp(problem, settings)
        if solution.status is not LpStatus.OPTIMAL:
            raise LpError(f"LP solve ended with status {solution.status.value} at iteration {iteration}")
        residual = problem.max_row_violation(solution.x)
        if residual > eps_feas:
            raise LpError(f"LP point violates a row by {residual:.3g}")
        if history and solution.objective < history[-1] - eps_feas:
            logger.warning("LP objective decreased from %.9g to %.9g", history[-1], solution.objective)
        history.append(solution.objective)

        point = CompactSolution(solution.x.reshape(instance.k, instance.n))
        u = point.u_values(instance)
        late = select_late_jobs(u, threshold)
        late_family = canonical_family(modify_instance(instance, late))
        check = check_kc(instance, late_family, point)
        logger.debug(
            "separation round %d: objective %.9g, |L|=%d, violation %.3g",
            iteration, solution.objective, len(late), check.max_violation,
        )
        if check.max_violation <= eps_sep:
            return CuttingPlaneResult(
                point, u, late, late_family, working.families, iteration,
                solution.objective, tuple(history), threshold,
            )
        if not working.add(late_family):
            raise SeparationError(
                f"family already in the working set is still violated by "
                f"{check.max_violation:.3g} at layer {check.worst_layer}"
            )
    raise SeparationError(f"no certified point after {cap} iterations")
