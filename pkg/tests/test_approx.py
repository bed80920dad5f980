"""
Unit tests for approx.py module
"""
import math

import numpy as np
import pytest

from approx import (
    BoostedSolution,
    RoundingError,
    approximate,
    approximate_2path,
    check_feas_constraint,
    config_kc_lhs,
    filter_and_boost,
    greedy_schedule,
    layer_feasibility,
    lift,
    make_rng,
    project,
    rounding_guarantee,
    sample_correlated_2path,
    sample_independent,
    sampled_late_penalty,
)
from exact import dp_fixed_chains
from generators import RandomSpec, gen_random
from lpcore import cutting_plane_solve, logk_eff
from model import (
    CompactSolution,
    ConfigSolution,
    SuffixChain,
    canonical_family,
    compact_objective,
    config_objective,
    family_from_starts,
    full_family,
    make_instance,
)
from solver_config import SolverSettings


def _random_compact(instance, rng):
    """Random point satisfying the simplex and nesting rows"""
    values = np.zeros((instance.k, instance.n))
    for job_ids in instance.chains:
        columns = [instance.index_of[j] for j in job_ids]
        cum = np.sort(rng.uniform(0, 1, size=len(job_ids))) * rng.uniform(0, 1)
        for layer in range(instance.k):
            if layer:
                cum = np.minimum(cum, np.sort(rng.uniform(0, 1, size=len(job_ids))))
            values[layer, columns] = np.diff(np.concatenate(([0.0], cum)))
    return CompactSolution(values)


@pytest.fixture
def unit_pair():
    """One chain of two unit jobs with a common deadline"""
    return make_instance([(1, 1, 1, 2), (2, 1, 1, 2)], [[1, 2]])


@pytest.fixture
def two_path_unit():
    """Chains [1,2] and [3] of unit jobs, all due at 1"""
    return make_instance([(1, 1, 1, 1), (2, 1, 1, 1), (3, 1, 1, 1)], [[1, 2], [3]])


@pytest.fixture
def no_shortcut():
    return SolverSettings().with_overrides(rounding={"exact_shortcut": False})


class TestProjectLift:
    """Test the map between configuration and compact points"""

    def test_project(self, unit_pair):
        """Test x on {1,2} and {2}"""
        config = ConfigSolution(({SuffixChain(0, (0,)): 0.3, SuffixChain(0, (1,)): 0.4},))
        point = project(unit_pair, config)
        assert point.value(unit_pair, 1, 1) == pytest.approx(0.3)
        assert point.value(unit_pair, 1, 2) == pytest.approx(0.4)

    def test_lift(self, unit_pair):
        """Test the inverse of the projection example"""
        config = lift(unit_pair, CompactSolution.from_mapping(unit_pair, {(1, 1): 0.3, (1, 2): 0.4}))
        weights = config.paths[0]
        assert set(weights) == {SuffixChain(0, (0,)), SuffixChain(0, (1,))}
        assert weights[SuffixChain(0, (0,))] == pytest.approx(0.3)
        assert weights[SuffixChain(0, (1,))] == pytest.approx(0.4)

    def test_lift_integral(self, w2):
        """Test an integral point lifts to one chain per path"""
        point = CompactSolution.from_mapping(w2, {(1, 1): 1.0, (2, 2): 1.0})
        config = lift(w2, point)
        assert config.paths[0] == {SuffixChain(0, (0, 1)): 1.0}
        assert config.paths[1] == {}

    def test_lift_zero(self, w2):
        """Test the zero point has empty support"""
        assert all(not weights for weights in lift(w2, CompactSolution.zeros(w2)).paths)

    def test_lift_rejects_overfull_path(self, unit_pair):
        """Test mass above one"""
        with pytest.raises(RoundingError):
            lift(unit_pair, CompactSolution.from_mapping(unit_pair, {(1, 1): 0.7, (1, 2): 0.7}))

    def test_lift_rejects_broken_nesting(self, w2):
        """Test a later layer carrying more than an earlier one"""
        with pytest.raises(RoundingError):
            lift(w2, CompactSolution.from_mapping(w2, {(2, 1): 0.5}))

    @pytest.mark.parametrize("seed", range(20))
    def test_round_trip(self, seed):
        """Test project(lift(x)) = x with a cross-free support of bounded size"""
        instance = gen_random(RandomSpec(n=9, q=3, k=4, seed=seed))
        point = _random_compact(instance, np.random.default_rng(seed))
        config = lift(instance, point)
        assert np.abs(project(instance, config).values - point.values).max() <= 1e-9
        assert config.is_cross_free()
        for path_index, job_ids in enumerate(instance.chains):
            assert len(config.support(path_index)) <= instance.k * len(job_ids) + 1
        assert config_objective(instance, config) == pytest.approx(compact_objective(instance, point), abs=1e-9)


class TestConfigCover:
    """Test cover constraints evaluated on configuration points"""

    def test_capped_and_uncapped(self, w2):
        """Test a chain deferring job 1 at layer 1"""
        config = ConfigSolution(({SuffixChain(0, (0, 2)): 1.0}, {}))
        family = canonical_family(w2)
        assert config_kc_lhs(w2, config, family, 1) == 2
        assert config_kc_lhs(w2, config, family, 1, capped=False) == 2
        assert config_kc_lhs(w2, config, family, 2) == 0


class TestFilterAndBoost:
    """Test filtering and boosting"""

    def test_zero_point(self, w2):
        """Test nothing late and nothing kept"""
        boosted = filter_and_boost(w2, ConfigSolution(({}, {})), 4.0)
        assert boosted.late == frozenset()
        assert boosted.boosted == ({}, {})

    def test_fully_late_job(self, w2):
        """Test a chain only deferring a job of L is dropped"""
        config = ConfigSolution(({SuffixChain(0, (0, 2)): 1.0}, {}))
        boosted = filter_and_boost(w2, config, 4.0)
        assert boosted.late == frozenset({1})
        assert boosted.boosted == ({}, {})
        assert boosted.modified.job(1).d == w2.gamma

    def test_sixteen_layers(self):
        """Test weight 0.005 boosted by 4 ln 16"""
        instance = make_instance([(j, 1, 1, j) for j in range(1, 17)], [list(range(1, 17))])
        chain = SuffixChain(0, (15,) * 16)
        boosted = filter_and_boost(instance, ConfigSolution(({chain: 0.005},)), 4.0)
        assert boosted.late == frozenset()
        assert boosted.boosted[0][chain] == pytest.approx(0.005 * 4 * math.log(16))
        assert boosted.u_bar[16] == pytest.approx(0.005 * 4 * math.log(16))

    def test_overfull_boost_rejected(self, w2):
        """Test boosted mass above one on a crossing support"""
        config = ConfigSolution(({SuffixChain(0, (0, 2)): 0.2, SuffixChain(0, (1, 1)): 0.2}, {}))
        with pytest.raises(RoundingError):
            filter_and_boost(w2, config, factor=4.0)

    def test_needs_gamma_or_factor(self, w2):
        """Test missing parameters"""
        with pytest.raises(ValueError):
            filter_and_boost(w2, ConfigSolution(({}, {})))


class TestSampling:
    """Test the samplers and the feasibility check"""

    def test_zero_boost_samples_canonical(self, w2):
        """Test an empty support always returns C"""
        boosted = filter_and_boost(w2, ConfigSolution(({}, {})), 4.0)
        sample = sample_independent(w2, boosted, make_rng(0))
        assert sample == boosted.canonical

    def test_frequency(self, w2):
        """Test a chain with x-bar = 0.3 is drawn about 30% of the time"""
        chain = SuffixChain(0, (0, 2))
        boosted = filter_and_boost(w2, ConfigSolution(({chain: 0.3}, {})), factor=1.0)
        rng = make_rng(7)
        draws = 100_000
        hits = sum(sample_independent(w2, boosted, rng)[0] == chain for _ in range(draws))
        assert abs(hits / draws - 0.3) <= 3 * math.sqrt(0.21 / draws) + 1e-3

    def test_feasibility_flags(self, w2):
        """Test C fails, the full family passes, and a mixed sample passes only layer 1"""
        canonical = canonical_family(w2)
        assert not check_feas_constraint(w2, canonical, canonical)
        assert check_feas_constraint(w2, canonical, full_family(w2))
        assert layer_feasibility(w2, canonical, family_from_starts([[0, 2], [0, 1]])) == [True, False]

    def test_sampled_late_penalty(self, w2):
        """Test jobs outside L deferred past their layer"""
        boosted = filter_and_boost(w2, ConfigSolution(({}, {})), 4.0)
        assert sampled_late_penalty(w2, boosted, full_family(w2)) == 8

    @pytest.mark.parametrize("seed", range(3))
    def test_expected_sampled_penalty(self, seed, no_shortcut):
        """Test the mean sampled penalty against sum w_j U-bar_j"""
        instance = gen_random(RandomSpec(n=8, q=3, k=3, seed=seed))
        cp = cutting_plane_solve(instance, 4.0, settings=no_shortcut)
        boosted = filter_and_boost(instance, lift(instance, cp.point), 4.0, late=cp.late)
        rng = make_rng(seed)
        samples = [sample_independent(instance, boosted, rng) for _ in range(4000)]
        empirical, expected = rounding_guarantee(instance, boosted, samples)
        spread = np.std([sampled_late_penalty(instance, boosted, s) for s in samples])
        assert abs(empirical - expected) <= 4 * spread / math.sqrt(len(samples)) + 1e-9


class TestGreedy:
    """Test greedy scheduling"""

    def test_canonical_sample(self, w1):
        """Test C gives the all-on-time order"""
        canonical = canonical_family(w1)
        schedule = greedy_schedule(w1, canonical, canonical)
        assert schedule.order == (1, 2, 3)
        assert schedule.penalty == 0

    def test_whole_path_deferred(self):
        """Test a sample deferring everything gives chain order"""
        instance = make_instance([(1, 1, 2, 1), (2, 1, 2, 3), (3, 1, 2, 3)], [[1, 2, 3]])
        schedule = greedy_schedule(instance, family_from_starts([[0, 0]]), canonical_family(instance))
        assert schedule.order == (1, 2, 3)


class TestCorrelatedRounding:
    """Test the two-chain rounding"""

    @pytest.fixture
    def ordered(self, two_path_unit):
        a, b = SuffixChain(0, (0,)), SuffixChain(0, (1,))
        canonical = canonical_family(two_path_unit)
        boosted = BoostedSolution(
            frozenset(), 2.0, 0.5, two_path_unit, canonical,
            ({}, {}), ({a: 0.5, b: 0.25}, {}), {},
        )
        return boosted, a, b

    def test_threshold_reading(self, two_path_unit, ordered):
        """Test alpha below 0.5 picks A, then B, then C"""
        boosted, a, b = ordered
        assert sample_correlated_2path(two_path_unit, boosted, 0.3)[0] == a
        assert sample_correlated_2path(two_path_unit, boosted, 0.6)[0] == b
        assert sample_correlated_2path(two_path_unit, boosted, 0.8)[0] == boosted.canonical[0]
        assert sample_correlated_2path(two_path_unit, boosted, 1.0)[0] == boosted.canonical[0]

    def test_marginals(self, two_path_unit, ordered):
        """Test P[A] = 0.5 and P[B] = 0.25 over uniform alpha"""
        boosted, a, b = ordered
        rng = make_rng(11)
        draws = [sample_correlated_2path(two_path_unit, boosted, float(rng.random()))[0] for _ in range(100_000)]
        assert draws.count(a) / len(draws) == pytest.approx(0.5, abs=0.006)
        assert draws.count(b) / len(draws) == pytest.approx(0.25, abs=0.006)

    def test_requires_two_chains(self):
        """Test other chain counts are refused"""
        single = make_instance([(1, 1, 1, 1)], [[1]])
        with pytest.raises(RoundingError):
            approximate_2path(single)

    def test_two_chain_pipeline(self, w2):
        """Test the grid mean stays within twice the LP value"""
        result = approximate_2path(w2, rng=make_rng(1))
        assert result.penalty >= dp_fixed_chains(w2).opt_penalty
        assert result.mean_penalty <= 2 * result.lp_value + 3 * result.stderr + 1e-9

    def test_all_on_time(self, w1):
        """Test zero penalty when every job fits"""
        assert approximate_2path(w1).penalty == 0


class TestApproximate:
    """Test the full pipeline"""

    def test_exact_route(self, w2):
        """Test small instances are solved exactly"""
        result = approximate(w2)
        assert result.route == "exact-dp"
        assert result.penalty == 4

    def test_single_deadline_route(self):
        """Test k = 1 uses the forest solver"""
        instance = make_instance([(1, 2, 3, 3), (2, 2, 1, 3)], [[1], [2]])
        result = approximate(instance)
        assert result.route == "single-deadline"
        assert result.penalty == 1

    def test_rounding_all_on_time(self, w1, no_shortcut):
        """Test the first sample already reaches zero"""
        result = approximate(w1, no_shortcut)
        assert result.route == "lp-rounding"
        assert result.penalty == 0
        assert result.samples_used == 1

    def test_rounding_two_chain(self, w2, no_shortcut):
        """Test the rounding result against OPT and the bound"""
        result = approximate(w2, no_shortcut)
        assert result.penalty >= 4
        assert result.bound == pytest.approx(8 * logk_eff(2) * result.lp_value)
        if result.feas_passes:
            assert result.penalty <= result.bound
        assert result.rng_algorithm == "numpy.PCG64"

    def test_relaxed_deadlines(self, no_shortcut):
        """Test d_j >= gamma everywhere gives zero"""
        instance = make_instance([(1, 2, 5, 6), (2, 2, 5, 6), (3, 2, 5, 6)], [[1, 2], [3]])
        assert approximate(instance, no_shortcut).penalty == 0

    @pytest.mark.parametrize("seed", range(4))
    def test_modified_penalty_bounded(self, seed, no_shortcut):
        """Test penalty in I[L] never exceeds the sampled late penalty for passing samples"""
        instance = gen_random(RandomSpec(n=8, q=3, k=3, seed=seed))
        result = approximate(instance, no_shortcut)
        for outcome in result.samples:
            if outcome.passed:
                assert outcome.modified_penalty <= outcome.sampled_bound
