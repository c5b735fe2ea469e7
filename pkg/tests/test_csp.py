import math

import numpy as np
import pytest

from csplp import corpus
from csplp.csp import (
    Constraint,
    ConstraintOracle,
    brute_force_opt,
    build_instance,
    connected_components,
    distance_to_satisfiability,
    estimator_sample_count,
    evaluate,
    instance_from_json,
    instance_to_json,
    subinstance,
    sum_estimator,
)
from csplp.errors import (
    ArityExceeded,
    BadTruthTableLength,
    BudgetExceeded,
    DegreeExceeded,
    WeightOutOfRange,
)


@pytest.fixture
def tri():
    return corpus.triangle()


@pytest.fixture
def single():
    return corpus.single()


class TestBuild:
    def test_triangle_shape(self, tri):
        assert tri.n == 3
        assert tri.total_weight == 3.0
        assert [tri.degree(v) for v in range(3)] == [2, 2, 2]

    def test_single_degrees(self, single):
        assert [single.degree(v) for v in range(5)] == [1, 1, 0, 0, 0]

    def test_degree_limit(self):
        neq = corpus.neq_predicate(2)
        cons = [Constraint(0, (0, v), 1.0) for v in range(1, 4)]  # degree(0) = 3
        with pytest.raises(DegreeExceeded):
            build_instance(2, 2, 2, 1.0, 4, [neq], cons)

    def test_weight_range(self):
        neq = corpus.neq_predicate(2)
        with pytest.raises(WeightOutOfRange):
            build_instance(2, 2, 2, 1.0, 2, [neq], [Constraint(0, (0, 1), 0.5)])
        with pytest.raises(WeightOutOfRange):
            build_instance(2, 2, 2, 2.0, 2, [neq], [Constraint(0, (0, 1), 2.5)])

    def test_arity_and_table_validation(self):
        neq = corpus.neq_predicate(2)
        with pytest.raises(ArityExceeded):
            build_instance(2, 1, 2, 1.0, 2, [neq], [Constraint(0, (0, 1), 1.0)])
        bad = {"name": "bad", "arity": 2, "truth_table": [0, 1, 1]}
        with pytest.raises(BadTruthTableLength):
            build_instance(2, 2, 2, 1.0, 2, [bad], [])

    def test_explicit_degree_index_checked(self, tri):
        with pytest.raises(ValueError):
            build_instance(2, 2, 3, 1.0, 3, tri.predicates, tri.constraints,
                           degree_index=[(0,), (0, 1), (1, 2)])

    def test_repeated_scope_counts_one_slot(self):
        neq = corpus.neq_predicate(2)
        inst = build_instance(2, 2, 1, 1.0, 1, [neq], [Constraint(0, (0, 0), 1.0)])
        assert inst.degree(0) == 1


class TestOracle:
    def test_index_order(self, tri):
        o = ConstraintOracle(tri)
        cid = o.query(0, 1)
        assert tri.constraints[cid].scope == (0, 1)
        assert o.query_count == 1

    def test_missing_index_counts(self, tri):
        o = ConstraintOracle(tri)
        assert o.query(0, 3) is None
        assert o.query_count == 1

    def test_isolated_variable(self, single):
        o = ConstraintOracle(single)
        assert o.query(2, 1) is None

    def test_pure_function_of_args(self, tri):
        o1, o2 = ConstraintOracle(tri), ConstraintOracle(tri)
        for v in range(3):
            for i in range(1, 4):
                assert o1.query(v, i) == o2.query(v, i)
        assert o1.query_count == o2.query_count == 9

    def test_usage_errors(self, tri):
        o = ConstraintOracle(tri)
        with pytest.raises(ValueError):
            o.query(5, 1)
        with pytest.raises(ValueError):
            o.query(0, 0)
        assert o.query_count == 0


class TestEvaluate:
    def test_two_of_three_cut(self, tri):
        assert evaluate(tri, (0, 1, 0)) == 2.0

    def test_constant_assignment(self, tri):
        assert evaluate(tri, (0, 0, 0)) == 0.0

    def test_partial_with_isolated_vars(self, single):
        assert evaluate(single, (0, 1, None, None, None)) == 1.0

    def test_range(self, tri):
        for m in range(8):
            beta = [(m >> 2) & 1, (m >> 1) & 1, m & 1]
            assert 0.0 <= evaluate(tri, beta) <= tri.total_weight


class TestBruteForce:
    def test_triangle_opt(self, tri):
        val, beta = brute_force_opt(tri)
        assert val == 2.0
        # first maximizer in lexicographic order
        assert beta == (0, 0, 1)
        assert evaluate(tri, beta) == 2.0

    def test_single_opt(self, single):
        val, _ = brute_force_opt(single)
        assert val == 1.0

    def test_empty_constraints(self):
        inst = build_instance(2, 2, 2, 1.0, 3, [corpus.neq_predicate(2)], [])
        val, beta = brute_force_opt(inst)
        assert val == 0.0
        assert beta == (0, 0, 0)  # first alphabet value everywhere

    def test_budget(self):
        inst = build_instance(2, 2, 2, 1.0, 30, [corpus.neq_predicate(2)], [])
        with pytest.raises(BudgetExceeded):
            brute_force_opt(inst, budget=2 ** 20)

    def test_matches_full_enumeration_small(self):
        for seed in range(12):
            inst = corpus.random_instance(seed, n=5, m=4, q=2)
            val, _ = brute_force_opt(inst)
            ref = max(
                evaluate(inst, [(m >> (4 - j)) & 1 for j in range(5)]) for m in range(32)
            )
            assert val == pytest.approx(ref)


class TestDistance:
    def test_triangle(self, tri):
        assert distance_to_satisfiability(tri) == 1

    def test_horn_chain_satisfiable(self):
        assert distance_to_satisfiability(corpus.horn_chain()) == 0

    def test_contradictory_unaries(self):
        assert distance_to_satisfiability(corpus.contradictory_pair()) == 1

    def test_zero_iff_opt_counts_all(self, tri):
        inst = corpus.horn_chain()
        assert distance_to_satisfiability(inst) == 0
        val, _ = brute_force_opt(inst)
        assert val == inst.total_weight


class TestSumEstimator:
    def test_constant_function_exact(self):
        est = sum_estimator(lambda i: 0.7, 50, 1.0, 0.2, 0.1, seed=3)
        assert est == pytest.approx(0.7 * 50)

    def test_sample_count_formula(self):
        assert estimator_sample_count(1.0, 0.1, 1.0 / 3.0) == 90
        assert estimator_sample_count(1.0, 0.1, 1.0 / 3.0) == math.ceil(50 * math.log(6))

    def test_seed_reproducible(self):
        arr = np.arange(100) % 2
        a = sum_estimator(arr, 100, 1.0, 0.1, 0.1, seed=11)
        b = sum_estimator(arr, 100, 1.0, 0.1, 0.1, seed=11)
        assert a == b

    def test_failure_rate_half_indicator(self):
        # f is the indicator of half the indices; measure the miss rate of
        # the (1, eps*n) guarantee over many trials.
        n, eps, delta, trials = 10_000, 0.05, 0.01, 10_000
        m = estimator_sample_count(1.0, eps, delta)
        rng = np.random.default_rng(99)
        # sampling the indicator directly: each draw is Bernoulli(1/2)
        hits = rng.random((trials, m)) < 0.5
        est = n * hits.sum(axis=1) / m
        failures = np.abs(est - n / 2) > eps * n
        rate = failures.mean()
        assert rate <= delta + 3 * math.sqrt(delta / trials)


class TestStructure:
    def test_components_of_union(self):
        inst = corpus.component_union(5, pieces=4)
        comps = connected_components(inst)
        assert sum(len(vs) for vs, _ in comps) == inst.n
        assert sum(len(cs) for _, cs in comps) == len(inst.constraints)

    def test_subinstance_evaluates_consistently(self):
        inst = corpus.component_union(7, pieces=3)
        comps = connected_components(inst)
        rng = np.random.default_rng(0)
        beta = rng.integers(0, inst.q, size=inst.n)
        total = sum(
            evaluate(subinstance(inst, vs, cs), [beta[v] for v in vs])
            for vs, cs in comps
        )
        assert total == pytest.approx(evaluate(inst, beta))


class TestJson:
    def test_round_trip(self, tri):
        data = instance_to_json(tri)
        back = instance_from_json(data)
        assert back == tri

    def test_validates_on_load(self, tri):
        data = instance_to_json(tri)
        data["constraints"][0]["weight"] = 0.0
        with pytest.raises(WeightOutOfRange):
            instance_from_json(data)
