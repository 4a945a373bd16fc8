import itertools
import math

import numpy as np
import pytest

from qaoa_csp.tables import (WITH_REPETITION, WITHOUT_REPETITION, Clause, CspInstance, Fixed, HammingSpec, Poisson,
                             SamplerConfig, TableSpecError, TruthTable, count_true_rows, evaluate_clause,
                             first_false_rows_table, parse_truth_table, sample_instance, trial_rng)

OR2 = TruthTable(2, [0, 1, 1, 1])


def test_parse_named_families():
    t = parse_truth_table("1in:3")
    assert [i for i in range(8) if t.values[i]] == [1, 2, 4]
    assert count_true_rows(parse_truth_table("nae:3")) == 6
    t = parse_truth_table("00000001")
    assert t.k == 3 and t.values[7] and sum(t.values) == 1
    assert parse_truth_table("hamming:2:010") == parse_truth_table("1in:2")


@pytest.mark.parametrize("bad", ["", "0101x", "000", "ksat:0", "nae:-1", "hamming:3:010", "foo:3", "1in:3:1",
                                 "hamming:x:01"])
def test_parse_rejects_malformed(bad):
    with pytest.raises(TableSpecError):
        parse_truth_table(bad)


def test_truth_table_invariants():
    with pytest.raises(ValueError):
        TruthTable(2, [1, 0, 1])
    with pytest.raises(ValueError):
        TruthTable(0, [1])
    with pytest.raises(ValueError):
        HammingSpec(3, [1, 0, 1])


def test_hamming_expansion_depends_only_on_popcount():
    rng = np.random.default_rng(0)
    for k in range(1, 6):
        spec = HammingSpec(k, rng.integers(0, 2, k + 1))
        t = spec.to_table()
        for i in range(2 ** k):
            assert t.values[i] == spec.weight_values[bin(i).count("1")]
        assert t.is_hamming and t.to_hamming() == spec


def test_evaluate_clause_examples():
    assert not evaluate_clause(OR2, Clause([(0, False), (1, False)]), [0, 0])
    assert evaluate_clause(OR2, Clause([(0, True), (1, False)]), [0, 0])
    assert not evaluate_clause(parse_truth_table("1in:3"), Clause([(0, False), (1, False), (2, False)]), [1, 1, 0])
    with pytest.raises(IndexError):
        evaluate_clause(OR2, Clause([(0, False), (5, False)]), [0, 0])


def test_evaluate_clause_hamming_weight_form():
    rng = np.random.default_rng(1)
    for k in range(1, 5):
        spec = HammingSpec(k, rng.integers(0, 2, k + 1))
        t = spec.to_table()
        n = 6
        for _ in range(20):
            clause = Clause([(int(rng.integers(n)), bool(rng.integers(2))) for _ in range(k)])
            for x in itertools.product((0, 1), repeat=n):
                h = sum(x[l] ^ nu for l, nu in clause.pairs)
                assert evaluate_clause(t, clause, x) == spec.weight_values[h]


def test_permutation_invariance_iff_hamming():
    rng = np.random.default_rng(2)
    n = 5
    for _ in range(30):
        k = int(rng.integers(2, 4))
        t = TruthTable(k, rng.integers(0, 2, 2 ** k))
        invariant = True
        for x in itertools.product((0, 1), repeat=n):
            for scope in itertools.permutations(range(n), k):
                pairs = [(l, False) for l in scope]
                base = evaluate_clause(t, Clause(pairs), x)
                if any(evaluate_clause(t, Clause(p), x) != base for p in itertools.permutations(pairs)):
                    invariant = False
                    break
            if not invariant:
                break
        assert invariant == t.is_hamming


def test_count_true_rows():
    assert count_true_rows(parse_truth_table("ksat:3")) == 7
    assert count_true_rows(parse_truth_table("nae:4")) == 14
    assert count_true_rows(TruthTable(3, [0] * 8)) == 0


def test_first_false_rows_table():
    t = first_false_rows_table(3, 2)
    assert t.values == (False, False) + (True,) * 6
    assert first_false_rows_table(3, 1) == parse_truth_table("ksat:3")


def test_sample_fixed_zero():
    inst = sample_instance(5, OR2, SamplerConfig(m_mode=Fixed(0)))
    assert inst.m == 0
    assert inst.is_satisfiable()


def test_without_repetition_distinct():
    t = parse_truth_table("ksat:3")
    inst = sample_instance(4, t, SamplerConfig(WITHOUT_REPETITION, Fixed(300), seed=5))
    assert all(len(set(row)) == 3 for row in inst.variables.tolist())
    with pytest.raises(ValueError):
        sample_instance(2, t, SamplerConfig(WITHOUT_REPETITION, Fixed(1)))


def test_with_repetition_index_frequency():
    # each clause has 3 i.i.d. uniform indices, so index j appears 3/5 times per clause on average
    t = parse_truth_table("ksat:3")
    m = 100_000
    inst = sample_instance(5, t, SamplerConfig(WITH_REPETITION, Fixed(m), seed=11))
    counts = np.bincount(inst.variables.ravel(), minlength=5)
    sd = math.sqrt(m * 3 * 0.2 * 0.8)
    assert np.all(np.abs(counts - 0.6 * m) <= 3 * sd)
    neg = inst.negations.mean()
    assert abs(neg - 0.5) <= 3 * math.sqrt(0.25 / (3 * m))


def test_poisson_clause_count_mean():
    t = parse_truth_table("nae:4")
    ms = [sample_instance(10, t, SamplerConfig(m_mode=Poisson(2.5)), trial_rng(3, i)).m for i in range(2000)]
    assert abs(np.mean(ms) - 25) <= 3 * math.sqrt(25 / 2000)


def test_sampling_reproducible():
    t = parse_truth_table("nae:3")
    cfg = SamplerConfig(WITH_REPETITION, Poisson(3.0), seed=42)
    a, b = sample_instance(8, t, cfg), sample_instance(8, t, cfg)
    assert a.to_text() == b.to_text()


def test_clause_prefix_stable_in_r():
    t = parse_truth_table("ksat:3")
    small = sample_instance(10, t, SamplerConfig(m_mode=Poisson(2.0)), trial_rng(9, 0))
    large = sample_instance(10, t, SamplerConfig(m_mode=Poisson(6.0)), trial_rng(9, 0))
    assert small.m <= large.m
    assert np.array_equal(small.variables, large.variables[:small.m])
    assert np.array_equal(small.negations, large.negations[:small.m])


def test_instance_text_roundtrip():
    t = parse_truth_table("1in:3")
    inst = CspInstance.from_clauses(4, t, [[(0, False), (3, True), (0, True)], [(2, False), (1, False), (1, False)]])
    text = inst.to_text()
    assert text.splitlines() == ["4 3", "1 -4 -1", "3 2 2"]
    back = CspInstance.from_text(text, t)
    assert back.to_text() == text
    with pytest.raises(ValueError):
        CspInstance.from_text("4 3\n1 0 2\n", t)


def test_instance_rejects_out_of_range():
    with pytest.raises(ValueError):
        CspInstance.from_clauses(2, OR2, [[(0, False), (2, False)]])


def test_violation_counts_match_clause_evaluation():
    rng = np.random.default_rng(4)
    t = TruthTable(3, rng.integers(0, 2, 8))
    inst = sample_instance(6, t, SamplerConfig(m_mode=Fixed(7), seed=1))
    costs = inst.violation_counts()
    for x in range(64):
        bits = [(x >> q) & 1 for q in range(6)]
        assert costs[x] == sum(not evaluate_clause(t, c, bits) for c in inst.clauses)
