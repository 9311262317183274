import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmm_landscape import (
    ExpectationEngine,
    InvalidArgumentError,
    Thresholds,
    TrueMixture,
    association_stats,
    bipartite_graph,
    check_second_order_consequences,
    classify,
    descend,
    line_structure_label,
)
from gmm_landscape.classifier import MANY_FIT_ONE, ONE_FIT_MANY, to_dot


def _partition_ok(report):
    fitted = list(report.s0) + list(report.unclassified) + [i for g in report.groups for i in g.fitted]
    assert sorted(fitted) == list(range(report.k))
    true = [s for g in report.groups for s in g.true] + list(report.unmatched_true)
    assert sorted(true) == list(range(report.k_star))
    for g in report.groups:
        if g.kind == ONE_FIT_MANY:
            assert len(g.fitted) == 1
        else:
            assert len(g.true) == 1


@pytest.fixture(scope="module")
def five_four():
    # the four true centers are 10 sigma apart
    theta = np.array([[0.0, 10.0, 20.0, 30.0], [0.0, 0.0, 0.0, 0.0]])
    model = TrueMixture(theta)
    beta = np.column_stack([(theta[:, 0] + theta[:, 1]) / 2, theta[:, 2], theta[:, 2], theta[:, 2], theta[:, 3]])
    eng = ExpectationEngine(seed=3)
    return model, beta, association_stats(beta, model, eng)


def test_stats_exact_fit_high_snr(engine):
    m = TrueMixture([[-5.0, 5.0]])
    stats = association_stats(m.centers, m, engine)
    assert np.all(np.diag(stats.mean_assoc) >= 1 - 1e-6)


def test_stats_single_center(engine):
    m = TrueMixture([[-5.0, 0.0, 5.0]])
    stats = association_stats([[1.0]], m, engine)
    np.testing.assert_allclose(stats.mean_assoc, 1.0, atol=1e-14)


def test_stats_identical_centers(engine):
    m = TrueMixture([[-2.0, 3.0]])
    stats = association_stats([[0.5, 0.5, 0.5]], m, engine)
    np.testing.assert_allclose(stats.mean_assoc, 1 / 3, atol=1e-15)


def test_stats_invariants(engine, rng):
    m = TrueMixture([[-3.0, 1.0, 4.0]])
    stats = association_stats(rng.uniform(-6, 6, size=(1, 4)), m, engine)
    np.testing.assert_allclose(stats.mean_assoc.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(stats.pair_assoc, stats.pair_assoc.transpose(0, 2, 1), atol=1e-15)
    np.testing.assert_allclose(stats.pair_assoc.sum(axis=2), stats.mean_assoc, atol=1e-9)


def test_five_fit_four_structure(five_four):
    model, beta, stats = five_four
    rep = classify(stats, beta, model)
    got = [(g.fitted, g.true, g.kind) for g in rep.groups]
    assert got == [((0,), (0, 1), ONE_FIT_MANY), ((1, 2, 3), (2,), MANY_FIT_ONE), ((4,), (3,), ONE_FIT_MANY)]
    assert rep.s0 == () and rep.unclassified == ()
    _partition_ok(rep)


def test_five_fit_four_graph(five_four):
    model, beta, stats = five_four
    edges = bipartite_graph(classify(stats, beta, model))
    # 0-based version of {(1,1),(1,2),(2,3),(3,3),(4,3),(5,4)}
    assert edges == [(0, 0), (0, 1), (1, 2), (2, 2), (3, 2), (4, 3)]


def test_exact_fit(engine):
    m = TrueMixture([[-10.0, 0.0, 10.0]])
    rep = classify(association_stats(m.centers, m, engine), m.centers, m)
    assert rep.is_exact_fit
    assert len(bipartite_graph(rep)) == 3
    assert sorted(bipartite_graph(rep)) == [(0, 0), (1, 1), (2, 2)]
    assert line_structure_label(rep, m) == "exact_fit"


def test_empty_report_has_no_edges(engine):
    m = TrueMixture([[0.0, 2.0]])
    beta = [[1.0, 1.2]]
    rep = classify(association_stats(beta, m, engine), beta, m)
    assert rep.groups == () and bipartite_graph(rep) == []
    assert rep.unclassified == (0, 1)


def test_one_fit_two_minimum_structure(engine):
    m = TrueMixture([[-12.0, 0.0, 12.0]])
    b = descend([[-6.0, 11.0, 13.0]], m, engine).final.centers
    rep = classify(association_stats(b, m, engine), b, m)
    assert [(g.fitted, g.true, g.kind) for g in rep.groups] == [
        ((0,), (0, 1), ONE_FIT_MANY),
        ((1, 2), (2,), MANY_FIT_ONE),
    ]
    assert line_structure_label(rep, m) == "pair_outer_twin"


def test_merged_saddle_is_left_unclassified(engine, three_line):
    # at separation 6 the run from (-3, 6, 6) stops at a symmetric saddle whose
    # twin centers sit 2.7 sigma from the outer true center
    b = descend([[-3.0, 6.0, 6.0]], three_line, engine).final.centers
    rep = classify(association_stats(b, three_line, engine), b, three_line)
    assert rep.unclassified
    assert line_structure_label(rep, three_line) == "other"
    _partition_ok(rep)


def test_near_empty_center(engine):
    m = TrueMixture([[-8.0, 8.0]])
    beta = [[-8.0, 8.0, 60.0]]
    rep = classify(association_stats(beta, m, engine), beta, m)
    assert rep.s0 == (2,)
    _partition_ok(rep)


def test_threshold_defaults():
    th = Thresholds()
    assert th.resolved_empty(4) == pytest.approx(0.0625)
    assert Thresholds(tau_empty=0.1).resolved_empty(4) == 0.1


def test_dimension_mismatch_rejected(engine):
    m = TrueMixture([[-1.0, 1.0]])
    stats = association_stats([[0.0, 1.0, 2.0]], m, engine)
    with pytest.raises(InvalidArgumentError):
        classify(stats, [[0.0, 1.0]], m)


def test_dot_export(five_four):
    model, beta, stats = five_four
    dot = to_dot(classify(stats, beta, model))
    assert dot.startswith("graph structure {")
    assert dot.count(" -- ") == 6


def test_second_order_at_truth(engine):
    m = TrueMixture([[-8.0, 0.0, 8.0]])
    rec = check_second_order_consequences(m.centers, m, engine)
    assert rec.worst_slack >= 0.5
    assert len(rec.skipped) == 3


def test_second_order_at_spurious_minimum(engine):
    m = TrueMixture([[-12.0, 0.0, 12.0]])
    b = descend([[-6.0, 11.0, 13.0]], m, engine).final
    assert check_second_order_consequences(b, m, engine).holds


def test_second_order_on_saddle_is_diagnostic(engine):
    m = TrueMixture([[-6.0, 0.0, 6.0]])
    rec = check_second_order_consequences([[-3.0, -3.0, 6.0]], m, engine)
    assert np.isfinite(rec.worst_slack)


@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_label_permutation_invariance(data):
    eng = ExpectationEngine()
    m = TrueMixture([[-9.0, 0.0, 9.0, 18.0]])
    beta = np.array([[-4.5, 9.0, 9.2, 18.0]])
    beta = beta + data.draw(st.floats(-0.3, 0.3))
    pf = data.draw(st.permutations(range(4)))
    pt = data.draw(st.permutations(range(4)))
    base = classify(association_stats(beta, m, eng), beta, m)
    m2 = TrueMixture(m.centers[:, pt])
    b2 = beta[:, pf]
    other = classify(association_stats(b2, m2, eng), b2, m2)
    mapped = sorted(
        (tuple(sorted(pf[i] for i in g.fitted)), tuple(sorted(int(pt[s]) for s in g.true)), g.kind)
        for g in other.groups
    )
    expected = sorted((g.fitted, g.true, g.kind) for g in base.groups)
    assert mapped == expected
    assert sorted(pf[i] for i in other.s0) == list(base.s0)
    _partition_ok(other)


def test_high_snr_restarts_are_classified(engine):
    # at separation 8 every stationary point reached from the box is classifiable
    m = TrueMixture([[-8.0, 0.0, 8.0]])
    rng = np.random.default_rng(11)
    for _ in range(20):
        b0 = rng.uniform(-8, 8, size=(1, 3))
        b = descend(b0, m, engine, keep_iterates=False).final.centers
        rep = classify(association_stats(b, m, engine), b, m)
        assert rep.is_classified, rep.signature()
        _partition_ok(rep)
