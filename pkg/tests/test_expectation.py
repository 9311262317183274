import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmm_landscape import ExpectationEngine, InvalidArgumentError, TrueMixture, UnsupportedConfigurationError
from gmm_landscape.expectation import expect_component, expect_mixture, log_expect_component

ENGINES = [
    ExpectationEngine(),
    ExpectationEngine(rule="gauss_hermite"),
]


@pytest.mark.parametrize("eng", ENGINES, ids=["trapezoid", "gauss_hermite"])
def test_constant_integrand_normalized(eng):
    m = TrueMixture([[2.0, -4.0], [-1.0, 0.5]], sigma=3.0)
    r = expect_component(1, lambda X: np.ones(len(X)), m, eng)
    assert r.value == pytest.approx(1.0, abs=1e-14)
    assert r.mc_std_error == 0.0


@pytest.mark.parametrize("eng", ENGINES, ids=["trapezoid", "gauss_hermite"])
def test_mean_of_component(eng):
    m = TrueMixture([[2.0], [-1.0]], sigma=3.0)
    r = expect_component(0, lambda X: X, m, eng)
    np.testing.assert_allclose(r.value, [2.0, -1.0], atol=1e-12)


@pytest.mark.parametrize("eng", ENGINES, ids=["trapezoid", "gauss_hermite"])
def test_chi_square_mean(eng):
    m = TrueMixture([[0.5], [1.5]], sigma=1.0)
    r = expect_component(0, lambda X: ((X - m.centers[:, 0]) ** 2).sum(axis=1), m, eng)
    assert r.value == pytest.approx(2.0, abs=1e-10)


def test_symmetric_mixture_mean(engine):
    m = TrueMixture([[-1.0, 1.0]])
    assert abs(expect_mixture(lambda X: X[:, 0], m, engine).value) < 1e-12


def test_single_component_mixture_matches_component(engine):
    m = TrueMixture([[0.7], [-0.2]], sigma=0.5)
    g = lambda X: np.sin(X[:, 0]) * X[:, 1]
    assert expect_mixture(g, m, engine).value == expect_component(0, g, m, engine).value


@pytest.mark.parametrize("delta", [2.0, 5.0])
def test_three_mixture_second_moment(engine, delta):
    m = TrueMixture([[-delta, 0.0, delta]])
    r = expect_mixture(lambda X: X[:, 0] ** 2, m, engine)
    assert r.value == pytest.approx(1 + 2 * delta**2 / 3, abs=1e-10)


def test_three_mixture_second_moment_value(engine):
    m = TrueMixture([[-2.0, 0.0, 2.0]])
    assert expect_mixture(lambda X: X[:, 0] ** 2, m, engine).value == pytest.approx(3.6666666666666667, abs=1e-10)


def test_quadrature_refused_beyond_three_dimensions():
    m = TrueMixture(np.zeros((4, 1)))
    with pytest.raises(UnsupportedConfigurationError):
        expect_component(0, lambda X: X[:, 0], m, ExpectationEngine(mode="tensor_quadrature"))


def test_node_budget_enforced():
    m = TrueMixture(np.zeros((3, 1)))
    with pytest.raises(UnsupportedConfigurationError):
        expect_component(0, lambda X: X[:, 0], m, ExpectationEngine(order=101))


def test_high_dimension_defaults_to_monte_carlo():
    eng = ExpectationEngine.for_dimension(5, mc_samples=1000)
    assert eng.mode == "monte_carlo"
    m = TrueMixture(np.zeros((5, 1)))
    r = expect_component(0, lambda X: X[:, 0], m, eng)
    assert np.isfinite(r.value) and r.mc_std_error > 0


def test_gauss_hermite_polynomial_exactness():
    order = 12
    eng = ExpectationEngine(rule="gauss_hermite", order=order)
    m = TrueMixture([[0.0]])
    # E[Z^(2n)] = (2n-1)!!, degree up to 2 * order - 1 = 23 is exact
    for n in range(1, 12):
        r = expect_component(0, lambda X: X[:, 0] ** (2 * n), m, eng)
        double_fact = np.prod(np.arange(2 * n - 1, 0, -2), dtype=float)
        assert r.value == pytest.approx(double_fact, rel=1e-12)


def test_vector_integrand_shapes(engine):
    m = TrueMixture([[0.0, 1.0], [1.0, 2.0]])
    r = expect_mixture(lambda X: np.einsum("na,nb->nab", X, X), m, engine)
    assert r.value.shape == (2, 2)
    # E[X X^T] = I + mean of theta theta^T
    theta = m.centers
    np.testing.assert_allclose(r.value, np.eye(2) + theta @ theta.T / 2, atol=1e-10)


def test_non_finite_integrand_rejected(engine):
    m = TrueMixture([[0.0]])
    with pytest.raises(InvalidArgumentError):
        expect_component(0, lambda X: np.full(len(X), np.inf), m, engine)


def test_bad_component_index(engine):
    with pytest.raises(InvalidArgumentError):
        expect_component(2, lambda X: X[:, 0], TrueMixture([[0.0, 1.0]]), engine)


def test_monte_carlo_determinism():
    eng = ExpectationEngine(mode="monte_carlo", mc_samples=5000, seed=11)
    m = TrueMixture([[0.0, 3.0]])
    g = lambda X: np.cos(X[:, 0])
    a = expect_mixture(g, m, eng)
    b = expect_mixture(g, m, eng)
    assert a.value == b.value and a.mc_std_error == b.mc_std_error


def test_monte_carlo_streams_do_not_depend_on_component_count():
    eng = ExpectationEngine(mode="monte_carlo", mc_samples=4000, seed=3)
    g = lambda X: X[:, 0] ** 3
    two = TrueMixture([[0.0, 2.0]])
    three = TrueMixture([[0.0, 2.0, 9.0]])
    assert expect_component(1, g, two, eng).value == expect_component(1, g, three, eng).value


def test_monte_carlo_consistency_over_seeds(engine):
    m = TrueMixture([[-1.0, 2.0]], sigma=1.3)
    integrands = [
        lambda X: X[:, 0] ** 2,
        lambda X: np.tanh(X[:, 0]),
        lambda X: np.exp(-0.5 * X[:, 0] ** 2),
    ]
    for g in integrands:
        exact = expect_mixture(g, m, engine).value
        hits = 0
        for seed in range(100):
            r = expect_mixture(g, m, ExpectationEngine(mode="monte_carlo", mc_samples=20_000, seed=seed))
            hits += abs(r.value - exact) <= 4 * r.mc_std_error
        assert hits >= 99


def test_log_expectation_matches_direct(engine):
    m = TrueMixture([[0.5]])
    direct = expect_component(0, lambda X: np.exp(-X[:, 0] ** 2), m, engine).value
    logged = log_expect_component(0, lambda X: -X[:, 0] ** 2, m, engine)
    assert logged == pytest.approx(np.log(direct), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
    mu=st.floats(-4, 4),
    sigma=st.floats(0.2, 3),
)
def test_linearity(a, b, mu, sigma):
    eng = ExpectationEngine()
    m = TrueMixture([[mu, -mu + 1.0]], sigma=sigma)
    g = lambda X: np.sin(X[:, 0])
    h = lambda X: X[:, 0] ** 2
    lhs = expect_mixture(lambda X: a * g(X) + b * h(X), m, eng).value
    rhs = a * expect_mixture(g, m, eng).value + b * expect_mixture(h, m, eng).value
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(rhs)))


@pytest.mark.parametrize("kw", [{"mode": "sparse"}, {"rule": "simpson"}, {"order": 0}, {"mc_samples": 1}, {"seed": -1}])
def test_engine_validation(kw):
    with pytest.raises(InvalidArgumentError):
        ExpectationEngine(**kw)
