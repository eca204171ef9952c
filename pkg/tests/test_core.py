import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from boltzrep.core import (
    DegenerateDensityError,
    Density,
    DimensionError,
    Grid,
    LearningParams,
    entropy,
    free_energy,
    gibbs,
    integrate,
    ks_distance,
    normalize,
    read_density_csv,
    write_density_csv,
)

# -int p ln p for p ~ exp(-10 (x - 1/2)^2) on [0, 1], 40-digit mpmath quadrature
ENTROPY_TRUNC_GAUSS_B10 = -0.17973093683957613987

RULES = ["simpson", "trapezoid"]


@pytest.mark.parametrize("m", [3, 4, 5, 6, 7, 10, 201, 400, 401])
@pytest.mark.parametrize("rule", RULES)
def test_grid_invariants(m, rule):
    g = Grid(m, rule)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0
    assert np.allclose(np.diff(g.nodes), g.h, rtol=0, atol=1e-15)
    assert np.all(g.weights > 0)
    assert math.isclose(g.weights.sum(), 1.0, rel_tol=0, abs_tol=1e-14)


@pytest.mark.parametrize("m", [2, 0, 3.5])
def test_grid_rejects_small_or_fractional(m):
    with pytest.raises(ValueError):
        Grid(m)


def test_grid_rejects_unknown_rule():
    with pytest.raises(ValueError, match="rule"):
        Grid(11, "gauss")


@pytest.mark.parametrize("m", [4, 6, 8, 101])
def test_simpson_even_grid_exact_for_cubics(m):
    g = Grid(m)
    x = g.nodes
    assert integrate(x**3 - 2 * x**2 + x, g) == pytest.approx(1 / 4 - 2 / 3 + 1 / 2, abs=1e-14)


@pytest.mark.parametrize("rule", RULES)
@pytest.mark.parametrize("m", [3, 51, 201])
def test_integrate_constant(rule, m):
    g = Grid(m, rule)
    assert integrate(np.ones(m), g) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("rule", RULES)
def test_integrate_identity_exact(rule):
    g = Grid(101, rule)
    assert integrate(g.nodes, g) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("rule", RULES)
def test_integrate_square(rule):
    g = Grid(101, rule)
    assert abs(integrate(g.nodes**2, g) - 1 / 3) <= 1e-4


def test_integrate_length_mismatch():
    with pytest.raises(DimensionError):
        integrate(np.ones(10), Grid(11))


def test_normalize_uniform_scaling():
    g = Grid(51)
    d = normalize(np.full(51, 2.0), g)
    assert np.allclose(d.values, 1.0, atol=1e-14)


@pytest.mark.parametrize("rule,tol", [("simpson", 1e-9), ("trapezoid", 1e-5)])
def test_normalize_exponential(rule, tol):
    g = Grid(201, rule)
    d = normalize(np.exp(g.nodes), g)
    assert np.max(np.abs(d.values - np.exp(g.nodes) / (math.e - 1))) <= tol
    assert abs(integrate(d) - 1.0) <= 1e-12


def test_normalize_idempotent(grid201):
    d = normalize(np.exp(-3 * grid201.nodes), grid201)
    again = normalize(d)
    assert np.max(np.abs(again.values - d.values)) <= 1e-12


@pytest.mark.parametrize("values", [np.zeros(11), -np.ones(11), np.r_[-1.0, np.ones(10)]])
def test_normalize_degenerate(values):
    with pytest.raises(DegenerateDensityError):
        normalize(values, Grid(11))


def test_density_rejects_unnormalized_and_negative():
    g = Grid(11)
    with pytest.raises(ValueError, match="integrates"):
        Density(g, np.full(11, 2.0))
    with pytest.raises(ValueError, match="nonnegative"):
        Density(g, np.r_[-0.1, np.full(10, 1.1)])


def test_entropy_uniform(grid201):
    assert entropy(Density.uniform(grid201)) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("rule", RULES)
def test_entropy_half_interval(rule):
    g = Grid(401, rule)
    d = normalize(2.0 * (g.nodes > 0.5), g)
    assert abs(entropy(d) + math.log(2)) <= 5 * g.h


def test_entropy_zero_nodes_use_zero_log_zero():
    g = Grid(5)
    d = normalize(np.array([0.0, 1.0, 1.0, 1.0, 0.0]), g)
    assert math.isfinite(entropy(d))


def test_entropy_truncated_gaussian(grid401):
    x = grid401.nodes
    d = normalize(np.exp(-10 * (x - 0.5) ** 2), grid401)
    assert abs(entropy(d) - ENTROPY_TRUNC_GAUSS_B10) <= 1e-9


def test_entropy_truncated_gaussian_trapezoid_richardson():
    # second route: trapezoid values at h and h/2 combined by Richardson extrapolation
    vals = []
    for m in (201, 401):
        g = Grid(m, "trapezoid")
        vals.append(entropy(normalize(np.exp(-10 * (g.nodes - 0.5) ** 2), g)))
    assert abs((4 * vals[1] - vals[0]) / 3 - ENTROPY_TRUNC_GAUSS_B10) <= 1e-8


def test_free_energy_zero_reward_uniform(grid201):
    assert free_energy(Density.uniform(grid201), np.zeros(201), 3.0) == pytest.approx(0.0, abs=1e-14)


def test_free_energy_constant_reward(grid201):
    d = normalize(np.exp(2 * grid201.nodes), grid201)
    c, beta = 0.7, 4.0
    assert free_energy(d, np.full(201, c), beta) == pytest.approx(c + entropy(d) / beta, abs=1e-14)


def test_free_energy_gibbs_beats_uniform(grid201):
    r = grid201.nodes
    p = gibbs(r, 5.0, grid201)
    assert np.allclose(p.values, normalize(np.exp(5 * r), grid201).values, atol=1e-12)
    assert free_energy(p, r, 5.0) > free_energy(Density.uniform(grid201), r, 5.0)


def test_free_energy_shape_mismatch(grid201):
    with pytest.raises(DimensionError):
        free_energy(Density.uniform(grid201), np.zeros(5), 1.0)


vectors = arrays(np.float64, 41, elements=st.floats(-10, 10))


@given(u=vectors, v=vectors, a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_integrate_linear(u, v, a, b):
    g = Grid(41)
    lhs = integrate(a * u + b * v, g)
    rhs = a * integrate(u, g) + b * integrate(v, g)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@given(v=arrays(np.float64, 41, elements=st.floats(0.01, 100)), c=st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(v, c):
    g = Grid(41)
    assert np.allclose(normalize(c * v, g).values, normalize(v, g).values, rtol=1e-12, atol=0)


@pytest.mark.parametrize("rule", RULES)
def test_entropy_maximized_by_uniform(rule):
    g = Grid(101, rule)
    rng = np.random.default_rng(7)
    h_uniform = entropy(Density.uniform(g))
    for _ in range(1000):
        q = normalize(rng.random(g.m) ** rng.uniform(0.5, 4), g)
        assert entropy(q) <= h_uniform + 1e-12


@settings(max_examples=200)
@given(
    r=arrays(np.float64, 31, elements=st.floats(-3, 3)),
    q=arrays(np.float64, 31, elements=st.floats(1e-3, 10)),
    beta=st.floats(0.1, 50),
)
def test_gibbs_maximizes_free_energy(r, q, beta):
    g = Grid(31)
    p = gibbs(r, beta, g)
    qd = normalize(q, g)
    assert free_energy(p, r, beta) >= free_energy(qd, r, beta) - 1e-10


def test_ks_distance(grid201):
    u = Density.uniform(grid201)
    assert ks_distance(u, u) == 0.0
    left = normalize((grid201.nodes <= 0.5).astype(float), grid201)
    assert 0.4 < ks_distance(u, left) <= 0.5 + 1e-12


def test_learning_params_validation():
    p = LearningParams(beta=4.0)
    assert p.temperature == 0.25
    for bad in ({"beta": 0}, {"beta": 1, "alpha": -1}, {"beta": 1, "dt": 0}, {"beta": 1, "tol": 0}):
        with pytest.raises(ValueError):
            LearningParams(**bad)


def test_density_csv_roundtrip(tmp_path, grid201):
    d = normalize(np.exp(np.sin(7 * grid201.nodes)), grid201)
    path = tmp_path / "d.csv"
    write_density_csv(path, d)
    assert path.read_text().splitlines()[0] == "x,p"
    back = read_density_csv(path)
    assert np.array_equal(back.values, d.values)
