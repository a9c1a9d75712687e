import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from promptshap.errors import PreconditionError
from promptshap.game import shapley_exact
from promptshap.rng import SplitMix64
from promptshap.theory import (
    BetaSpec,
    LipschitzGame,
    beta_bounds_report,
    beta_interval_exact,
    beta_interval_normal,
    beta_interval_poly,
    beta_interval_quad,
    ensemble_perturbation,
    lemma1_identity,
    lemma1_sweep,
    make_affine_field,
    make_tanh_field,
    mean_field_shapley,
    perturbation_identity_max_error,
    perturbation_lipschitz,
    theorem1_experiment,
)


# ---------------------------------------------------------------------------
# coefficient identity


def test_identity_hand_cases():
    assert lemma1_identity(3, 0) == (Fraction(1, 2), Fraction(1, 2))
    assert lemma1_identity(4, 1) == (Fraction(1, 6), Fraction(1, 6))
    assert lemma1_identity(2, 0) == (Fraction(1, 1), Fraction(1, 1))


def test_identity_preconditions():
    with pytest.raises(PreconditionError):
        lemma1_identity(1, 0)
    with pytest.raises(PreconditionError):
        lemma1_identity(4, -1)
    with pytest.raises(PreconditionError):
        lemma1_identity(4, 3)


def test_identity_sweep_covers_all_cases():
    report = lemma1_sweep(64)
    assert report["cases"] == 2016
    assert report["equal"] is True
    assert report["failures"] == []


# ---------------------------------------------------------------------------
# mean-field games and the value-difference bound


def random_gvals(n, seed):
    rng = SplitMix64(seed)
    return [2.0 * rng.uniform() - 1.0 for _ in range(n)]


@pytest.mark.parametrize("n,seed", [(2, 1), (4, 2), (6, 3)])
def test_closed_form_matches_enumeration(n, seed):
    gvals = np.array(random_gvals(n, seed))
    emb = np.eye(n)
    field = lambda e: float(np.dot(gvals, e))
    game = LipschitzGame(emb, field, lipschitz_l=10.0 * n)
    closed = mean_field_shapley(gvals)
    enumerated = shapley_exact(game.game()).values
    assert np.allclose(closed, enumerated, atol=1e-10)
    assert abs(math.fsum(closed) - math.fsum(gvals) / n) < 1e-10


def test_closed_form_single_player():
    assert mean_field_shapley([0.7]).tolist() == [0.7]


def test_lipschitz_declaration_is_checked():
    emb = np.array([[0.0], [1.0]])
    field = lambda e: 2.0 * float(e[0])
    with pytest.raises(PreconditionError):
        LipschitzGame(emb, field, lipschitz_l=1.0)
    LipschitzGame(emb, field, lipschitz_l=2.0)  # tight constant is fine


def test_lipschitz_game_validation():
    with pytest.raises(PreconditionError):
        LipschitzGame(np.zeros((0, 2)), lambda e: 0.0, 1.0)
    with pytest.raises(PreconditionError):
        LipschitzGame(np.zeros((2, 2)), lambda e: 0.0, 0.0)


def test_affine_and_tanh_field_constants():
    w = np.array([3.0, 4.0])
    f, l = make_affine_field(w, c=0.5)
    assert l == 5.0
    assert abs(f(np.array([1.0, 1.0])) - 7.5) < 1e-12
    g, lg = make_tanh_field(w)
    assert lg == 5.0
    assert abs(g(np.array([0.1, 0.0])) - math.tanh(0.3)) < 1e-12


def test_value_difference_bound_holds():
    rng = SplitMix64(9)
    d = 3
    w = np.array([2.0 * rng.uniform() - 1.0 for _ in range(d)])
    field, l = make_affine_field(w, c=0.2)
    emb = np.array([[2.0 * rng.uniform() - 1.0 for _ in range(d)] for _ in range(4)])
    game = LipschitzGame(emb, field, l)
    report = theorem1_experiment(game, trials=5, seed=17)
    assert report["violations"] == 0
    assert report["pairs_checked"] == 5 * 6
    assert 0.0 < report["max_ratio"] <= 1.0 + 1e-9


def test_doubling_the_constant_halves_the_ratio():
    rng = SplitMix64(10)
    w = np.array([2.0 * rng.uniform() - 1.0 for _ in range(3)])
    field, l = make_affine_field(w)
    emb = np.array([[2.0 * rng.uniform() - 1.0 for _ in range(3)] for _ in range(4)])
    r1 = theorem1_experiment(LipschitzGame(emb, field, l), trials=3, seed=5)
    r2 = theorem1_experiment(LipschitzGame(emb, field, 2.0 * l), trials=3, seed=5)
    assert abs(r2["max_ratio"] - 0.5 * r1["max_ratio"]) < 1e-12 * r1["max_ratio"]


def test_experiment_rejects_zero_trials():
    emb = np.eye(2)
    field, l = make_affine_field(np.array([1.0, 0.0]))
    with pytest.raises(PreconditionError):
        theorem1_experiment(LipschitzGame(emb, field, l), trials=0, seed=0)


# ---------------------------------------------------------------------------
# Beta interval bounds


def test_beta_spec_moments():
    spec = BetaSpec(2, 2)
    assert spec.mu == 0.5
    assert abs(spec.sigma - math.sqrt(4 / (16 * 5))) < 1e-15
    with pytest.raises(PreconditionError):
        BetaSpec(0, 1)


def test_uniform_interval_is_linear():
    assert abs(beta_interval_exact(BetaSpec(1, 1), 0.1) - 0.2) < 1e-12


def test_be22_interval_closed_form():
    # F(0.6) - F(0.4) for CDF 3x^2 - 2x^3
    assert abs(beta_interval_exact(BetaSpec(2, 2), 0.1) - 0.296) < 1e-12


def test_exact_and_quadrature_agree():
    for spec, eps in ((BetaSpec(50, 50), 0.01), (BetaSpec(30, 70), 0.01), (BetaSpec(1, 1), 0.1)):
        assert abs(beta_interval_exact(spec, eps) - beta_interval_quad(spec, eps)) < 1e-9


def test_frozen_interval_values():
    assert abs(beta_interval_exact(BetaSpec(50, 50), 0.01) - 0.15814447222588219) < 1e-11
    assert abs(beta_interval_exact(BetaSpec(500, 500), 0.01) - 0.47284878328682906) < 1e-11
    assert abs(beta_interval_normal(BetaSpec(1, 1), 0.1) - 0.270965510461196) < 1e-12
    assert abs(beta_interval_normal(BetaSpec(50, 50), 0.01) - 0.159299480823972) < 1e-12


def test_normal_approximation_quality():
    exact = beta_interval_exact(BetaSpec(50, 50), 0.01)
    normal = beta_interval_normal(BetaSpec(50, 50), 0.01)
    assert abs(normal - exact) / exact < 0.02
    exact = beta_interval_exact(BetaSpec(500, 500), 0.01)
    normal = beta_interval_normal(BetaSpec(500, 500), 0.01)
    assert abs(normal - exact) / exact < 0.005


def test_poly_interval_values_and_flags():
    p = beta_interval_poly(BetaSpec(1, 1), 0.1)
    assert abs(p.value - 0.276395319577068) < 1e-12
    assert p.out_of_validity  # overshoots the exact mass 0.2 by far more than 10%
    assert not beta_interval_poly(BetaSpec(50, 50), 0.01).out_of_validity
    assert not beta_interval_poly(BetaSpec(500, 500), 0.01).out_of_validity


def test_poly_flag_fires_on_leading_factor_above_one():
    p = beta_interval_poly(BetaSpec(200, 200), 0.2)
    assert p.leading_factor > 1.0
    assert p.out_of_validity


def test_poly_flag_fires_on_negative_value():
    p = beta_interval_poly(BetaSpec(30, 70), 0.01)
    assert p.value < 0.0
    assert p.out_of_validity


def test_interval_eps_domain():
    for eps in (0.0, 0.5, 0.7, -0.1):
        with pytest.raises(PreconditionError):
            beta_interval_exact(BetaSpec(2, 2), eps)


def test_bounds_report_keys():
    report = beta_bounds_report(BetaSpec(2, 2), 0.1)
    assert set(report) == {
        "alpha", "beta", "epsilon", "mu", "sigma", "exact", "quad", "normal",
        "poly", "poly_leading_factor", "poly_out_of_validity",
    }
    assert abs(report["exact"] - 0.296) < 1e-6


@settings(max_examples=30, deadline=None)
@given(
    st.floats(min_value=1, max_value=100),
    st.floats(min_value=1, max_value=100),
    st.floats(min_value=0.005, max_value=0.45),
)
def test_interval_mass_is_a_probability(a, b, eps):
    mass = beta_interval_exact(BetaSpec(a, b), eps)
    assert -1e-12 <= mass <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# perturbation simulator


def test_perturbation_lipschitz_frozen():
    assert abs(perturbation_lipschitz(BetaSpec(50, 50)) - 16.037281192162933) < 1e-9


def test_perturbation_identity_is_machine_precision():
    err = perturbation_identity_max_error(
        BetaSpec(2, 2), n_classifiers=10, instances=1000, k=0, delta=0.3, seed=0
    )
    assert err <= 1e-12


def test_zero_delta_moves_nothing():
    err = perturbation_identity_max_error(
        BetaSpec(2, 2), n_classifiers=5, instances=200, k=2, delta=0.0, seed=1
    )
    assert err == 0.0
    report = ensemble_perturbation(
        BetaSpec(2, 2), n_classifiers=5, num_instances=200, k=2, delta=0.0, seed=1, trials=3
    )
    assert report["bound"] == 0.0
    assert report["up_flips"]["max"] == 0.0
    assert report["down_flips"]["max"] == 0.0
    assert report["exceed_count"] == 0


def test_perturbation_report_shape_and_prediction():
    report = ensemble_perturbation(
        BetaSpec(50, 50), n_classifiers=100, num_instances=5000, k=0,
        delta=0.5, seed=0, trials=20,
    )
    for key in (
        "alpha", "beta", "n_classifiers", "num_instances", "k", "delta", "trials",
        "seed", "epsilon", "lipschitz_l", "bound", "predicted_flip_fraction",
        "up_flips", "down_flips", "exceed_count", "identity_instances",
        "identity_max_abs_err",
    ):
        assert key in report
    assert report["epsilon"] == 0.005
    assert abs(report["bound"] - report["lipschitz_l"] * 0.005) < 1e-15
    assert report["exceed_count"] == 0
    assert report["identity_max_abs_err"] <= 1e-12
    predicted = report["predicted_flip_fraction"]
    assert abs(report["up_flips"]["mean"] - predicted) / predicted < 0.2
    assert abs(report["down_flips"]["mean"] - predicted) / predicted < 0.2


def test_perturbation_is_deterministic():
    kwargs = dict(n_classifiers=10, num_instances=500, k=1, delta=0.4, seed=7, trials=4)
    r1 = ensemble_perturbation(BetaSpec(3, 3), **kwargs)
    r2 = ensemble_perturbation(BetaSpec(3, 3), **kwargs)
    assert r1 == r2


def test_perturbation_argument_validation():
    spec = BetaSpec(2, 2)
    with pytest.raises(PreconditionError):
        ensemble_perturbation(spec, 0, 100, 0, 0.1, 0, 1)
    with pytest.raises(PreconditionError):
        ensemble_perturbation(spec, 5, 100, 5, 0.1, 0, 1)
    with pytest.raises(PreconditionError):
        ensemble_perturbation(spec, 5, 100, -1, 0.1, 0, 1)
    with pytest.raises(PreconditionError):
        ensemble_perturbation(spec, 5, 100, 0, 1.5, 0, 1)
    with pytest.raises(PreconditionError):
        ensemble_perturbation(spec, 5, 100, 0, -0.1, 0, 1)
    with pytest.raises(PreconditionError):
        ensemble_perturbation(spec, 5, 0, 0, 0.1, 0, 1)
    with pytest.raises(PreconditionError):
        ensemble_perturbation(spec, 5, 100, 0, 0.1, 0, 0)
    with pytest.raises(PreconditionError):
        perturbation_identity_max_error(spec, 5, 0, 0, 0.1, 0)
