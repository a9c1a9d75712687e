import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from promptshap.coalition import Coalition
from promptshap.errors import CapacityError, PreconditionError, UtilityOracleError
from promptshap.game import (
    GameSpec,
    Method,
    loo_values,
    marginal_contribution,
    shapley_exact,
    shapley_exact_rational,
    shapley_montecarlo,
    shapley_permutation_rational,
    shapley_weight,
)
from promptshap.rng import SplitMix64

from conftest import glove_utility, random_table_game


class CountingOracle:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, coalition):
        self.calls += 1
        return self.fn(coalition)


def additive_game(weights):
    def utility(coalition):
        return math.fsum(weights[i] for i in coalition.indices())

    return GameSpec(n=len(weights), utility=utility)


# ---------------------------------------------------------------------------
# weights and marginals


def test_shapley_weight_values():
    assert shapley_weight(3, 0) == Fraction(1, 3)
    assert shapley_weight(3, 1) == Fraction(1, 6)
    assert shapley_weight(5, 2) == Fraction(1, 30)


def test_shapley_weight_domain():
    with pytest.raises(PreconditionError):
        shapley_weight(3, 3)
    with pytest.raises(PreconditionError):
        shapley_weight(3, -1)
    with pytest.raises(PreconditionError):
        shapley_weight(0, 0)


def test_weights_sum_to_one_over_subsets():
    # sum over all S not containing i of w(n, |S|) is exactly 1
    for n in range(1, 9):
        total = sum(
            shapley_weight(n, bin(mask).count("1"))
            for mask in range(1 << (n - 1))
        )
        assert total == 1


def test_marginal_contribution(glove_game):
    assert marginal_contribution(glove_game, Coalition.from_indices([1], 3), 0) == 1.0
    assert marginal_contribution(glove_game, Coalition.empty(3), 0) == 0.0
    with pytest.raises(PreconditionError):
        marginal_contribution(glove_game, Coalition.from_indices([0], 3), 0)


# ---------------------------------------------------------------------------
# exact values


def test_glove_exact(glove_game):
    result = shapley_exact(glove_game)
    assert result.method is Method.EXACT
    expected = (2 / 3, 1 / 6, 1 / 6)
    for got, want in zip(result.values, expected):
        assert abs(got - want) < 1e-12
    assert result.u_full == 1.0
    assert result.u_empty == 0.0
    assert result.stderr == (0.0, 0.0, 0.0)


def test_additive_game_recovers_weights():
    weights = (0.2, 0.5, 0.3)
    result = shapley_exact(additive_game(weights))
    for got, want in zip(result.values, weights):
        assert abs(got - want) < 1e-12


def test_exact_cap():
    oracle = CountingOracle(lambda c: 0.0)
    with pytest.raises(CapacityError):
        shapley_exact(GameSpec(n=21, utility=oracle))
    assert oracle.calls == 0
    # the cap is configurable
    shapley_exact(GameSpec(n=5, utility=lambda c: 0.0), exact_cap=5)
    with pytest.raises(CapacityError):
        shapley_exact(GameSpec(n=6, utility=lambda c: 0.0), exact_cap=5)


def test_oracle_failure_is_wrapped():
    def broken(coalition):
        if coalition.size == 2:
            raise ValueError("boom")
        return 0.0

    with pytest.raises(UtilityOracleError) as err:
        shapley_exact(GameSpec(n=3, utility=broken))
    assert "coalition" in err.value.details


def test_efficiency_on_seeded_games():
    for seed in range(20):
        game = random_table_game(2 + seed % 7, seed)
        result = shapley_exact(game)
        total = math.fsum(result.values)
        assert abs(total - (result.u_full - result.u_empty)) < 1e-9


def test_null_player_gets_zero():
    # utility ignores player 2 entirely
    base = random_table_game(4, 99)

    def utility(coalition):
        return base.utility(Coalition(coalition.mask & ~0b100, 4))

    values = shapley_exact(GameSpec(n=4, utility=utility)).values
    assert abs(values[2]) < 1e-12


def test_symmetric_players_get_equal_values():
    # utility depends only on |S| and |S & {0, 1}|, so 0 and 1 are symmetric
    def utility(coalition):
        overlap = len({0, 1} & set(coalition.indices()))
        return coalition.size * 0.25 + (0.4, 0.1, 0.9)[overlap]

    values = shapley_exact(GameSpec(n=5, utility=utility)).values
    assert abs(values[0] - values[1]) < 1e-12


def test_linearity():
    g1 = random_table_game(5, 7)
    g2 = random_table_game(5, 8)

    def combined(coalition):
        return g1.utility(coalition) + 2.0 * g2.utility(coalition)

    v1 = shapley_exact(g1).values
    v2 = shapley_exact(g2).values
    v = shapley_exact(GameSpec(n=5, utility=combined)).values
    for a, b, c in zip(v, v1, v2):
        assert abs(a - (b + 2.0 * c)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=2, max_value=6))
def test_efficiency_property(seed, n):
    game = random_table_game(n, seed)
    result = shapley_exact(game)
    assert abs(math.fsum(result.values) - (result.u_full - result.u_empty)) < 1e-9


# ---------------------------------------------------------------------------
# rational reference equivalence


def rational_table_game(n, seed):
    rng = SplitMix64(seed)
    table = [Fraction(rng.randbelow(1000), 1000) for _ in range(1 << n)]
    return lambda coalition: table[coalition.mask]


def test_exact_equals_permutation_bruteforce_rationally():
    for seed in (0, 1, 2):
        n = 2 + seed
        utility = rational_table_game(n, seed)
        direct = shapley_exact_rational(n, utility)
        brute = shapley_permutation_rational(n, utility)
        assert direct == brute  # exact Fraction equality


def test_rational_caps():
    with pytest.raises(CapacityError):
        shapley_exact_rational(17, lambda c: Fraction(0))
    with pytest.raises(CapacityError):
        shapley_permutation_rational(9, lambda c: Fraction(0))


# ---------------------------------------------------------------------------
# Monte Carlo


def test_montecarlo_converges_on_glove(glove_game):
    exact = shapley_exact(glove_game).values
    result = shapley_montecarlo(glove_game, permutations=4000, seed=11)
    assert result.method is Method.MONTE_CARLO
    assert result.samples == 4000
    assert result.seed == 11
    for got, want, se in zip(result.values, exact, result.stderr):
        assert abs(got - want) < 0.05
        assert se > 0.0


def test_montecarlo_is_deterministic_per_seed(glove_game):
    a = shapley_montecarlo(glove_game, permutations=200, seed=3)
    b = shapley_montecarlo(glove_game, permutations=200, seed=3)
    c = shapley_montecarlo(glove_game, permutations=200, seed=4)
    assert a.values == b.values and a.stderr == b.stderr
    assert a.values != c.values


def test_montecarlo_single_permutation_stderr_zero(glove_game):
    result = shapley_montecarlo(glove_game, permutations=1, seed=0)
    assert result.stderr == (0.0, 0.0, 0.0)
    # one permutation's marginals telescope to U(full) - U(empty)
    assert abs(math.fsum(result.values) - (result.u_full - result.u_empty)) < 1e-12


def test_montecarlo_parameter_validation(glove_game):
    with pytest.raises(PreconditionError):
        shapley_montecarlo(glove_game, permutations=0)
    with pytest.raises(PreconditionError):
        shapley_montecarlo(glove_game, permutations=10, truncation_tol=-0.1)


def test_truncation_skips_saturated_tail():
    # utility saturates at 1.0 as soon as anyone joins
    n, T = 6, 50

    def saturating(coalition):
        return 1.0 if coalition.size else 0.0

    plain = CountingOracle(saturating)
    shapley_montecarlo(GameSpec(n=n, utility=plain), permutations=T, seed=5)
    truncated = CountingOracle(saturating)
    result = shapley_montecarlo(
        GameSpec(n=n, utility=truncated), permutations=T, seed=5, truncation_tol=1e-9
    )
    # full scan: T*n + 2 evaluations; truncated: first member only, T + 2
    assert plain.calls == T * n + 2
    assert truncated.calls == T + 2
    # estimates stay unbiased: each player's value is 1/n
    assert abs(math.fsum(result.values) - 1.0) < 1e-12


def test_truncation_tol_zero_disables_truncation():
    # constant game: every prefix utility equals U(full) exactly, yet tol=0
    # must still scan every permutation in full
    n, T = 4, 10
    oracle = CountingOracle(lambda c: 0.5)
    result = shapley_montecarlo(
        GameSpec(n=n, utility=oracle), permutations=T, seed=1, truncation_tol=0.0
    )
    assert oracle.calls == T * n + 2
    assert result.values == (0.0,) * n


def test_truncation_handles_empty_prefix():
    # U(empty) already within tol of U(full): permutations are skipped entirely
    oracle = CountingOracle(lambda c: 0.5)
    result = shapley_montecarlo(
        GameSpec(n=4, utility=oracle), permutations=10, seed=1, truncation_tol=1e-6
    )
    assert oracle.calls == 2
    assert result.values == (0.0,) * 4


def test_montecarlo_efficiency_without_truncation():
    game = random_table_game(5, 123)
    result = shapley_montecarlo(game, permutations=300, seed=9)
    # permutation marginals telescope, so efficiency holds exactly per sample
    assert abs(math.fsum(result.values) - (result.u_full - result.u_empty)) < 1e-9


# ---------------------------------------------------------------------------
# leave-one-out


def test_loo_glove(glove_game):
    result = loo_values(glove_game)
    assert result.method is Method.LEAVE_ONE_OUT
    assert result.values == (1.0, 0.0, 0.0)
    assert result.u_empty == glove_game.u_empty


def test_loo_call_count_and_declared_u_empty():
    oracle = CountingOracle(lambda c: float(c.size))
    game = GameSpec(n=6, utility=oracle, u_empty=0.25)
    result = loo_values(game)
    assert oracle.calls == 7  # n + 1, never the empty coalition
    assert result.u_empty == 0.25
    assert result.values == (1.0,) * 6


# ---------------------------------------------------------------------------
# result serialization


def test_result_json_shape(glove_game):
    doc = shapley_exact(glove_game).to_json_dict(["a", "b", "c"])
    assert doc["method"] == "exact"
    assert doc["n"] == 3
    assert "seed" not in doc
    assert [p["id"] for p in doc["players"]] == ["a", "b", "c"]
    assert {"value", "stderr"} <= set(doc["players"][0])

    mc = shapley_montecarlo(glove_game, permutations=10, seed=2).to_json_dict()
    assert mc["seed"] == 2
    assert [p["id"] for p in mc["players"]] == ["p0", "p1", "p2"]


def test_result_json_id_count_checked(glove_game):
    with pytest.raises(PreconditionError):
        shapley_exact(glove_game).to_json_dict(["only", "two"])


def test_game_needs_players():
    with pytest.raises(PreconditionError):
        GameSpec(n=0, utility=lambda c: 0.0)
