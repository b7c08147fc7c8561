import math

import hypothesis.strategies as st  # type: ignore
import numpy as np  # type: ignore
import pytest  # type: ignore
from hisgrad.coopgame import (Allocation, CharacteristicGame, Coalition,
                              coalition_weight, dump_game,
                              find_convexity_violation, find_core_violation,
                              generate_convex_game, hybrid_allocation,
                              is_convex, is_efficient, is_in_core,
                              is_superadditive, load_game, shapley_exact,
                              shapley_permutation, shapley_values)
from hypothesis import given, settings  # type: ignore

from . import assert_isclose, convex_games, games, noshrinking


def cardinality_game(n, f):
    return CharacteristicGame.from_function(n, lambda C: f(len(C)))


def asymmetric_game():
    # Agent 0 is strong; agents 1 and 2 only create value together.
    return CharacteristicGame(3, [0, 1, 0, 2, 0, 2, 1, 4])


@pytest.mark.parametrize("c_size, n, expected", [(1, 3, 1 / 6), (0, 1, 1.0),
                                                 (2, 4, 1 / 12)])
def test_coalition_weight(c_size, n, expected):
    assert_isclose(coalition_weight(c_size, n), expected, rtol=1e-12)


@pytest.mark.parametrize("c_size", [-1, 3, 4])
def test_coalition_weight_domain(c_size):
    with pytest.raises(ValueError):
        coalition_weight(c_size, 3)


@given(st.integers(min_value=1, max_value=25))
def test_coalition_weights_sum_to_one(n):
    # Summed over all coalitions of the other n - 1 agents.
    sizes = np.arange(n)
    counts = np.array([math.comb(n - 1, k) for k in sizes], dtype=float)
    assert_isclose(np.sum(counts * coalition_weight(sizes, n)), 1.0)


def test_coalition_keys():
    C = Coalition.from_members([2, 0], 3)
    assert C.mask == 0b101
    assert C.key() == "0,2"
    assert Coalition.from_key("0,2", 3) == C
    assert Coalition.from_key("", 3) == Coalition.empty(3)
    assert 1 not in C and 2 in C
    with pytest.raises(ValueError):
        Coalition.from_key("2,0", 3)
    with pytest.raises(ValueError):
        Coalition.from_members([3], 3)


def test_game_rejects_bad_values():
    with pytest.raises(ValueError):
        CharacteristicGame(2, [1, 0, 0, 1])
    with pytest.raises(ValueError):
        CharacteristicGame(2, [0, 0, 1])
    with pytest.raises(ValueError):
        CharacteristicGame(2, [0, np.nan, 0, 1])


def test_convexity_examples():
    assert is_convex(cardinality_game(4, lambda k: k))
    assert is_convex(cardinality_game(3, lambda k: k**2))

    game = CharacteristicGame(2, [0, 1, 1, 1])
    assert not is_convex(game)
    C, D = find_convexity_violation(game)
    assert (C.key(), D.key()) == ("0", "1")


def test_exhaustive_checks_refuse_large_games():
    game = cardinality_game(11, lambda k: k)
    with pytest.raises(ValueError, match="infeasible"):
        is_convex(game)
    with pytest.raises(ValueError, match="infeasible"):
        is_superadditive(game)


def test_superadditivity_examples():
    assert is_superadditive(cardinality_game(3, lambda k: k**2))
    assert is_superadditive(cardinality_game(4, lambda k: k))
    assert not is_superadditive(CharacteristicGame(2, [0, 1, 1, 1]))


@given(convex_games())
def test_generated_games_convex_and_superadditive(game):
    assert is_convex(game)
    assert is_superadditive(game)


def test_generate_convex_game_seeded():
    game = generate_convex_game(0, 3)
    assert is_convex(game)
    assert np.array_equal(game.values, generate_convex_game(0, 3).values)


def test_shapley_symmetric_two_player():
    game = CharacteristicGame(2, [0, 0, 0, 1])
    assert_isclose(shapley_values(game).payoffs, [0.5, 0.5])


def test_shapley_dummy_player():
    # Agent 2 never changes any coalition's value.
    game = CharacteristicGame.from_function(
        3, lambda C: len(set(C.members()) - {2})**2)
    assert_isclose(shapley_exact(game, 2), 0.0, atol=1e-12)


def test_shapley_asymmetric_against_permutations():
    game = asymmetric_game()
    phi = shapley_values(game)
    assert_isclose(phi.payoffs, shapley_permutation(game).payoffs)
    assert_isclose(phi.total(), 4.0)


@given(st.one_of(games(), convex_games()))
@settings(deadline=None, phases=noshrinking)
def test_shapley_efficient(game):
    assert_isclose(shapley_values(game).total(),
                   game.grand_value,
                   rtol=1e-9,
                   atol=1e-9)


def swap_players(masks, i, j):
    bit_i = (masks >> i) & 1
    bit_j = (masks >> j) & 1
    cleared = masks & ~((1 << i) | (1 << j))
    return cleared | (bit_i << j) | (bit_j << i)


def insert_dummy(game, d):
    """
    ``game`` extended by a player at index ``d`` who never changes any
    coalition's value.
    """
    masks = np.arange(2**(game.n + 1), dtype=np.int64)
    low = masks & ((1 << d) - 1)
    high = (masks >> (d + 1)) << d
    return CharacteristicGame(game.n + 1, game.values[low | high])


@given(st.one_of(games(n_min=2), convex_games()), st.data())
@settings(deadline=None, phases=noshrinking)
def test_shapley_symmetric(game, data):
    i, j = data.draw(
        st.lists(st.integers(min_value=0, max_value=game.n - 1),
                 min_size=2,
                 max_size=2,
                 unique=True))
    masks = game.masks()
    # Averaging over the swap makes i and j interchangeable.
    symmetric = CharacteristicGame(
        game.n, 0.5 * (game.values + game.values[swap_players(masks, i, j)]))
    phi = shapley_values(symmetric)
    assert abs(phi[i] - phi[j]) <= 1e-9


@given(st.one_of(games(n_max=5), convex_games(n_max=5)), st.data())
@settings(deadline=None, phases=noshrinking)
def test_shapley_dummy(game, data):
    d = data.draw(st.integers(min_value=0, max_value=game.n))
    extended = insert_dummy(game, d)
    phi = shapley_values(extended)
    assert abs(phi[d]) <= 1e-12
    others = [k for k in range(extended.n) if k != d]
    assert_isclose(phi.payoffs[others],
                   shapley_values(game).payoffs,
                   rtol=1e-9,
                   atol=1e-9)


@given(games(n_max=6))
@settings(deadline=None)
def test_subset_form_equals_permutation_average(game):
    assert_isclose(shapley_values(game).payoffs,
                   shapley_permutation(game).payoffs,
                   rtol=1e-9,
                   atol=1e-9)


def test_hybrid_examples():
    assert_isclose(
        hybrid_allocation(CharacteristicGame(2, [0, 0, 0, 1])).payoffs,
        [0.5, 0.5])
    assert_isclose(
        hybrid_allocation(cardinality_game(3, lambda k: k**2)).payoffs,
        [3, 3, 3])
    assert_isclose(hybrid_allocation(asymmetric_game()).total(), 4.0)


@given(games(n_max=6))
@settings(deadline=None, phases=noshrinking)
def test_hybrid_efficient_on_any_game(game):
    assert is_efficient(game, hybrid_allocation(game))


@given(convex_games())
@settings(deadline=None, phases=noshrinking)
def test_core_membership_on_convex_games(game):
    assert is_in_core(game, shapley_values(game))
    assert is_in_core(game, hybrid_allocation(game))


def test_efficiency_examples():
    game = cardinality_game(3, lambda k: k**2)
    assert not is_efficient(game, Allocation(np.zeros(3)))
    assert is_efficient(game, Allocation(np.full(3, 9 / 3)))
    with pytest.raises(ValueError):
        is_efficient(game, Allocation(np.zeros(2)))


def test_core_examples():
    assert is_in_core(cardinality_game(3, lambda k: k**2),
                      Allocation([3, 3, 3]))

    game = asymmetric_game()
    blocking = find_core_violation(game, Allocation([4, 0, 0]))
    assert blocking == Coalition.from_members([1, 2], 3)


def test_game_file(tmp_path):
    game = asymmetric_game()
    path = tmp_path / "game.json"
    dump_game(game, path)
    assert np.array_equal(load_game(path).values, game.values)


@pytest.mark.parametrize("content", [
    '{"n": 2, "values": {"": 0, "0": 1, "1": 1}}',
    '{"n": 2, "values": {"": 0, "0": 1, "1": 1, "0,1": 2, "2": 1}}',
    '{"n": 2, "values": {"": 1, "0": 1, "1": 1, "0,1": 2}}',
    '{"values": {}}',
    'not json',
])
def test_malformed_game_file(tmp_path, content):
    path = tmp_path / "game.json"
    path.write_text(content)
    with pytest.raises(ValueError):
        load_game(path)
