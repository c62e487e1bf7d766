import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evoelim.game import (
    ExtendedGame,
    Game,
    GameError,
    RPS4Params,
    SimplexWarning,
    as_distribution,
    as_strategy,
    build_g0,
    build_rps4,
    dump_game,
    extend_with_mixed,
    game_from_dict,
    induce_distribution,
    induce_strategy,
    perturb,
    random_perturbation,
)


def test_rps4_matrix_entries():
    u = build_rps4(0.1, 0.1).u
    expected = np.array(
        [
            [0, -1, 0.1, -0.1],
            [0.1, 0, -1, -0.1],
            [-1, 0.1, 0, -0.1],
            [-0.2, -0.2, -0.2, 0],
        ]
    )
    assert np.allclose(u, expected, atol=1e-15)


def test_rps4_rejects_alpha_at_bound():
    with pytest.raises(GameError, match=r"\(1 - epsilon\)/3"):
        build_rps4(0.1, 0.3)
    with pytest.raises(GameError, match="epsilon"):
        build_rps4(1.0, 0.0)
    with pytest.raises(GameError):
        build_rps4(0.1, -0.01)


def test_unchecked_constructor_allows_counterexamples():
    u = build_rps4(0.1, 0.35, check=False).u
    assert u[3, 0] == pytest.approx(0.05)


def test_g0_payoff_of_strategy_4():
    eps = 0.2
    u = build_g0(eps).u
    # strategy 4 earns the same as the RPS strategies against n
    n = np.array([1, 1, 1, 0]) / 3
    p = u @ n
    assert np.allclose(p, p[0])


def test_params_parse():
    assert RPS4Params.parse("eps=0.1,alpha=0.05") == RPS4Params(0.1, 0.05)
    assert RPS4Params.parse("epsilon=0.2, a=0") == RPS4Params(0.2, 0.0)
    with pytest.raises(GameError):
        RPS4Params.parse("eps=0.1")
    with pytest.raises(GameError):
        RPS4Params.parse("eps=0.1,alpha=0,beta=1")


def test_game_is_read_only():
    g = build_rps4(0.1, 0.1)
    with pytest.raises(ValueError):
        g.u[0, 0] = 1.0


def test_game_validation():
    with pytest.raises(GameError):
        Game(np.zeros((2, 3)))
    with pytest.raises(GameError):
        Game([[np.nan]])


def test_as_strategy_tolerance_and_warning():
    with pytest.raises(GameError):
        as_strategy([0.5, 0.6])
    with pytest.raises(GameError):
        as_strategy([1.0, -1e-6, 1e-6])
    with pytest.warns(SimplexWarning):
        x = as_strategy([0.5 + 5e-10, 0.5])
    assert x.sum() == pytest.approx(1.0, abs=1e-15)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        as_strategy([0.1, 0.2, 0.7])
    with pytest.raises(GameError):
        as_strategy([0.5, 0.5], n=3)


def test_as_distribution_shape():
    with pytest.raises(GameError):
        as_distribution(np.ones((2, 3)) / 6)
    m = as_distribution(np.ones((2, 2)) / 4)
    assert m.shape == (2, 2)


def test_perturb_checks():
    g = build_rps4(0.1, 0.1)
    with pytest.raises(GameError):
        perturb(g, np.ones((3, 3)), 0.1)
    with pytest.raises(GameError):
        perturb(g, 2 * np.ones((4, 4)), 0.1)
    with pytest.raises(GameError):
        perturb(g, np.ones((4, 4)), -1)
    h = random_perturbation(g, 1e-3, np.random.default_rng(0))
    assert np.abs(h.u - g.u).max() <= 1e-3


def test_extension_base_block_identical_and_bilinear():
    g = build_rps4(0.1, 0.1)
    extras = [(0.25, 0.25, 0.25, 0.25), (0, 0, 0.5, 0.5)]
    ext = extend_with_mixed(g, extras)
    assert isinstance(ext, ExtendedGame)
    assert ext.n == 6
    assert np.array_equal(ext.u[:4, :4], g.u)
    p = np.array(extras[0])
    q = np.array(extras[1])
    assert ext.u[4, 5] == pytest.approx(p @ g.u @ q, abs=1e-15)
    assert ext.u[4, 0] == pytest.approx(p @ g.u[:, 0], abs=1e-15)


def test_extension_rejects_bad_extra():
    with pytest.raises(GameError, match="not in the base simplex"):
        extend_with_mixed(build_rps4(0.1, 0.1), [(0.5, 0.6, 0, 0)])


def test_induced_payoffs_agree():
    g = build_rps4(0.1, 0.1)
    ext = extend_with_mixed(g, [(0.25,) * 4, (1 / 3, 1 / 3, 1 / 3, 0)])
    xp = np.array([0.1, 0.2, 0.1, 0.1, 0.3, 0.2])
    x = induce_strategy(ext, xp)
    # payoff of type k against x' equals payoff of p^k against the induced state
    assert np.allclose(ext.u @ xp, ext.strategies @ (g.u @ x), atol=1e-15)
    mu = np.outer(xp, xp)
    assert np.allclose(induce_distribution(ext, mu), np.outer(x, x), atol=1e-15)


def test_json_round_trip():
    g = build_rps4(0.2, 0.05)
    back = game_from_dict(json.loads(dump_game(g)))
    assert np.array_equal(back.u, g.u)
    assert back.meta == g.meta
    ext = extend_with_mixed(g, [(0.25,) * 4])
    back = game_from_dict(json.loads(dump_game(ext)))
    assert isinstance(back, ExtendedGame)
    assert np.array_equal(back.u, ext.u)


def test_json_inconsistent_extension_rejected():
    ext = extend_with_mixed(build_rps4(0.1, 0.1), [(0.25,) * 4])
    d = ext.to_dict()
    d["u"][4][4] += 1.0
    with pytest.raises(GameError):
        game_from_dict(d)


@settings(max_examples=60, deadline=None)
@given(
    eps=st.floats(0.01, 0.99),
    frac=st.floats(0.0, 0.999),
)
def test_rps4_structure_properties(eps, frac):
    alpha = frac * (1 - eps) / 3
    u = build_rps4(eps, alpha).u
    assert np.all(np.diag(u) == 0)
    # cyclic block: i+1 earns eps against i, and i earns -1 against i+1
    for i in range(3):
        assert u[(i + 1) % 3, i] == pytest.approx(eps)
        assert u[i, (i + 1) % 3] == -1
    # strategy 4 is a best reply to itself, strictly once alpha > 0
    assert np.all(u[:3, 3] <= u[3, 3])
    if alpha > 0:
        assert np.all(u[:3, 3] < u[3, 3])
