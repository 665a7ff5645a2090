from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rhgame.errors import ContractError
from rhgame.model import fill_window, feasibility_check, path_prices, potential
from rhgame.routing import (
    SwapTuple,
    agent_update,
    apply_swap,
    availability_pairs_base,
    availability_set,
    best_swaps,
    population_update,
    swap_amount,
    swap_gain,
    tagged_availability,
)

from conftest import agent, diamond, make_game, random_instance, single_link


def sq(*slots):
    return {(a, b) for a in slots for b in slots}


class TestAvailability:
    def test_base_examples(self):
        assert availability_pairs_base(-2, 1, 7) == sq(0, 1)
        assert availability_pairs_base(12, 15, 7) == set()
        assert availability_pairs_base(0, 6, 7) == sq(*range(7))
        assert len(availability_pairs_base(0, 6, 7)) == 49

    def test_wrapping_window(self):
        assert availability_set(5, 3, 0, 7) == sq(5, 6) | sq(0, 1)

    def test_full_period_window(self):
        assert availability_set(0, 6, 0, 7) == sq(*range(7))
        # off phase the window is split into its two images; no pair crosses them
        assert availability_set(0, 6, 3, 7) == sq(0, 1, 2, 3) | sq(4, 5, 6)

    def test_single_slot(self):
        assert availability_set(2, 0, 0, 7) == {(2, 2)}

    @given(st.integers(1, 9).flatmap(lambda T: st.tuples(
        st.just(T), st.integers(0, T - 1), st.integers(0, T - 1), st.integers(0, T - 1))))
    def test_pairs_lie_in_one_image(self, args):
        T, offset, eta, phase = args
        tags = tagged_availability(offset, eta, phase, T)
        assert set(tags) == availability_set(offset, eta, phase, T)
        for (a, b), shift in tags.items():
            lo = offset - phase + shift
            assert lo <= a <= lo + eta and lo <= b <= lo + eta


def _worked_example():
    """Single link, T=2: target slot priced 1, source slot priced 4."""
    net = single_link()
    g = make_game(net, [agent(0, 0.8, 1, 0, [0])], 2, external=[[0.8, 3.4]])
    x = np.zeros(g.shape)
    x[0, 0, 0], x[0, 1, 0] = 0.2, 0.6
    return g, x, SwapTuple(0, 1, 0, 0)


class TestWorkedSwap:
    def test_gain(self):
        g, x, s = _worked_example()
        assert swap_gain(x, 0, s, g, 0) == pytest.approx(3 * 0.8 * 0.6, abs=1e-12)

    def test_amount(self):
        g, x, s = _worked_example()
        assert swap_amount(x, 0, s, g, 0) == pytest.approx(0.6, abs=1e-15)

    def test_apply(self):
        g, x, s = _worked_example()
        y = apply_swap(x, 0, s, swap_amount(x, 0, s, g, 0), 1.0)
        assert y[0, 0, 0] == pytest.approx(0.8) and y[0, 1, 0] == 0.0

    def test_best_swaps_singleton(self):
        g, x, s = _worked_example()
        gain, found = best_swaps(x, 0, 0, g)
        assert found == [s] and gain == pytest.approx(1.44)

    def test_agent_update_performs_swap(self):
        g, x, s = _worked_example()
        y = agent_update(x, 0, 1, g)  # theta=1 -> phase (1+1)%2 = 0
        np.testing.assert_array_equal(y, apply_swap(x, 0, s, swap_amount(x, 0, s, g, 0), 1.0))


class TestGainEdgeCases:
    def test_equal_prices_zero_gain(self):
        net = single_link()
        g = make_game(net, [agent(0, 1.0, 1, 0, [0])], 2)
        x = np.zeros(g.shape)
        x[0, :, 0] = 0.5
        assert swap_gain(x, 0, SwapTuple(0, 1, 0, 0), g) == 0.0

    def test_target_at_cap_zero_gain(self):
        g, x, s = _worked_example()
        x = x.copy()
        x[0, 0, 0] = 1.0
        g = make_game(g.network, [agent(0, 1.6, 1, 0, [0])], 2, external=[[0.0, 3.4]])
        assert swap_gain(x, 0, s, g) == 0.0
        assert swap_amount(x, 0, s, g) == 0.0

    def test_negative_gap_zero_amount(self):
        g, x, _ = _worked_example()
        assert swap_amount(x, 0, SwapTuple(1, 0, 0, 0), g) == 0.0

    def test_empty_source_zero_amount(self):
        g, x, s = _worked_example()
        x = x.copy()
        x[0, 1, 0] = 0.0
        assert swap_amount(x, 0, s, g) == 0.0

    def test_identical_prices_full_candidate_set(self):
        net = diamond(extra_cross=False)
        a = agent(0, 1.2, 1, 0, [0, 1])
        g = make_game(net, [a], 3)
        x = fill_window(a, 0, 3, net.n_paths)[None]
        gain, found = best_swaps(x, 0, 0, g)
        assert gain == 0.0
        assert len(found) == 2 * 2 * 2 * 2 - 4  # all (slot, path) pairs minus self-swaps

    def test_zero_demand_all_gains_zero(self):
        net = diamond()
        g = make_game(net, [agent(0, 0.0, 2, 0, [0, 1])], 3)
        gain, found = best_swaps(np.zeros(g.shape), 0, 0, g)
        assert gain == 0.0 and len(found) == 3 * 3 * 4 - 6


def test_apply_swap_contracts():
    g, x, s = _worked_example()
    np.testing.assert_array_equal(apply_swap(x, 0, s, 0.0, 1.0), x)
    with pytest.raises(ContractError):
        apply_swap(x, 0, s, 0.7, 1.0)
    with pytest.raises(ContractError):
        apply_swap(x, 0, s, -0.1, 1.0)


@given(st.integers(0, 2**32 - 1))
def test_swap_conserves_agent_mass(seed):
    rng = np.random.default_rng(seed)
    game, x, ph = random_instance(rng, n_agents=2)
    a = game.agents[0]
    for s in [SwapTuple(*t) for t in _random_tuples(rng, a, ph, game.period, 5)]:
        d = swap_amount(x, 0, s, game, ph)
        y = apply_swap(x, 0, s, d, a.mu)
        assert y[0].sum() == pytest.approx(x[0].sum(), abs=1e-12)


def _random_tuples(rng, a, phase, T, n):
    pairs = sorted(availability_set(a.offset, a.eta, phase, T))
    out = []
    for _ in range(n):
        tb, tu = pairs[rng.integers(len(pairs))]
        pb, pu = rng.choice(a.path_ids, size=2)
        if (tb, pb) != (tu, pu):
            out.append((tb, tu, int(pb), int(pu)))
    return out


@given(st.integers(0, 2**32 - 1))
def test_order_preserved_after_swap(seed):
    rng = np.random.default_rng(seed)
    game, x, ph = random_instance(rng, piecewise=False)
    for i, a in enumerate(game.agents):
        for t in _random_tuples(rng, a, ph, game.period, 4):
            s = SwapTuple(*t)
            d = swap_amount(x, i, s, game, ph)
            y = apply_swap(x, i, s, d, a.mu)
            pp = path_prices(y, game, ph)
            if d > 0:
                assert pp[s.to_slot, s.to_path] <= pp[s.from_slot, s.from_path] + 1e-9


@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_update_keeps_feasibility(seed, theta):
    rng = np.random.default_rng(seed)
    game, x, ph = random_instance(rng)
    theta = (ph - 1) % game.period  # the plan is held at phase theta + 1
    assert feasibility_check(x, ph, game).ok
    y = population_update(x, theta, 2, game)
    rep = feasibility_check(y, ph, game)
    assert rep.ok, rep.failures
    assert potential(y, game, ph) <= potential(x, game, ph) + 1e-12


def test_inactive_agent_is_untouched():
    g, x, _ = _worked_example()
    g = g.with_agents([replace(g.agents[0], active=False)])
    np.testing.assert_array_equal(agent_update(x, 0, 1, g), x)
    np.testing.assert_array_equal(population_update(x, 1, 3, g), x)


def test_per_agent_optimum_is_identity():
    net = diamond(extra_cross=False)
    a = agent(0, 1.2, 1, 0, [0, 1])
    g = make_game(net, [a], 3)
    x = fill_window(a, 0, 3, net.n_paths)[None]
    np.testing.assert_array_equal(agent_update(x, 0, 2, g), x)


def _drive_to_fixed_point(x, theta, game, limit=20000):
    for _ in range(limit):
        y = population_update(x, theta, 1, game)
        if np.array_equal(y, x):
            return x
        x = y
    raise AssertionError("no fixed point reached")


def test_fixed_point_identity_for_any_gamma():
    rng = np.random.default_rng(11)
    game, x, ph = random_instance(rng, n_agents=3, period=3)
    theta = (ph - 1) % 3
    xf = _drive_to_fixed_point(x, theta, game)
    for gam in (1, 2, 5):
        np.testing.assert_array_equal(population_update(xf, theta, gam, game), xf)


@given(st.integers(0, 2**32 - 1))
def test_gamma_two_is_two_single_sweeps(seed):
    rng = np.random.default_rng(seed)
    game, x, ph = random_instance(rng)
    theta = (ph - 1) % game.period
    twice = population_update(population_update(x, theta, 1, game), theta, 1, game)
    np.testing.assert_array_equal(population_update(x, theta, 2, game), twice)


def test_two_agents_parallel_paths_strict_decrease():
    net = diamond(extra_cross=False)
    agents = [agent(0, 1.0, 0, 0, [0, 1]), agent(1, 1.0, 0, 0, [0, 1])]
    g = make_game(net, agents, 1)
    x = np.zeros(g.shape)
    x[0, 0, 0] = x[1, 0, 0] = 1.0  # both on path 0, path 1 idle
    y = population_update(x, 0, 1, g)
    assert potential(y, g) < potential(x, g)


def test_gamma_must_be_positive():
    g, x, _ = _worked_example()
    with pytest.raises(ContractError):
        population_update(x, 0, 0, g)
