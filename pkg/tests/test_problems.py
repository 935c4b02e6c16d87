import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reinforced_lsmc import (
    ConfigurationError,
    GasStorageProblem,
    GasStorageSpec,
    StoppingProblem,
    StoppingSpec,
    admissible_actions,
    cash_flow,
    terminal_value,
    transition,
    zero_payoff,
)
from oracles import gas_constant_price_value


def single(d=2, J=9, T=1.0):
    return StoppingProblem(StoppingSpec(horizon=J, maturity=T, rate=0.05, state_dim=d))


def multi(rights=4):
    return StoppingProblem(StoppingSpec(horizon=24, maturity=2.0, rate=0.05, state_dim=5, rights=rights))


def gas(**kw):
    return GasStorageProblem(GasStorageSpec(**kw))


class TestAdmissible:
    def test_single_stopping_with_a_right(self):
        assert admissible_actions(single(), 3, 1, [100, 100]) == (0, 1)

    def test_multiple_stopping_without_rights(self):
        assert admissible_actions(multi(), 3, 0, np.full(5, 100.0)) == (0,)

    def test_gas_boundaries(self):
        p = gas()
        assert admissible_actions(p, 1, 0.0, [100, 100]) == (0, 1)
        assert admissible_actions(p, 1, 1.0, [100, 100]) == (-1, 0)
        assert admissible_actions(p, 5, 0.5, [100, 100]) == (-1, 0, 1)

    def test_gas_no_trading_at_start(self):
        p = gas()
        for y in p.controls:
            assert admissible_actions(p, 0, y, [100, 100]) == (0,)

    def test_rejects_unknown_control(self):
        with pytest.raises(ConfigurationError):
            admissible_actions(single(), 1, 2, [100, 100])
        with pytest.raises(ConfigurationError):
            admissible_actions(gas(), 1, 0.3, [100, 100])

    def test_rejects_epoch_outside_horizon(self):
        with pytest.raises(ConfigurationError):
            admissible_actions(single(), 10, 1, [100, 100])

    @pytest.mark.parametrize("problem", [single(), multi(), gas()], ids=["single", "multi", "gas"])
    def test_nonempty_everywhere(self, problem):
        for j in range(problem.horizon + 1):
            for y in problem.controls:
                assert len(problem.admissible(j, y)) >= 1


class TestTransition:
    def test_stop_consumes_the_right(self):
        assert transition(single(), 2, 1, 1) == 0

    def test_idle_keeps_control(self):
        assert transition(multi(), 2, 0, 3) == 3
        assert transition(gas(), 2, 0, 0.375) == 0.375

    def test_gas_clamps_at_boundaries(self):
        p = gas()
        assert transition(p, 2, 1, 7 / 8) == 1.0
        assert transition(p, 2, -1, 1 / 8) == 0.0

    def test_rejects_inadmissible_action(self):
        with pytest.raises(ConfigurationError):
            transition(single(), 2, 1, 0)

    @pytest.mark.parametrize("problem", [single(), multi(), gas()], ids=["single", "multi", "gas"])
    def test_closed_over_every_pair(self, problem):
        for j in range(problem.horizon):
            for y in problem.controls:
                for a in problem.admissible(j, y):
                    assert np.isclose(problem.controls, problem.transition(j, a, y)).any()


class TestCashFlow:
    def test_max_call_exercise(self):
        p = single(J=9, T=1.0)
        assert cash_flow(p, 1, 1, 1, [110, 90]) == pytest.approx(10 * math.exp(-0.05 / 9), rel=1e-12)
        assert cash_flow(p, 1, 1, 1, [110, 90]) == pytest.approx(9.9446, abs=5e-5)

    def test_idle_pays_nothing(self):
        assert cash_flow(single(), 4, 0, 1, [150, 90]) == 0.0
        assert cash_flow(gas(), 4, 0, 0.5, [80, 120]) == 0.0

    def test_gas_sale(self):
        value = cash_flow(gas(), 1, -1, 0.5, [50, 100])
        assert value == pytest.approx(12.5 * math.exp(-0.7 / 365), rel=1e-12)
        assert value == pytest.approx(12.4760, abs=1e-4)

    def test_gas_depends_only_on_second_coordinate(self):
        p = gas()
        assert cash_flow(p, 3, 1, 0.5, [10, 80]) == cash_flow(p, 3, 1, 0.5, [999, 80])

    @settings(max_examples=50, deadline=None)
    @given(j=st.integers(1, 52), x2=st.floats(-200, 500), y=st.integers(1, 7))
    def test_gas_antisymmetric_in_action(self, j, x2, y):
        p = gas()
        yv = y / 8
        assert cash_flow(p, j, -1, yv, [1.0, x2]) == -cash_flow(p, j, 1, yv, [1.0, x2])

    @settings(max_examples=50, deadline=None)
    @given(x=st.lists(st.floats(0, 300), min_size=5, max_size=5), j=st.integers(0, 24))
    def test_stopping_cash_flow_ignores_rights(self, x, j):
        p = multi()
        vals = {cash_flow(p, j, 1, y, x) for y in (1, 2, 3, 4)}
        assert len(vals) == 1


class TestTerminalValue:
    def test_single_stopping(self):
        p = single(J=9, T=1.0)
        assert terminal_value(p, 1, [120, 80]) == pytest.approx(20 * math.exp(-0.05))
        assert terminal_value(p, 0, [120, 80]) == 0.0

    def test_gas_sells_one_unit(self):
        p = gas()
        assert terminal_value(p, 0.5, [0, 100]) == pytest.approx(12.5 * math.exp(-0.1 * 52 * 7 / 365))

    def test_gas_empty_storage_idles(self):
        assert terminal_value(gas(), 0.0, [0, 100]) == 0.0

    def test_zero_payoff(self, rng):
        p = StoppingProblem(StoppingSpec(horizon=5, maturity=1.0, rate=0.05, state_dim=3, payoff=zero_payoff))
        X = rng.uniform(50, 150, (20, 3))
        assert np.all(p.terminal_values(X) == 0.0)

    def test_no_rights_worth_nothing(self, rng):
        X = rng.uniform(50, 200, (50, 5))
        assert np.all(multi().terminal_values(X)[:, 0] == 0.0)


def test_stopping_spec_validation():
    with pytest.raises(ConfigurationError):
        StoppingSpec(horizon=0, maturity=1.0, rate=0.05, state_dim=2)
    with pytest.raises(ConfigurationError):
        StoppingSpec(horizon=3, maturity=1.0, rate=0.05, state_dim=2, rights=0)


def test_gas_spec_validation():
    with pytest.raises(ConfigurationError):
        GasStorageSpec(initial_fill=0.3)


def test_cash_bound_check(rng):
    p = StoppingProblem(StoppingSpec(horizon=4, maturity=1.0, rate=0.05, state_dim=2), cash_bound=60.0)
    assert p.check_cash_bound(rng.uniform(50, 150, (100, 2)))
    assert not p.check_cash_bound(np.array([[200.0, 10.0]]))


def test_dynamic_program_oracle_matches_exhaustive_search():
    # a 6-epoch instance is small enough to enumerate every action sequence
    horizon = 6
    best = 0.0
    disc = [math.exp(-0.1 * j * 7 / 365) for j in range(horizon + 1)]
    for seq in itertools.product((-1, 0, 1), repeat=horizon):
        y, total, ok = 4, 0.0, True
        for j, a in enumerate(seq, start=1):
            if not 0 <= y + a <= 8:
                ok = False
                break
            y += a
            total += -a * 12.5 * disc[j]
        if ok:
            best = max(best, total)
    assert gas_constant_price_value(100.0, 8, 0.5, horizon, 7, 0.1) == pytest.approx(best, rel=1e-14)
