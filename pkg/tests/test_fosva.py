import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atoplan.demand import History
from atoplan.fosva import (
    FosvaConfig,
    SeasonalValue,
    TrainingStats,
    TwoStageOracle,
    ValueApprox,
    evaluate,
    finite_difference_slopes,
    train,
    train_single,
    training_trees,
    update_approx,
)
from atoplan.instance import Instance
from atoplan.optimizer import SolverConfig, build_fosva, build_two_stage, solve
from atoplan.scenario import ScenarioTree, build_tree

EXACT = SolverConfig(relative_gap=0.0)


def toy(cost=1.0, price=10.0, holding=0.0, capacity=10.0):
    return Instance(component_cost=[cost], price=[price], lost_sale_penalty=[2.0], holding_cost=[holding],
                    machine_time=[[1.0]], gozinto=[[1]], capacity=[capacity])


def single_scenario(demand):
    return ScenarioTree(parent=[-1, 0], prob=[1.0, 1.0], demand=[[0], [demand]], stage=[0, 1], kind="TS",
                        tail_length=1)


def ts_by_enumeration(inst, start, demand):
    """Two-stage optimum of the one-component toy with zero root demand."""
    P, C, K, H, L = (float(a[0]) for a in (inst.price, inst.component_cost, inst.lost_sale_penalty,
                                           inst.holding_cost, inst.capacity))
    best = -np.inf
    for x in range(int(L) + 1):
        for y in range(min(start + x, demand) + 1):
            best = max(best, -H * start - C * x + P * y - K * (demand - y) - H * (start + x - y))
    return best


# -- evaluation ---------------------------------------------------------------


def test_evaluate_examples():
    va = ValueApprox([np.array([0.0, 1.0, 2.0])], [np.array([1.0, 0.7, -0.3])])
    assert evaluate(va, [1.5]) == pytest.approx(1.35)
    assert evaluate(va, [0]) == 0.0
    # the last slope continues beyond the final breakpoint
    assert evaluate(va, [4]) == pytest.approx(1.7 - 0.6)
    with pytest.raises(ValueError):
        evaluate(va, [-1])


def random_concave(rng, n=3):
    u = [np.concatenate([[0.0], np.sort(rng.choice(np.arange(1, 200), size=5, replace=False)).astype(float)])
         for _ in range(n)]
    v = [np.sort(rng.normal(0, 10, size=6))[::-1] for _ in range(n)]
    return ValueApprox(u, v)


def test_evaluate_concave_random_triples():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        va = random_concave(rng)
        a, b = rng.uniform(0, 300, size=(2, 3))
        lam = rng.random()
        for i in range(3):
            mid = va.component_value(i, lam * a[i] + (1 - lam) * b[i])
            assert mid >= lam * va.component_value(i, a[i]) + (1 - lam) * va.component_value(i, b[i]) - 1e-9


# -- updates -------------------------------------------------------------------


def test_update_example():
    u, v = update_approx([0.0], [0.0], 10.0, forward=2.0, backward=3.0, alpha=1.0)
    assert u.tolist() == [0.0, 10.0] and v.tolist() == [3.0, 2.0]


def test_update_fixed_point():
    u0, v0 = np.array([0.0, 5.0]), np.array([4.0, 1.0])
    u, v = update_approx(u0, v0, 8.0, forward=1.0, backward=1.0, alpha=0.5)
    assert u.tolist() == [0.0, 5.0, 8.0] and v.tolist() == [4.0, 1.0, 1.0]
    u, v = update_approx(u0, v0, 5.0, forward=1.0, backward=1.0, alpha=0.5)
    assert u.tolist() == [0.0, 5.0] and v.tolist() == [4.0, 1.0]


def test_update_smoothing_blend():
    u, v = update_approx([0.0], [2.0], 4.0, forward=0.0, backward=0.0, alpha=0.25)
    assert v.tolist() == [2.0, 1.5]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_update_stays_monotone(seed):
    rng = np.random.default_rng(seed)
    u, v = np.zeros(1), np.zeros(1)
    for _ in range(50):
        u, v = update_approx(u, v, float(rng.integers(0, 100)), rng.normal(0, 20), rng.normal(0, 20), rng.random())
        assert u[0] == 0 and (np.diff(u) > 0).all()
        assert (np.diff(v) <= 1e-12).all()


# -- finite differences and the oracle -----------------------------------------


def test_finite_differences_equal_production_cost():
    inst = toy(cost=3.0, price=10.0)
    tree = single_scenario(8)
    oracle = TwoStageOracle(inst, tree, EXACT, integrality="all")
    for start in (2, 4, 6):
        expect = [ts_by_enumeration(inst, s, 8) for s in (start - 1, start, start + 1)]
        assert oracle(np.array([start])) == pytest.approx(expect[1], abs=1e-6)
        fwd, bwd = finite_difference_slopes(oracle, np.array([start]), 1, 0)
        assert fwd == pytest.approx(expect[2] - expect[1]) and bwd == pytest.approx(expect[1] - expect[0])
        assert fwd == pytest.approx(3.0) and bwd == pytest.approx(3.0)


def test_finite_differences_saturated_stock():
    inst = toy(cost=3.0, holding=0.2)
    oracle = TwoStageOracle(inst, single_scenario(4), EXACT)
    fwd, bwd = finite_difference_slopes(oracle, np.array([50]), 1, 0)
    assert fwd <= 0 and bwd <= 0


def test_finite_differences_boundary_reuses_forward():
    inst = toy(cost=3.0)
    oracle = TwoStageOracle(inst, single_scenario(4), EXACT)
    fwd, bwd = finite_difference_slopes(oracle, np.array([0]), 1, 0)
    assert fwd == bwd == pytest.approx(3.0)
    assert oracle.calls == 2


def test_oracle_matches_fresh_models(small):
    inst, _, _, hist = small
    tree = training_trees(hist)[5]
    lp = TwoStageOracle(inst, tree, EXACT)
    rng = np.random.default_rng(1)
    for _ in range(3):
        point = rng.integers(0, 400, size=inst.num_components)
        fresh = solve(build_two_stage(inst, tree, point, integrality="none"), EXACT).objective_value
        assert lp(point) == pytest.approx(fresh, rel=1e-9, abs=1e-6)
    with pytest.raises(ValueError):
        lp(np.zeros(2))


def test_lp_value_concave_along_coordinates(small):
    inst, _, _, hist = small
    oracle = TwoStageOracle(inst, training_trees(hist)[0], EXACT)
    rng = np.random.default_rng(2)
    for _ in range(3):
        point = rng.integers(1, 500, size=inst.num_components)
        i = int(rng.integers(inst.num_components))
        fwd, bwd = finite_difference_slopes(oracle, point, 1, i)
        assert bwd >= fwd - 1e-6 * max(1.0, abs(oracle(point)))


def test_training_trees_are_rooted_one_month_ahead():
    hist = History(np.arange(72).reshape(36, 2))
    trees = training_trees(hist)
    assert trees[11].root_month == 0 and trees[3].root_month == 4
    assert trees[3].demand[1:].tolist() == hist.observations[hist.months == 5].tolist()
    assert (trees[3].demand[0] == 0).all()


# -- training --------------------------------------------------------------------


def test_zero_iterations_gives_zero_value_and_ts_equivalence(small):
    inst, _, dbar, hist = small
    value = train(inst, training_trees(hist), FosvaConfig(iterations=0), mean_demand=dbar)
    tree = build_tree("TS", hist, 2, hist.observations[2])
    va = value.for_month(2)
    assert evaluate(va, np.full(inst.num_components, 100)) == 0.0
    a = solve(build_fosva(inst, tree, va), EXACT).objective_value
    b = solve(build_two_stage(inst, tree), EXACT).objective_value
    assert a == pytest.approx(b, abs=1e-6)


def test_toy_slope_learned_within_ten_percent():
    inst = toy(cost=1.0, price=10.0)
    tree = single_scenario(5)
    true_slope = (ts_by_enumeration(inst, 5, 5) - ts_by_enumeration(inst, 0, 5)) / 5
    cfg = FosvaConfig(iterations=50, inventory_cap=10, smoothing=0.5, seed=3, integrality="all",
                      relative_gap=0.0)
    va = train(inst, tree, cfg).for_month(0)
    learned = (va.component_value(0, 5) - va.component_value(0, 0)) / 5
    assert true_slope == pytest.approx(1.0)
    assert abs(learned - true_slope) <= 0.1 * abs(true_slope)


def test_solve_budget(small):
    inst, _, _, hist = small
    tree = training_trees(hist)[0]
    cap = 50
    cfg = FosvaConfig(iterations=6, inventory_cap=cap)
    stats = TrainingStats()
    train_single(inst, tree, cfg, cap, np.random.default_rng(9), EXACT, stats)
    replay = np.random.default_rng(9)
    zeros = sum(int((replay.integers(0, cap + 1, size=inst.num_components) == 0).sum()) for _ in range(6))
    nI = inst.num_components
    assert stats.solves == 6 * (2 * nI + 1) - zeros
    assert stats.solves <= 3 * 6 * nI


def test_trained_slopes_are_concave(small):
    inst, _, dbar, hist = small
    stats = TrainingStats()
    value = train(inst, training_trees(hist), FosvaConfig(iterations=3), mean_demand=dbar, stats=stats)
    assert set(stats.per_month) == set(range(12))
    for va in value.by_month.values():
        va.validate()


def test_config_validation():
    for kwargs in (dict(perturbation=0), dict(smoothing=0.0), dict(smoothing=1.5), dict(iterations=-1)):
        with pytest.raises(ValueError):
            FosvaConfig(**kwargs)
    with pytest.raises(ValueError, match="inventory_cap"):
        train(toy(), single_scenario(1), FosvaConfig(iterations=1))


def test_serialization(tmp_path):
    rng = np.random.default_rng(4)
    seasonal = SeasonalValue({m: random_concave(rng, 2) for m in range(12)})
    seasonal.save(tmp_path / "v.json")
    back = SeasonalValue.load(tmp_path / "v.json")
    for m in range(12):
        for a, b in zip(back.for_month(m).slopes, seasonal.for_month(m).slopes):
            np.testing.assert_array_equal(a, b)
    pooled = SeasonalValue({m: seasonal.by_month[0] for m in range(12)}, pooled=True)
    pooled.save(tmp_path / "p.json")
    assert SeasonalValue.load(tmp_path / "p.json").for_month(13).breakpoints[1].tolist() == \
        seasonal.by_month[0].breakpoints[1].tolist()
