import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atoplan.demand import DemandModel, History, generate_history
from atoplan.scenario import (
    ScenarioTree,
    build_tree,
    chain_tree,
    empirical_month_mean,
    group_history_by_month,
    parse_kind,
)


def history(years, items=3, seed=0):
    return generate_history(DemandModel(num_items=items), years, np.random.default_rng(seed))


def test_group_by_month():
    h = history(10)
    groups = group_history_by_month(h)
    assert [len(g) for g in groups] == [10] * 12
    assert [len(g) for g in group_history_by_month(history(1))] == [1] * 12
    joined = np.vstack(groups)
    assert sorted(map(tuple, joined)) == sorted(map(tuple, h.observations))


def test_group_respects_start_month():
    h = History(np.arange(24).reshape(12, 2), start_month=11)
    assert group_history_by_month(h)[11].tolist() == [[0, 1]]
    assert group_history_by_month(h)[0].tolist() == [[2, 3]]


def test_ts_children_are_next_month_observations():
    h = history(5)
    root = np.array([1, 2, 3])
    tree = build_tree("TS", h, 11, root)
    assert tree.num_nodes == 6
    assert tree.demand[0].tolist() == [1, 2, 3]
    assert np.array_equal(tree.demand[1:], h.observations[h.months == 0])
    np.testing.assert_allclose(tree.prob[1:], 0.2)


def test_ts_nos_uses_whole_history():
    h = history(3)
    tree = build_tree("TS_NOS", h, 4, np.zeros(3, dtype=int))
    assert len(tree.leaves) == 36
    assert np.array_equal(tree.demand[1:], h.observations)


def test_ms3_ten_years():
    tree = build_tree("MS3", history(10), 0, np.zeros(3, dtype=int))
    assert tree.num_nodes == 111
    leaves = tree.leaves
    assert len(leaves) == 100
    np.testing.assert_allclose(tree.prob[leaves], 0.01)


def test_ms3_cross_product_assignment():
    h = history(3)
    tree = build_tree("MS3", h, 2, np.zeros(3, dtype=int))
    month4 = h.observations[h.months == 4]
    for n in tree.children(0):
        assert np.array_equal(tree.demand[tree.children(n)], month4)


def test_ms3_same_year_pairing():
    h = history(4)
    tree = build_tree("MS3", h, 2, np.zeros(3, dtype=int), pairing="same-index")
    assert len(tree.leaves) == 4
    m3, m4 = h.observations[h.months == 3], h.observations[h.months == 4]
    for k, n in enumerate(tree.children(0)):
        assert np.array_equal(tree.demand[n], m3[k])
        assert np.array_equal(tree.demand[tree.children(n)[0]], m4[k])


def test_mp_tail_means():
    h = history(5)
    tree = build_tree("MP_N", h, 10, np.zeros(3, dtype=int), tail_length=3)
    assert tree.num_nodes == 16 and len(tree.leaves) == 5
    for offset in (2, 3):
        month = (10 + offset) % 12
        rows = [r for r, m in zip(h.observations.tolist(), h.months.tolist()) if m == month]
        mean = [sum(col) / len(col) for col in zip(*rows)]
        expected = [int(np.floor(v + 0.5)) for v in mean]
        nodes = np.flatnonzero(tree.stage == offset)
        assert len(nodes) == 5
        for n in nodes:
            assert tree.demand[n].tolist() == expected
    # tails inherit their leaf's probability
    np.testing.assert_allclose(tree.prob[tree.stage == 3], 0.2)


def test_labels_set_tail_length():
    h = history(3)
    assert build_tree("MP_3", h, 0, np.zeros(3, dtype=int)).depth == 3
    assert build_tree("MS3_4", h, 0, np.zeros(3, dtype=int)).depth == 4
    assert parse_kind("fosva") == ("TS", 0)
    assert parse_kind("DET_12") == ("DET", 12)
    with pytest.raises(ValueError):
        parse_kind("XYZ")


def test_det_chain():
    h = history(3)
    tree = build_tree("DET", h, 5, np.zeros(3, dtype=int), tail_length=4)
    assert tree.is_chain and tree.num_nodes == 5
    np.testing.assert_allclose(tree.prob, 1.0)


def test_informationally_deterministic_ts():
    obs = np.tile([[7, 8]], (36, 1))
    tree = build_tree("TS", History(obs), 0, [1, 1])
    assert (tree.demand[1:] == [7, 8]).all()


@pytest.mark.parametrize("kind, tail", [("MP_N", 0), ("MS3_N", 1), ("DET", 0)])
def test_missing_tail_rejected(kind, tail):
    with pytest.raises(ValueError):
        build_tree(kind, history(2), 0, np.zeros(3, dtype=int), tail_length=tail)


def test_bad_inputs_rejected():
    with pytest.raises(ValueError, match="empty"):
        build_tree("TS", History(np.zeros((0, 2))), 0, [0, 0])
    with pytest.raises(ValueError, match="no observations"):
        build_tree("TS", History(np.zeros((3, 2)), start_month=0), 5, [0, 0])
    with pytest.raises(ValueError, match="root demand"):
        build_tree("TS", history(1), 0, [0])


def test_empirical_month_mean():
    obs = np.tile([[4, 5]], (24, 1))
    assert empirical_month_mean(History(obs), 3).tolist() == [4.0, 5.0]
    single = History(np.arange(24).reshape(12, 2))
    assert empirical_month_mean(single, 6).tolist() == [12.0, 13.0]
    big = generate_history(DemandModel(num_items=200), 10, np.random.default_rng(1))
    # Monte-Carlo check: mean over many items sits near 250 times the season factor
    assert empirical_month_mean(big, 7).mean() == pytest.approx(250 * 1.3, rel=0.03)
    with pytest.raises(ValueError):
        empirical_month_mean(History(np.zeros((2, 2))), 5)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["TS", "TS_NOS", "MP_2", "MP_4", "MS3", "MS3_3", "DET_3"]),
       st.integers(1, 4), st.integers(0, 11), st.integers(0, 10**6))
def test_tree_invariants(kind, years, month, seed):
    h = history(years, items=2, seed=seed)
    tree = build_tree(kind, h, month, np.zeros(2, dtype=int))
    tree.validate()
    for t in range(tree.depth + 1):
        assert abs(tree.prob[tree.stage == t].sum() - 1) < 1e-9
    expected = {"TS": years, "TS_NOS": 12 * years, "MS3": years ** 2, "DET": 1}
    base = parse_kind(kind)[0]
    leaves = expected.get(base, years ** 2 if base == "MS3_N" else years)
    assert len(tree.leaves) == leaves
    # beyond the stochastic stages every non-leaf has a single child
    stoch = {"TS": 1, "TS_NOS": 1, "MP_N": 1, "MS3": 2, "MS3_N": 2, "DET": 0}[base]
    for n in range(tree.num_nodes):
        if stoch <= tree.stage[n] < tree.depth:
            assert len(tree.children(n)) == 1
    assert all(tree.parent[n] < n for n in range(1, tree.num_nodes))


def test_validate_rejects_broken_trees():
    with pytest.raises(ValueError, match="mass"):
        ScenarioTree(parent=[-1, 0, 0], prob=[1, 0.5, 0.4], demand=[[0]] * 3, stage=[0, 1, 1], kind="TS").validate()
    with pytest.raises(ValueError, match="stage below"):
        ScenarioTree(parent=[-1, 0], prob=[1, 1], demand=[[0]] * 2, stage=[0, 2], kind="TS").validate()


def test_roundtrip(tmp_path):
    tree = build_tree("MS3_3", history(3), 9, np.array([1, 2, 3]))
    tree.save(tmp_path / "t.json")
    import json

    back = ScenarioTree.from_dict(json.loads((tmp_path / "t.json").read_text()))
    assert np.array_equal(back.demand, tree.demand) and np.array_equal(back.parent, tree.parent)
    assert back.root_month == 9 and back.month_of(3) == 0


def test_chain_tree():
    tree = chain_tree([[1], [2], [3]], root_month=11)
    tree.validate()
    assert tree.tail_length == 2 and tree.month_of(2) == 1


def test_trees_are_immutable():
    tree = build_tree("TS", history(2), 0, np.zeros(3, dtype=int))
    with pytest.raises(ValueError):
        tree.demand[0, 0] = 1
