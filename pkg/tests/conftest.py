import itertools

import numpy as np
import pytest

from atoplan.demand import demand_model_for_instance, estimate_mean_demand, generate_history
from atoplan.instance import Instance, InstanceConfig, compute_capacities, default_initial_inventory, generate_instance
from atoplan.scenario import ScenarioTree

# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


SMALL = InstanceConfig(
    num_components=18, num_end_items=10, num_machines=2,
    family_sizes=(4, 3, 2), family_component_counts=(6, 5, 4), num_outcast_items=1,
)


def small_setting(seed=1, gamma=1.3, years=3):
    inst = generate_instance(SMALL, seed)
    dm = demand_model_for_instance(inst)
    rng = np.random.default_rng(seed)
    dbar = estimate_mean_demand(dm, 2000, rng)
    inst = inst.with_capacity(compute_capacities(inst, gamma, dbar))
    inst = inst.with_initial_inventory(default_initial_inventory(inst, dbar))
    return inst, dm, dbar, generate_history(dm, years, rng)


@pytest.fixture(scope="session")
def small():
    return small_setting()


def micro_instance(rng, n_comp=None, n_items=None):
    """Integer-data instance small enough for exhaustive enumeration."""
    n_comp = n_comp or int(rng.integers(1, 3))
    n_items = n_items or int(rng.integers(1, 3))
    G = rng.integers(0, 3, size=(n_comp, n_items))
    for j in range(n_items):
        if G[:, j].sum() == 0:
            G[rng.integers(n_comp), j] = 1
    C = rng.integers(1, 6, size=n_comp).astype(float)
    P = G.T @ C + rng.integers(1, 8, size=n_items)
    return Instance(
        component_cost=C, price=P, lost_sale_penalty=rng.integers(0, 4, size=n_items).astype(float),
        holding_cost=rng.integers(0, 2, size=n_comp).astype(float),
        machine_time=rng.integers(1, 3, size=(n_comp, 1)).astype(float),
        gozinto=G, capacity=[float(rng.integers(1, 7))],
        initial_inventory=rng.integers(0, 4, size=n_comp),
    )


def micro_tree(rng, n_items, n_scen=None):
    n_scen = n_scen or int(rng.integers(1, 4))
    d0 = rng.integers(0, 4, size=n_items)
    ds = rng.integers(0, 4, size=(n_scen, n_items))
    return ScenarioTree(
        parent=[-1] + [0] * n_scen, prob=[1.0] + [1.0 / n_scen] * n_scen,
        demand=np.vstack([d0, ds]), stage=[0] + [1] * n_scen, kind="TS", tail_length=1,
    )


def _grid(upper):
    return np.array(list(itertools.product(*[range(int(u) + 1) for u in upper])), dtype=np.int64).reshape(-1, len(upper))


def enumerate_two_stage(inst: Instance, tree: ScenarioTree, initial_inventory=None) -> float:
    """Best expected profit over all integer plans, by brute force.

    Production levels range over everything the single machine allows.
    Given the root plan the scenarios decouple, so each one is maximised
    over its own assembly and production grid.
    """
    inv0 = np.asarray(inst.initial_inventory if initial_inventory is None else initial_inventory)
    G, C, H, P, K = inst.gozinto, inst.component_cost, inst.holding_cost, inst.price, inst.lost_sale_penalty
    T, L = inst.machine_time[:, 0], inst.capacity[0]
    xmax = np.floor(L / T).astype(int)
    X = _grid(xmax)
    X = X[X @ T <= L + 1e-9]
    d0 = tree.demand[0]
    best = -np.inf
    leaves = tree.leaves
    for y0 in _grid(d0):
        I0 = inv0 - G @ y0
        if (I0 < 0).any():
            continue
        root_val = P @ y0 - K @ (d0 - y0) - H @ I0
        for x0 in X:
            total = root_val - C @ x0
            avail = I0 + x0
            for s in leaves:
                ds = tree.demand[s]
                Y = _grid(ds)
                Is = avail[None, :] - Y @ G.T
                ok = (Is >= 0).all(axis=1)
                vals = Y @ P - (ds[None, :] - Y) @ K - Is @ H
                # leaf production only costs money; still searched over its full range
                leaf_x = (-(X @ C)).max()
                total += tree.prob[s] * (vals[ok].max() + leaf_x)
            best = max(best, total)
    return float(best)
