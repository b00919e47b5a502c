"""Deterministic-equivalent MILPs of the assemble-to-order planning problem.

Every node of the scenario tree owns four integer blocks: production ``x``,
post-assembly inventory ``I``, assembly ``y`` and lost sales ``l``. At each
node demand is observed first, then items are assembled from the inventory
inherited from the parent plus the parent's production, and finally new
components are produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..instance import Instance
from ..scenario import ScenarioTree
from .backends import SolverConfig, SolverError, run_backend
from .model import INF, MilpModel


class InfeasibleModelError(SolverError):
    pass


def _initial_inventory(inst: Instance, initial_inventory) -> np.ndarray:
    if initial_inventory is None:
        initial_inventory = inst.initial_inventory
    if initial_inventory is None:
        initial_inventory = np.zeros(inst.num_components, dtype=np.int64)
    inv = np.asarray(initial_inventory)
    if inv.shape != (inst.num_components,) or (inv < 0).any():
        raise ValueError("initial inventory must be a non-negative vector per component")
    return inv


INTEGRALITY = ("all", "root", "none")


def build_multistage(
    inst: Instance, tree: ScenarioTree, initial_inventory=None, integrality: str = "all"
) -> MilpModel:
    """Expected-profit MILP over all nodes of ``tree``.

    ``initial_inventory`` overrides the instance's own starting stock, which
    is how the rolling-horizon simulator and value training re-root models.
    ``integrality`` selects which nodes keep integer decisions: ``"all"``,
    only the here-and-now ``"root"`` (later nodes relaxed), or ``"none"``
    for the LP relaxation.
    """
    if integrality not in INTEGRALITY:
        raise ValueError(f"integrality must be one of {INTEGRALITY}")
    if inst.capacity is None:
        raise ValueError("instance capacities are not set")
    if tree.num_items != inst.num_end_items:
        raise ValueError(
            f"tree carries {tree.num_items} items, instance has {inst.num_end_items}"
        )
    inv0 = _initial_inventory(inst, initial_inventory)
    N, nI, nJ, nM = tree.num_nodes, inst.num_components, inst.num_end_items, inst.num_machines
    pi = tree.prob
    d = tree.demand.astype(float)

    model = MilpModel(name=f"ato_{tree.kind.lower()}")
    x = model.add_block("x", (N, nI))
    # I and l are integral whenever x and y are
    inv = model.add_block("I", (N, nI), implied=True)
    y = model.add_block("y", (N, nJ), ub=d)
    l = model.add_block("l", (N, nJ), ub=d, implied=True)

    model.set_objective(x, -pi[:, None] * inst.component_cost[None, :])
    model.set_objective(inv, -pi[:, None] * inst.holding_cost[None, :])
    model.set_objective(y, pi[:, None] * inst.price[None, :])
    model.set_objective(l, -pi[:, None] * inst.lost_sale_penalty[None, :])

    # capacity: sum_i T_im x_i^n <= L_m
    T = inst.machine_time
    ii, mm = np.nonzero(T)
    nodes = np.repeat(np.arange(N), len(ii))
    model.add_rows(
        "cap", (N, nM),
        rows=nodes * nM + np.tile(mm, N),
        cols=x[nodes, np.tile(ii, N)],
        vals=np.tile(T[ii, mm], N),
        lb=-INF, ub=np.tile(inst.capacity, N),
    )

    # inventory balance: I^n - I^p(n) - x^p(n) + G y^n = 0 ; I^0 + G y^0 = Ibar0
    G = inst.gozinto
    gi, gj = np.nonzero(G)
    rows, cols, vals = [], [], []
    all_n = np.arange(N)
    rows.append(np.repeat(all_n * nI, nI) + np.tile(np.arange(nI), N))
    cols.append(inv.ravel())
    vals.append(np.ones(N * nI))
    child = all_n[1:]
    par = tree.parent[1:]
    r_child = (child[:, None] * nI + np.arange(nI)[None, :]).ravel()
    rows += [r_child, r_child]
    cols += [inv[par].ravel(), x[par].ravel()]
    vals += [-np.ones(len(r_child)), -np.ones(len(r_child))]
    rn = np.repeat(all_n, len(gi))
    rows.append(rn * nI + np.tile(gi, N))
    cols.append(y[rn, np.tile(gj, N)])
    vals.append(np.tile(G[gi, gj], N).astype(float))
    rhs = np.zeros((N, nI))
    rhs[0] = inv0
    model.add_rows(
        "bal", (N, nI), np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
        lb=rhs.ravel(), ub=rhs.ravel(),
    )

    # demand split: y + l = d
    r = np.arange(N * nJ)
    model.add_rows(
        "dem", (N, nJ), np.concatenate([r, r]), np.concatenate([y.ravel(), l.ravel()]),
        np.ones(2 * N * nJ), lb=d.ravel(), ub=d.ravel(),
    )
    first_relaxed = {"all": N, "root": 1, "none": 0}[integrality]
    if first_relaxed < N:
        for block in (x, inv, y, l):
            model.set_integrality(block[first_relaxed:], False)
    model.meta.update(kind="multistage", tree_kind=tree.kind, num_nodes=N,
                      initial_inventory=inv0, gozinto=G, integrality=integrality)
    return model


def build_two_stage(
    inst: Instance, tree: ScenarioTree, initial_inventory=None, integrality: str = "all"
) -> MilpModel:
    if tree.depth != 1:
        raise ValueError("a two-stage model needs a tree of depth 1")
    model = build_multistage(inst, tree, initial_inventory, integrality)
    model.meta["kind"] = "two_stage"
    return model


def _check_value_approx(breakpoints, slopes, n_comp: int) -> None:
    if len(breakpoints) != n_comp or len(slopes) != n_comp:
        raise ValueError("value approximation must have one segment list per component")
    for i, (u, v) in enumerate(zip(breakpoints, slopes)):
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        if len(u) != len(v) or len(u) == 0:
            raise ValueError(f"component {i}: breakpoints and slopes must align")
        if u[0] != 0 or (np.diff(u) <= 0).any():
            raise ValueError(f"component {i}: breakpoints must start at 0 and increase")
        if (np.diff(v) > 1e-9).any():
            raise ValueError(f"component {i}: slopes must be non-increasing")


def build_fosva(
    inst: Instance, tree: ScenarioTree, va, initial_inventory=None, integrality: str = "all"
) -> MilpModel:
    """Two-stage model plus a concave piecewise-linear value of leftover stock.

    ``va`` exposes ``breakpoints`` and ``slopes`` (one array per component);
    slope ``k`` applies from breakpoint ``k`` to ``k + 1`` and the last slope
    extends without bound.
    """
    model = build_two_stage(inst, tree, initial_inventory, integrality)
    nI = inst.num_components
    _check_value_approx(va.breakpoints, va.slopes, nI)
    scen = tree.leaves
    S = len(scen)
    widths, slopes, owner = [], [], []
    for i in range(nI):
        u = np.asarray(va.breakpoints[i], dtype=float)
        widths.append(np.append(np.diff(u), INF))
        slopes.append(np.asarray(va.slopes[i], dtype=float))
        owner.append(np.full(len(u), i))
    widths, slopes, owner = map(np.concatenate, (widths, slopes, owner))
    K = len(widths)
    m = model.add_block("m", (S, K), integer=False, ub=np.broadcast_to(widths, (S, K)))
    model.set_objective(m, tree.prob[scen][:, None] * slopes[None, :])

    inv = model.blocks["I"].index
    rows = np.concatenate([np.arange(S * nI), (np.arange(S)[:, None] * nI + owner[None, :]).ravel()])
    cols = np.concatenate([inv[scen].ravel(), m.ravel()])
    vals = np.concatenate([np.ones(S * nI), -np.ones(S * K)])
    model.add_rows("val", (S, nI), rows, cols, vals, lb=0.0, ub=0.0)
    model.meta.update(kind="fosva", segment_owner=owner)
    return model


def compute_ss_levels(history, alpha: float, gozinto) -> np.ndarray:
    """Component stock floors from the empirical ``alpha``-percentile of item demand.

    All observations are pooled regardless of month; ``alpha = 0`` means no
    floor at all. Fractional requirements are rounded up.
    """
    if not 0 <= alpha <= 100:
        raise ValueError("alpha must lie in [0, 100]")
    G = np.asarray(gozinto)
    if alpha == 0:
        return np.zeros(G.shape[0], dtype=np.int64)
    obs = history.observations if hasattr(history, "observations") else np.asarray(history)
    q = np.percentile(obs, alpha, axis=0)
    return np.ceil(G @ q - 1e-9).astype(np.int64)


def build_safety_stock(
    inst: Instance, chain: ScenarioTree, levels, initial_inventory=None, integrality: str = "all"
) -> MilpModel:
    """Deterministic chain model with ``I^n >= levels`` at every non-root node."""
    if not chain.is_chain:
        raise ValueError("safety-stock models need a chain (branching 1 everywhere)")
    levels = np.asarray(levels, dtype=float)
    if levels.shape != (inst.num_components,) or (levels < 0).any():
        raise ValueError("need one non-negative safety level per component")
    model = build_multistage(inst, chain, initial_inventory, integrality)
    inv = model.blocks["I"].index
    if chain.num_nodes > 1:
        model.set_bounds(inv[1:], lb=np.broadcast_to(levels, inv[1:].shape))
    model.meta.update(kind="safety_stock", levels=levels)

    # stock at node 1 is at most Ibar0 + x^0, so the deficit must fit capacity
    inv0 = model.meta["initial_inventory"]
    deficit = np.maximum(levels - inv0, 0.0)
    load = inst.machine_time.T @ deficit
    over = np.flatnonzero(load > inst.capacity + 1e-9)
    if chain.num_nodes > 1 and len(over):
        model.meta["infeasibility_hint"] = (
            f"node 1: raising stock to the safety levels needs {load[over[0]]:.1f} time units "
            f"on machine {over[0]}, capacity is {inst.capacity[over[0]]:.1f}"
        )
    return model


@dataclass
class PlanSolution:
    objective_value: float
    root_production: np.ndarray
    root_assembly: np.ndarray
    root_lost_sales: np.ndarray
    root_inventory_after_assembly: np.ndarray
    solver_status: str
    gap: float | None
    values: np.ndarray
    model: MilpModel

    def block(self, role: str) -> np.ndarray:
        """Solution values of one variable block, as integers when the whole block is."""
        vals = self.model.value_of(self.values, role)
        integ = self.model.arrays()[6][self.model.blocks[role].index]
        if integ.all():
            return np.rint(vals).astype(np.int64)
        return vals

    def root(self, role: str) -> np.ndarray:
        vals = self.model.value_of(self.values, role)[0]
        integ = self.model.arrays()[6][self.model.blocks[role].index[0]]
        if integ.all():
            return np.rint(vals).astype(np.int64)
        return vals


def solve(model: MilpModel, cfg: SolverConfig | None = None) -> PlanSolution:
    cfg = cfg or SolverConfig()
    raw = run_backend(model, cfg)
    if raw.status == "infeasible":
        hint = model.meta.get("infeasibility_hint", "no diagnostic available")
        err = InfeasibleModelError(f"model {model.name} is infeasible: {hint}")
        err.status = "infeasible"
        raise err
    if raw.status == "unbounded":
        raise SolverError(f"model {model.name} is unbounded")
    bad = model.violations(raw.values)
    if bad:
        raise SolverError("solution fails constraint replay: " + "; ".join(bad[:5]))
    sol = PlanSolution(
        objective_value=raw.objective,
        root_production=None, root_assembly=None, root_lost_sales=None,
        root_inventory_after_assembly=None,
        solver_status=raw.status, gap=raw.gap, values=raw.values, model=model,
    )
    sol.root_production = sol.root("x")
    sol.root_assembly = sol.root("y")
    sol.root_lost_sales = sol.root("l")
    sol.root_inventory_after_assembly = sol.root("I")
    return sol
