"""Rolling-horizon simulation of planning policies and the perfect-information benchmark.

Each simulated month follows the same event order as the planning models:
demand is revealed, items are assembled from the stock on hand (the previous
month's leftovers plus its production), unmet demand is lost, and new
components are produced for next month. Only the root decisions of each
solve are implemented.
"""

from __future__ import annotations

import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .demand import MONTHS, DemandModel, History, sample_demand_path
from .fosva import SeasonalValue
from .instance import Instance, default_initial_inventory
from .optimizer import (
    SolverConfig,
    SolverError,
    build_fosva,
    build_multistage,
    build_safety_stock,
    compute_ss_levels,
    solve,
)
from .scenario import build_tree, chain_tree

log = logging.getLogger(__name__)

PATH_STREAM = 0  # spawn-key prefix of the out-of-sample demand streams
POLICY_KINDS = ("FOSVA", "TS", "TS_NOS", "MP_N", "MS3", "MS3_N", "SS", "DET")

__all__ = [
    "MetricsReport",
    "Policy",
    "SimulationConfig",
    "SimulationRecord",
    "SimulationAborted",
    "compute_metrics",
    "default_initial_inventory",
    "make_policy",
    "policy_label",
    "perfect_information",
    "replication_rng",
    "run_experiment",
    "run_rolling_horizon",
]


class SimulationAborted(SolverError):
    """A solve failed mid-replication; carries the month and policy."""


# -- policies ----------------------------------------------------------------


@dataclass
class Policy:
    """A planning rule: which tree to build and which model to solve on it.

    ``integrality`` applies to every monthly solve; by default only the
    implemented root decisions are integer.
    """

    label: str
    kind: str
    tail_length: int = 0
    alpha: float | None = None
    levels: np.ndarray | None = None
    value: SeasonalValue | None = None
    ss_horizon: int = 12
    pairing: str = "cross"
    integrality: str = "root"
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "FOSVA" and self.value is None:
            raise ValueError("FOSVA policies need a trained value approximation")
        if self.kind == "SS" and (self.levels is None or self.alpha is None):
            raise ValueError("safety-stock policies need alpha and stock levels")
        if self.kind in ("MP_N", "DET") and self.tail_length < 1:
            raise ValueError(f"{self.kind} needs a tail length of at least 1")
        if self.kind == "MS3_N" and self.tail_length < 2:
            raise ValueError("MS3_N needs a tail length of at least 2")
        if self.kind == "SS" and self.ss_horizon < 1:
            raise ValueError("ss_horizon must be at least 1")

    def build_model(self, inst: Instance, history: History, month: int, root_demand, stock):
        """Model solved in calendar ``month`` with demand known and ``stock`` on hand."""
        if self.kind == "FOSVA":
            tree = build_tree("TS", history, month, root_demand)
            va = self.value.for_month(month)
            return build_fosva(inst, tree, va, stock, self.integrality)
        if self.kind == "SS":
            tree = build_tree("DET", history, month, root_demand, tail_length=self.ss_horizon)
            return build_safety_stock(inst, tree, self.levels, stock, self.integrality)
        tree = build_tree(self.kind, history, month, root_demand,
                          tail_length=self.tail_length, pairing=self.pairing)
        return build_multistage(inst, tree, stock, self.integrality)


def policy_label(label: str) -> str:
    """Canonical form of a policy label (``"ss(10)"`` -> ``"SS_10"``, ``"det"`` -> ``"DET_12"``)."""
    name = label.strip().upper()
    m = re.fullmatch(r"SS[_(]?(\d+(?:\.\d+)?)\)?", name)
    if m:
        return f"SS_{m.group(1)}"
    if name == "DET":
        return "DET_12"
    if name in ("FOSVA", "TS", "TS_NOS", "MS3") or re.fullmatch(r"(MP|MS3|DET)_\d+", name):
        return name
    raise ValueError(f"unknown policy label {label!r}")


def make_policy(
    label: str,
    inst: Instance | None = None,
    history: History | None = None,
    value: SeasonalValue | None = None,
    solver: SolverConfig | None = None,
    **options,
) -> Policy:
    """Policy from a label such as ``"TS"``, ``"MP_3"``, ``"MS3_4"``, ``"SS_10"`` or ``"FOSVA"``.

    Safety-stock labels also accept ``"SS(10)"``; their levels come from the
    in-sample ``history`` and the instance's bill of materials.
    """
    name = label.strip().upper()
    solver = solver or SolverConfig()
    m = re.fullmatch(r"SS[_(]?(\d+(?:\.\d+)?)\)?", name)
    if m:
        if inst is None or history is None:
            raise ValueError("safety-stock policies need the instance and the history")
        alpha = float(m.group(1))
        levels = compute_ss_levels(history, alpha, inst.gozinto)
        return Policy(f"SS_{m.group(1)}", "SS", alpha=alpha, levels=levels, solver=solver, **options)
    if name == "FOSVA":
        return Policy("FOSVA", "FOSVA", value=value, solver=solver, **options)
    if name in ("TS", "TS_NOS", "MS3"):
        return Policy(name, name, solver=solver, **options)
    if name == "DET":
        return Policy("DET_12", "DET", tail_length=12, solver=solver, **options)
    m = re.fullmatch(r"(MP|MS3|DET)_(\d+)", name)
    if m:
        kind = {"MP": "MP_N", "MS3": "MS3_N", "DET": "DET"}[m.group(1)]
        return Policy(name, kind, tail_length=int(m.group(2)), solver=solver, **options)
    raise ValueError(f"unknown policy label {label!r}")


# -- records -----------------------------------------------------------------


def _money(coef, qty) -> Fraction:
    """Exact value of ``coef @ qty`` for real coefficients and integer quantities."""
    return sum((Fraction(float(c)) * int(q) for c, q in zip(coef, qty) if q), Fraction(0))


@dataclass
class SimulationRecord:
    """Month-by-month flows of one policy on one demand path.

    ``available`` is the component stock before assembly, ``inventory`` the
    stock right after assembly (the quantity charged for holding).
    """

    policy: str
    start_month: int
    demand: np.ndarray
    assembly: np.ndarray
    lost_sales: np.ndarray
    production: np.ndarray
    available: np.ndarray
    inventory: np.ndarray
    revenue: np.ndarray
    penalty: np.ndarray
    holding: np.ndarray
    production_cost: np.ndarray
    profit: np.ndarray
    total_profit: float
    status: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    solve_seconds: list = field(default_factory=list)
    replication: int = 0

    @property
    def horizon(self) -> int:
        return len(self.demand)

    @property
    def average_inventory(self) -> float:
        """Post-assembly component units held, averaged over the months."""
        return float(self.inventory.sum(axis=1).mean())

    @property
    def average_carried_stock(self) -> float:
        """Component units carried into the next month (leftovers plus production), averaged."""
        return float((self.inventory + self.production).sum(axis=1).mean())

    @property
    def total_lost_sales(self) -> int:
        return int(self.lost_sales.sum())

    @classmethod
    def from_flows(cls, inst: Instance, policy: str, start_month: int, demand, assembly,
                   production, initial_inventory, **extra) -> "SimulationRecord":
        """Derive stock levels and money from the implemented decisions."""
        demand = np.asarray(demand, dtype=np.int64)
        assembly = np.asarray(assembly, dtype=np.int64)
        production = np.asarray(production, dtype=np.int64)
        T = len(demand)
        G = inst.gozinto.astype(np.int64)
        available = np.zeros_like(production)
        inventory = np.zeros_like(production)
        stock = np.asarray(initial_inventory, dtype=np.int64)
        for t in range(T):
            available[t] = stock
            inventory[t] = stock - G @ assembly[t]
            stock = inventory[t] + production[t]
        lost = demand - assembly
        money = {k: [] for k in ("revenue", "penalty", "holding", "production_cost", "profit")}
        total = Fraction(0)
        for t in range(T):
            parts = (_money(inst.price, assembly[t]), _money(inst.lost_sale_penalty, lost[t]),
                     _money(inst.holding_cost, inventory[t]), _money(inst.component_cost, production[t]))
            p = parts[0] - parts[1] - parts[2] - parts[3]
            total += p
            for key, v in zip(money, parts + (p,)):
                money[key].append(float(v))
        return cls(policy=policy, start_month=start_month, demand=demand, assembly=assembly,
                   lost_sales=lost, production=production, available=available,
                   inventory=inventory, total_profit=float(total),
                   **{k: np.asarray(v) for k, v in money.items()}, **extra)

    def replay(self, inst: Instance) -> list[str]:
        """Re-derive every identity of the record; returns the violations found."""
        bad = []
        G = inst.gozinto.astype(np.int64)
        if (self.assembly + self.lost_sales != self.demand).any():
            bad.append("assembly + lost sales differs from demand")
        if (self.assembly < 0).any() or (self.lost_sales < 0).any() or (self.production < 0).any():
            bad.append("negative assembly, lost sales or production")
        if (self.inventory < 0).any():
            bad.append("negative post-assembly inventory")
        for t in range(self.horizon):
            if (self.inventory[t] != self.available[t] - G @ self.assembly[t]).any():
                bad.append(f"month {t}: inventory recursion broken")
            if t and (self.available[t] != self.inventory[t - 1] + self.production[t - 1]).any():
                bad.append(f"month {t}: stock carried over incorrectly")
            load = inst.machine_time.T @ self.production[t]
            if (load > inst.capacity * (1 + 1e-9) + 1e-9).any():
                bad.append(f"month {t}: machine capacity exceeded")
        total = Fraction(0)
        for t in range(self.horizon):
            parts = (_money(inst.price, self.assembly[t]), _money(inst.lost_sale_penalty, self.lost_sales[t]),
                     _money(inst.holding_cost, self.inventory[t]), _money(inst.component_cost, self.production[t]))
            p = parts[0] - parts[1] - parts[2] - parts[3]
            stored = (self.revenue[t], self.penalty[t], self.holding[t], self.production_cost[t], self.profit[t])
            if any(float(v) != s for v, s in zip(parts + (p,), stored)):
                bad.append(f"month {t}: money flows do not match quantities")
            total += p
        if float(total) != self.total_profit:
            bad.append("total profit differs from the sum of monthly profits")
        return bad

    def period_rows(self) -> list[dict]:
        rows = []
        for t in range(self.horizon):
            rows.append({
                "policy": self.policy, "replication": self.replication, "period": t,
                "month": (self.start_month + t) % MONTHS,
                "demand": int(self.demand[t].sum()), "assembled": int(self.assembly[t].sum()),
                "lost_sales": int(self.lost_sales[t].sum()), "produced": int(self.production[t].sum()),
                "inventory": int(self.inventory[t].sum()),
                "revenue": self.revenue[t], "penalty": self.penalty[t], "holding": self.holding[t],
                "production_cost": self.production_cost[t], "profit": self.profit[t],
                "status": self.status[t] if t < len(self.status) else "",
            })
        return rows


# -- simulation --------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    horizon_months: int = 24
    replications: int = 10
    seed: int = 0
    initial_inventory_rule: str = "mean"  # mean | zero | instance
    workers: int = 1

    def __post_init__(self):
        if self.horizon_months < 1:
            raise ValueError("horizon_months must be at least 1")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.initial_inventory_rule not in ("mean", "zero", "instance"):
            raise ValueError("initial_inventory_rule must be mean, zero or instance")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Demand stream of one replication, independent of which policies run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(PATH_STREAM, replication)))


def resolve_initial_inventory(inst: Instance, rule: str, mean_demand=None) -> np.ndarray:
    if rule == "zero":
        return np.zeros(inst.num_components, dtype=np.int64)
    if rule == "instance":
        if inst.initial_inventory is None:
            raise ValueError("instance has no initial inventory")
        return np.asarray(inst.initial_inventory, dtype=np.int64)
    if mean_demand is None:
        raise ValueError("the mean rule needs the mean demand")
    return default_initial_inventory(inst, mean_demand)


def run_rolling_horizon(
    inst: Instance,
    policy: Policy,
    history: History,
    demand_path,
    initial_inventory,
    start_month: int | None = None,
    replication: int = 0,
) -> SimulationRecord:
    """Simulate ``policy`` along a realized demand path.

    The path starts in the calendar month following the history unless
    ``start_month`` is given. Trees only ever see the in-sample history and
    the demand of the current month.
    """
    demand_path = np.asarray(demand_path, dtype=np.int64)
    if demand_path.ndim != 2 or demand_path.shape[1] != inst.num_end_items:
        raise ValueError("demand path must be a months x items matrix")
    start = history.end_month if start_month is None else start_month % MONTHS
    stock = np.asarray(initial_inventory, dtype=np.int64)
    G = inst.gozinto.astype(np.int64)
    assembly, production, status, gaps, secs = [], [], [], [], []
    for t, d in enumerate(demand_path):
        month = (start + t) % MONTHS
        model = policy.build_model(inst, history, month, d, stock)
        t0 = time.perf_counter()
        try:
            sol = solve(model, policy.solver)
        except SolverError as exc:
            raise SimulationAborted(
                f"policy {policy.label}, replication {replication}, period {t} (month {month}): {exc}"
            ) from exc
        secs.append(time.perf_counter() - t0)
        y = np.asarray(sol.root_assembly, dtype=np.int64)
        x = np.asarray(sol.root_production, dtype=np.int64)
        assembly.append(y)
        production.append(x)
        status.append(sol.solver_status)
        gaps.append(sol.gap)
        stock = stock - G @ y + x
    return SimulationRecord.from_flows(
        inst, policy.label, start, demand_path, np.array(assembly), np.array(production),
        initial_inventory, status=status, gap=gaps, solve_seconds=secs, replication=replication,
    )


def perfect_information(
    inst: Instance,
    demand_path,
    initial_inventory,
    start_month: int = 0,
    solver: SolverConfig | None = None,
    replication: int = 0,
) -> SimulationRecord:
    """Optimal plan with the whole realized path known, solved in one integer model."""
    demand_path = np.asarray(demand_path, dtype=np.int64)
    chain = chain_tree(demand_path, start_month % MONTHS, kind="PI")
    model = build_multistage(inst, chain, initial_inventory, integrality="all")
    t0 = time.perf_counter()
    sol = solve(model, solver or SolverConfig())
    secs = time.perf_counter() - t0
    rec = SimulationRecord.from_flows(
        inst, "PI", start_month % MONTHS, demand_path, sol.block("y"), sol.block("x"),
        initial_inventory, status=[sol.solver_status] * len(demand_path),
        gap=[sol.gap] * len(demand_path), solve_seconds=[secs], replication=replication,
    )
    return rec


def run_experiment(
    inst: Instance,
    policies: list[Policy],
    history: History,
    demand_model: DemandModel,
    cfg: SimulationConfig,
    mean_demand=None,
    pi_solver: SolverConfig | None = None,
) -> tuple[dict[str, list[SimulationRecord]], list[SimulationRecord]]:
    """All policies on common demand paths, plus the benchmark per replication.

    Returns ``(records by policy label, benchmark records)``; list position is
    the replication index.
    """
    inv0 = resolve_initial_inventory(inst, cfg.initial_inventory_rule, mean_demand)
    start = history.end_month

    def one(rep: int):
        path = sample_demand_path(demand_model, cfg.horizon_months, replication_rng(cfg.seed, rep), start)
        pi = perfect_information(inst, path, inv0, start, pi_solver, rep)
        recs = {p.label: run_rolling_horizon(inst, p, history, path, inv0, start, rep) for p in policies}
        log.info("replication %d done", rep)
        return pi, recs

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(one, range(cfg.replications)))
    else:
        results = [one(r) for r in range(cfg.replications)]
    by_policy = {p.label: [res[1][p.label] for res in results] for p in policies}
    return by_policy, [res[0] for res in results]


# -- metrics -----------------------------------------------------------------


def _mean_ci(values, level: float = 0.95) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        return float(values.mean()), float("nan")
    half = stats.t.ppf(0.5 + level / 2, n - 1) * values.std(ddof=1) / np.sqrt(n)
    return float(values.mean()), float(half)


@dataclass
class MetricsReport:
    """One row per (configuration, policy) with means and 95% half-widths."""

    rows: list[dict]
    pool_mean_lost_sales: float

    def row(self, policy: str, config: str = "") -> dict:
        for r in self.rows:
            if r["policy"] == policy and r["config"] == config:
                return r
        raise KeyError((config, policy))

    def value(self, metric: str, policy: str, config: str = "") -> float:
        return self.row(policy, config)[metric]


INVENTORY_BASES = {"post_assembly": "average_inventory", "end_of_period": "average_carried_stock"}


def compute_metrics(records, pi_records, pool=None, inventory_basis: str = "post_assembly") -> MetricsReport:
    """Profit and inventory relative to the benchmark, and lost sales relative to the pool.

    ``records`` maps ``(config, policy)`` (or just ``policy``) to per-replication
    records; ``pi_records`` maps ``config`` to the matching benchmark records,
    or is a plain list when there is a single configuration. ``pool`` lists the
    keys whose lost sales define the reference mean; all keys by default.
    ``inventory_basis`` picks the stock compared with the benchmark: what is
    left right after assembly, or that plus the month's production.
    """
    if inventory_basis not in INVENTORY_BASES:
        raise ValueError(f"inventory_basis must be one of {sorted(INVENTORY_BASES)}")
    stock = INVENTORY_BASES[inventory_basis]
    if not records:
        raise ValueError("no records to summarise")
    norm = {(k if isinstance(k, tuple) else ("", k)): v for k, v in records.items()}
    pis = pi_records if isinstance(pi_records, dict) else {"": pi_records}
    pool_keys = list(norm) if pool is None else [(k if isinstance(k, tuple) else ("", k)) for k in pool]
    if not pool_keys:
        raise ValueError("the lost-sales pool is empty")
    pool_mean = float(np.mean([np.mean([r.total_lost_sales for r in norm[k]]) for k in pool_keys]))
    rows = []
    for (config, policy), recs in norm.items():
        pi = pis[config]
        if len(pi) != len(recs):
            raise ValueError(f"{config}/{policy}: replication counts differ from the benchmark")
        for r, b in zip(recs, pi):
            if not np.array_equal(r.demand, b.demand):
                raise ValueError(f"{config}/{policy}: demand path differs from its benchmark")
        profit = [100.0 * r.total_profit / b.total_profit for r, b in zip(recs, pi)]
        inv = [100.0 * getattr(r, stock) / getattr(b, stock) if getattr(b, stock) else np.nan
               for r, b in zip(recs, pi)]
        if pool_mean > 0:
            ls = [100.0 * (r.total_lost_sales - pool_mean) / pool_mean for r in recs]
        else:
            ls = [0.0 for _ in recs]
        p_mean, p_ci = _mean_ci(profit)
        i_mean, i_ci = _mean_ci(inv)
        l_mean, l_ci = _mean_ci(ls)
        rows.append({
            "config": config, "policy": policy, "replications": len(recs),
            "profit_pct": p_mean, "profit_pct_ci": p_ci,
            "inventory_pct": i_mean, "inventory_pct_ci": i_ci,
            "lost_sales_dev_pct": l_mean, "lost_sales_dev_pct_ci": l_ci,
            "mean_profit": float(np.mean([r.total_profit for r in recs])),
            "mean_lost_sales": float(np.mean([r.total_lost_sales for r in recs])),
        })
    return MetricsReport(rows, pool_mean)
