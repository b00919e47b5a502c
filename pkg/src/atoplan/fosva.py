"""Separable concave piecewise-linear value of terminal component stock.

Each component ``i`` has sorted breakpoints ``u[0] = 0 < u[1] < ...`` and
non-increasing slopes ``v``; slope ``v[k]`` applies on ``[u[k], u[k+1])``
and the last slope continues past the final breakpoint. Slopes are learned
from finite differences of the two-stage optimal value with respect to the
starting inventory, smoothed and projected to stay monotone.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .demand import MONTHS, History
from .instance import Instance
from .optimizer import SolverConfig, build_two_stage
from .optimizer.backends import ValueSession
from .scenario import ScenarioTree, build_tree

log = logging.getLogger(__name__)


@dataclass
class ValueApprox:
    breakpoints: list[np.ndarray]
    slopes: list[np.ndarray]

    @classmethod
    def zero(cls, num_components: int) -> "ValueApprox":
        return cls([np.zeros(1) for _ in range(num_components)],
                   [np.zeros(1) for _ in range(num_components)])

    @property
    def num_components(self) -> int:
        return len(self.breakpoints)

    def validate(self) -> None:
        for i, (u, v) in enumerate(zip(self.breakpoints, self.slopes)):
            if len(u) != len(v) or u[0] != 0 or (np.diff(u) <= 0).any():
                raise ValueError(f"component {i}: malformed breakpoints")
            if (np.diff(v) > 1e-9).any():
                raise ValueError(f"component {i}: slopes are not non-increasing")

    def component_value(self, i: int, level: float) -> float:
        return float(_piecewise(self.breakpoints[i], self.slopes[i], level))

    def to_dict(self) -> dict:
        return {"breakpoints": [u.tolist() for u in self.breakpoints],
                "slopes": [v.tolist() for v in self.slopes]}

    @classmethod
    def from_dict(cls, data: dict) -> "ValueApprox":
        return cls([np.asarray(u, dtype=float) for u in data["breakpoints"]],
                   [np.asarray(v, dtype=float) for v in data["slopes"]])


def _piecewise(u: np.ndarray, v: np.ndarray, level: float) -> float:
    widths = np.diff(np.append(u, np.inf))
    fill = np.clip(level - u, 0.0, widths)
    return float(v @ fill)


def evaluate(va: ValueApprox, inventory) -> float:
    inventory = np.asarray(inventory, dtype=float)
    if (inventory < 0).any():
        raise ValueError("inventory must be non-negative")
    return sum(_piecewise(u, v, q) for u, v, q in zip(va.breakpoints, va.slopes, inventory))


def update_approx(u, v, point: float, forward: float, backward: float, alpha: float):
    """One smoothed slope update at ``point``; returns new ``(u, v)``.

    ``forward`` is the slope measured to the right of ``point`` and
    ``backward`` the slope to its left. The point becomes a breakpoint whose
    right segment starts with the slope of the segment it split. Both
    estimates are blended with that slope by ``alpha``; segments up to and
    including the right one are raised to the left estimate, then segments
    from the right one onward are capped at the right estimate, which keeps
    the slopes non-increasing whatever the inputs.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    pos = int(np.searchsorted(u, point))
    if pos < len(u) and u[pos] == point:
        u, v = u.copy(), v.copy()
    else:
        u = np.insert(u, pos, point)
        v = np.insert(v, pos, v[pos - 1])
    base = v[pos]
    nu_left = (1.0 - alpha) * base + alpha * backward
    nu_right = (1.0 - alpha) * base + alpha * forward
    v[: pos + 1] = np.maximum(v[: pos + 1], nu_left)
    v[pos:] = np.minimum(v[pos:], nu_right)
    return u, v


def finite_difference_slopes(ts_oracle: Callable, point, eps: float, i: int, base_value=None):
    """Forward and backward difference quotients of ``ts_oracle`` along component ``i``.

    When ``point[i] < eps`` the backward quotient would need negative
    inventory and the forward one is reused.
    """
    point = np.asarray(point)
    if base_value is None:
        base_value = ts_oracle(point)
    step = np.zeros_like(point)
    step[i] = eps
    forward = (ts_oracle(point + step) - base_value) / eps
    if point[i] < eps:
        return forward, forward
    backward = (base_value - ts_oracle(point - step)) / eps
    return forward, backward


@dataclass(frozen=True)
class FosvaConfig:
    iterations: int = 50
    inventory_cap: float | np.ndarray | None = None  # None: cap_multiple x mean requirement
    cap_multiple: float = 3.0
    perturbation: int = 1
    smoothing: float = 0.5
    seed: int = 0
    per_month: bool = True
    relative_gap: float = 1e-5
    integrality: str = "none"

    def __post_init__(self):
        if self.perturbation <= 0:
            raise ValueError("perturbation must be positive")
        if not 0.0 < self.smoothing <= 1.0:
            raise ValueError("smoothing must lie in (0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


@dataclass
class TrainingStats:
    solves: int = 0
    per_month: dict = field(default_factory=dict)


class TwoStageOracle:
    """Optimal two-stage value as a function of the starting inventory.

    The model is built once; each call only changes the right-hand side of
    the root inventory balance.
    """

    def __init__(self, inst: Instance, tree: ScenarioTree, solver: SolverConfig,
                 integrality: str = "none"):
        zero = np.zeros(inst.num_components, dtype=np.int64)
        self.model = build_two_stage(inst, tree, zero, integrality)
        group = next(g for g in self.model.row_groups if g.name == "bal")
        self._root_rows = np.arange(group.start, group.start + inst.num_components)
        self.solver = solver
        self.session = ValueSession(self.model, solver)
        self.calls = 0

    def __call__(self, inventory) -> float:
        inv = np.asarray(inventory, dtype=float)
        if inv.shape != self._root_rows.shape or (inv < 0).any():
            raise ValueError("inventory must be a non-negative vector per component")
        self.calls += 1
        return self.session.objective(self._root_rows, inv, inv)


def training_trees(history: History, num_items: int | None = None) -> dict[int, ScenarioTree]:
    """Two-stage value-estimation trees keyed by the planning month.

    The stock valued by the plan made in month ``m`` is what is left after
    assembly in month ``m + 1``; its worth is estimated by a two-stage model
    rooted at ``m + 1`` with nothing left to assemble there and the
    observations of ``m + 2`` as scenarios.
    """
    n = num_items or history.num_items
    zero = np.zeros(n, dtype=np.int64)
    return {m: build_tree("TS", history, (m + 1) % MONTHS, zero) for m in range(MONTHS)}


def pooled_training_tree(history: History) -> ScenarioTree:
    zero = np.zeros(history.num_items, dtype=np.int64)
    return build_tree("TS_NOS", history, 0, zero)


def train_single(
    inst: Instance,
    tree: ScenarioTree,
    cfg: FosvaConfig,
    inventory_cap,
    rng: np.random.Generator,
    solver: SolverConfig,
    stats: TrainingStats | None = None,
) -> ValueApprox:
    nI = inst.num_components
    cap = np.broadcast_to(np.asarray(inventory_cap, dtype=float), (nI,))
    oracle = TwoStageOracle(inst, tree, solver, cfg.integrality)
    va = ValueApprox.zero(nI)
    eps = cfg.perturbation
    for _ in range(cfg.iterations):
        point = rng.integers(0, np.floor(cap).astype(np.int64) + 1)
        base = oracle(point)
        for i in range(nI):
            fwd, bwd = finite_difference_slopes(oracle, point, eps, i, base_value=base)
            va.breakpoints[i], va.slopes[i] = update_approx(
                va.breakpoints[i], va.slopes[i], float(point[i]), fwd, bwd, cfg.smoothing
            )
    if stats is not None:
        stats.solves += oracle.calls
    return va


def default_inventory_cap(inst: Instance, mean_demand, multiple: float = 3.0) -> np.ndarray:
    return multiple * (inst.gozinto @ np.asarray(mean_demand, dtype=float))


def train(
    inst: Instance,
    tree_source: Mapping[int, ScenarioTree] | ScenarioTree,
    cfg: FosvaConfig,
    mean_demand=None,
    solver: SolverConfig | None = None,
    stats: TrainingStats | None = None,
) -> "SeasonalValue":
    """Learn value approximations, one per planning month or a single pooled one.

    ``tree_source`` is either a month-keyed mapping of two-stage trees (see
    :func:`training_trees`) or a single tree used for every month.
    """
    solver = solver or SolverConfig(relative_gap=cfg.relative_gap)
    if cfg.inventory_cap is not None:
        cap = cfg.inventory_cap
    elif mean_demand is not None:
        cap = default_inventory_cap(inst, mean_demand, cfg.cap_multiple)
    else:
        raise ValueError("either inventory_cap or mean_demand is required")
    rng = np.random.default_rng(cfg.seed)
    stats = stats if stats is not None else TrainingStats()
    if isinstance(tree_source, ScenarioTree) or not cfg.per_month:
        tree = tree_source if isinstance(tree_source, ScenarioTree) else next(iter(tree_source.values()))
        va = train_single(inst, tree, cfg, cap, rng, solver, stats)
        return SeasonalValue({m: va for m in range(MONTHS)}, pooled=True)
    out = {}
    for m in range(MONTHS):
        before = stats.solves
        out[m] = train_single(inst, tree_source[m], cfg, cap, rng, solver, stats)
        stats.per_month[m] = stats.solves - before
        log.debug("month %d trained with %d solves", m, stats.per_month[m])
    return SeasonalValue(out, pooled=False)


@dataclass
class SeasonalValue:
    """Value approximations keyed by the calendar month of the plan."""

    by_month: dict[int, ValueApprox]
    pooled: bool = False

    def for_month(self, month: int) -> ValueApprox:
        return self.by_month[month % MONTHS]

    def to_dict(self) -> dict:
        if self.pooled:
            return {"pooled": True, "value": self.by_month[0].to_dict()}
        return {"pooled": False, "months": {str(m): va.to_dict() for m, va in self.by_month.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "SeasonalValue":
        if data.get("pooled"):
            va = ValueApprox.from_dict(data["value"])
            return cls({m: va for m in range(MONTHS)}, pooled=True)
        return cls({int(m): ValueApprox.from_dict(v) for m, v in data["months"].items()})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SeasonalValue":
        return cls.from_dict(json.loads(Path(path).read_text()))
