"""Scenario trees built directly from historical monthly observations.

Nodes are stored in depth-first pre-order (a parent always precedes its
children, siblings keep the order of the observations they come from).
Stage 0 is the root, i.e. the current month whose demand is already known.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .demand import MONTHS, History, round_half_away

KINDS = ("TS", "TS_NOS", "MP_N", "MS3", "MS3_N", "DET")


@dataclass(frozen=True)
class TreeNode:
    id: int
    parent: int | None
    prob: float
    demand: np.ndarray
    stage: int


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    parent: np.ndarray  # -1 for the root
    prob: np.ndarray  # unconditional probabilities
    demand: np.ndarray  # nodes x items
    stage: np.ndarray
    kind: str
    tail_length: int = 0
    root_month: int = 0

    def __post_init__(self):
        for name, dtype in (("parent", np.int64), ("prob", float), ("demand", np.int64), ("stage", np.int64)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_nodes(self) -> int:
        return len(self.parent)

    @property
    def num_items(self) -> int:
        return self.demand.shape[1]

    @property
    def depth(self) -> int:
        return int(self.stage.max())

    @property
    def nodes(self) -> list[TreeNode]:
        return [
            TreeNode(n, None if self.parent[n] < 0 else int(self.parent[n]), float(self.prob[n]),
                     self.demand[n], int(self.stage[n]))
            for n in range(self.num_nodes)
        ]

    def children(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.parent == n)

    @property
    def leaves(self) -> np.ndarray:
        has_child = np.zeros(self.num_nodes, dtype=bool)
        has_child[self.parent[self.parent >= 0]] = True
        return np.flatnonzero(~has_child)

    @property
    def is_chain(self) -> bool:
        return len(self.leaves) == 1

    @property
    def is_two_stage(self) -> bool:
        return self.depth == 1

    def month_of(self, n: int) -> int:
        return int((self.root_month + self.stage[n]) % MONTHS)

    def validate(self, atol: float = 1e-9) -> None:
        if self.parent[0] != -1 or abs(self.prob[0] - 1.0) > atol:
            raise ValueError("node 0 must be the root with probability 1")
        if (self.parent[1:] < 0).any() or (self.parent[1:] >= np.arange(1, self.num_nodes)).any():
            raise ValueError("parents must precede their children")
        if (self.prob <= 0).any() or (self.prob > 1 + atol).any():
            raise ValueError("node probabilities must lie in (0, 1]")
        if (self.stage[1:] != self.stage[self.parent[1:]] + 1).any():
            raise ValueError("every node must sit one stage below its parent")
        for t in range(self.depth + 1):
            mass = self.prob[self.stage == t].sum()
            if abs(mass - 1.0) > atol:
                raise ValueError(f"stage {t} carries probability mass {mass}")
        if (self.stage[self.leaves] != self.depth).any():
            raise ValueError("all leaves must share the last stage")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tail_length": self.tail_length,
            "root_month": self.root_month,
            "order": "depth-first pre-order",
            "nodes": [
                {"id": n, "parent": int(self.parent[n]), "stage": int(self.stage[n]),
                 "prob": float(self.prob[n]), "demand": self.demand[n].tolist()}
                for n in range(self.num_nodes)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioTree":
        nodes = data["nodes"]
        return cls(
            parent=[n["parent"] for n in nodes],
            prob=[n["prob"] for n in nodes],
            demand=[n["demand"] for n in nodes],
            stage=[n["stage"] for n in nodes],
            kind=data["kind"],
            tail_length=data.get("tail_length", 0),
            root_month=data.get("root_month", 0),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def parse_kind(name: str) -> tuple[str, int]:
    """``"MP_3"`` -> ``("MP_N", 3)``; ``"MS3"`` -> ``("MS3", 0)``."""
    name = name.strip().upper()
    if name in ("TS", "TS_NOS", "MS3", "FOSVA"):
        return ("TS" if name == "FOSVA" else name), 0
    m = re.fullmatch(r"(MP|MS3|DET)_(\d+)", name)
    if m:
        base = {"MP": "MP_N", "MS3": "MS3_N", "DET": "DET"}[m.group(1)]
        return base, int(m.group(2))
    if name in KINDS:
        return name, 0
    raise ValueError(f"unknown tree kind {name!r}")


def group_history_by_month(h: History) -> list[np.ndarray]:
    months = h.months
    return [h.observations[months == m] for m in range(MONTHS)]


def empirical_month_mean(history: History, month: int) -> np.ndarray:
    obs = history.observations[history.months == month % MONTHS]
    if len(obs) == 0:
        raise ValueError(f"no observations for month {month % MONTHS}")
    return obs.mean(axis=0)


def _assemble(root_demand, levels, kind, tail_length, root_month, pairing="cross") -> ScenarioTree:
    """Build a tree from per-stage option lists.

    Each entry of ``levels`` is an array ``(options, items)``; a node at
    stage ``t`` branches into every option of stage ``t + 1`` with uniform
    conditional probability. With ``pairing="same-index"`` a node whose
    own option index is ``k`` gets only option ``k`` of the next level
    (used for same-year pairing); single-option levels are shared tails.
    """
    parent, prob, demand, stage = [-1], [1.0], [np.asarray(root_demand, dtype=np.int64)], [0]

    def expand(node: int, t: int, p: float, idx: int) -> None:
        if t == len(levels):
            return
        opts = levels[t]
        if pairing == "same-index" and t > 0 and len(opts) > 1:
            choices = [idx]
        else:
            choices = range(len(opts))
        for k in choices:
            child = len(parent)
            cp = p / len(choices)
            parent.append(node)
            prob.append(cp)
            demand.append(opts[k])
            stage.append(t + 1)
            expand(child, t + 1, cp, k)

    expand(0, 0, 1.0, 0)
    tree = ScenarioTree(
        parent=parent, prob=prob, demand=np.vstack(demand), stage=stage,
        kind=kind, tail_length=tail_length, root_month=root_month % MONTHS,
    )
    tree.validate()
    return tree


def build_tree(
    kind: str,
    history: History,
    current_month: int,
    root_demand,
    tail_length: int = 0,
    pairing: str = "cross",
) -> ScenarioTree:
    """Scenario tree rooted at ``current_month`` with known ``root_demand``.

    ``tail_length`` counts future stages in total: ``MP_N`` has one
    stochastic stage plus ``tail_length - 1`` mean-demand stages,
    ``MS3_N`` two stochastic stages plus ``tail_length - 2``, and ``DET``
    is a chain of ``tail_length`` mean-demand nodes. ``kind`` also accepts
    labels such as ``"MP_3"`` or ``"MS3_4"``.
    """
    base, n = parse_kind(kind)
    if n:
        tail_length = n
    if len(history.observations) == 0:
        raise ValueError("history is empty")
    by_month = group_history_by_month(history)
    root_demand = np.asarray(root_demand, dtype=np.int64)
    if root_demand.shape != (history.num_items,):
        raise ValueError("root demand does not match the number of items")

    def obs(offset: int) -> np.ndarray:
        m = (current_month + offset) % MONTHS
        if len(by_month[m]) == 0:
            raise ValueError(f"no observations for month {m}")
        return by_month[m]

    def mean_level(offset: int) -> np.ndarray:
        return round_half_away(obs(offset).mean(axis=0))[None, :]

    if base == "TS":
        levels = [obs(1)]
    elif base == "TS_NOS":
        levels = [history.observations]
    elif base == "MS3":
        levels = [obs(1), obs(2)]
    elif base == "MP_N":
        if tail_length < 1:
            raise ValueError("MP_N needs tail_length >= 1")
        levels = [obs(1)] + [mean_level(k) for k in range(2, tail_length + 1)]
    elif base == "MS3_N":
        if tail_length < 2:
            raise ValueError("MS3_N needs tail_length >= 2")
        levels = [obs(1), obs(2)] + [mean_level(k) for k in range(3, tail_length + 1)]
    elif base == "DET":
        if tail_length < 1:
            raise ValueError("DET needs tail_length >= 1")
        levels = [mean_level(k) for k in range(1, tail_length + 1)]
    else:
        raise ValueError(f"unknown tree kind {kind!r}")
    if pairing not in ("cross", "same-index"):
        raise ValueError(f"unknown pairing {pairing!r}")
    if pairing == "same-index" and base in ("MS3", "MS3_N") and len(obs(1)) != len(obs(2)):
        raise ValueError("same-year pairing needs equally many observations per month")
    return _assemble(root_demand, levels, base, tail_length, current_month, pairing)


def chain_tree(demands, root_month: int = 0, kind: str = "DET") -> ScenarioTree:
    """Deterministic chain whose node ``t`` carries ``demands[t]`` (node 0 is the root)."""
    demands = np.asarray(demands, dtype=np.int64)
    n = len(demands)
    return ScenarioTree(
        parent=np.arange(-1, n - 1), prob=np.ones(n), demand=demands,
        stage=np.arange(n), kind=kind, tail_length=n - 1, root_month=root_month,
    )
