"""Technological and economic data of an assemble-to-order instance.

Components are indexed by ``i`` (rows of the gozinto matrix), end items by
``j`` (columns), machines by ``m``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np


class InstanceConfigError(ValueError):
    """Raised when an instance configuration cannot be realized."""


@dataclass(frozen=True)
class InstanceConfig:
    num_components: int = 60
    num_end_items: int = 35
    num_machines: int = 5
    tightness: float = 1.3
    margin_class_shares: tuple[float, float, float] = (0.4, 0.3, 0.3)
    margin_ranges: tuple[tuple[float, float], ...] = ((0.05, 0.2), (0.2, 0.4), (0.4, 0.6))
    component_cost_range: tuple[float, float] = (1.0, 50.0)
    family_sizes: tuple[int, ...] = (12, 7, 5, 3, 3)
    family_common_components: int = 2
    family_component_counts: tuple[int, ...] = (11, 17, 12, 6, 9)
    num_outcast_items: int = 5
    outcast_inclusion_prob: float = 0.2
    gozinto_quantity_range: tuple[int, int] = (1, 9)
    lost_sale_factor: float = 0.2
    holding_factor: float = 0.1
    machine_time_range: tuple[float, float] = (0.5, 1.5)
    mean_demand_sample_size: int = 5000

    def validate(self) -> None:
        if abs(sum(self.margin_class_shares) - 1.0) > 1e-9:
            raise InstanceConfigError("margin_class_shares must sum to 1")
        if len(self.margin_ranges) != len(self.margin_class_shares):
            raise InstanceConfigError("one margin range per margin class is required")
        if len(self.family_sizes) != len(self.family_component_counts):
            raise InstanceConfigError(
                "family_sizes and family_component_counts must have equal length"
            )
        if sum(self.family_sizes) + self.num_outcast_items != self.num_end_items:
            raise InstanceConfigError(
                f"families hold {sum(self.family_sizes)} items plus "
                f"{self.num_outcast_items} outcasts, expected {self.num_end_items}"
            )
        if sum(self.family_component_counts) > self.num_components:
            raise InstanceConfigError(
                f"families need {sum(self.family_component_counts)} components but "
                f"only {self.num_components} exist"
            )
        for r, (n_items, n_comp) in enumerate(
            zip(self.family_sizes, self.family_component_counts)
        ):
            if n_items < 1:
                raise InstanceConfigError(f"family {r} has no items")
            if n_comp < self.family_common_components:
                raise InstanceConfigError(
                    f"family {r} has {n_comp} components, fewer than the "
                    f"{self.family_common_components} common ones"
                )
            specific = n_comp - self.family_common_components
            if n_items > max(1, specific + specific * (specific - 1) // 2):
                raise InstanceConfigError(
                    f"family {r}: {specific} specific component(s) cannot give "
                    f"{n_items} items distinct patterns"
                )
        if self.num_outcast_items and self.num_components < 1:
            raise InstanceConfigError("outcast items need at least one component")
        lo, hi = self.gozinto_quantity_range
        if lo < 1 or hi < lo:
            raise InstanceConfigError("gozinto_quantity_range must be 1 <= lo <= hi")
        if not 0.0 < self.outcast_inclusion_prob <= 1.0:
            raise InstanceConfigError("outcast_inclusion_prob must lie in (0, 1]")
        if min(self.component_cost_range) <= 0 or min(self.machine_time_range) <= 0:
            raise InstanceConfigError("costs and machine times must be strictly positive")
        if any(lo_m <= 0 for lo_m, _ in self.margin_ranges):
            raise InstanceConfigError("margins must be strictly positive")

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceConfig":
        kw = dict(data)
        for key in (
            "margin_class_shares",
            "component_cost_range",
            "family_sizes",
            "family_component_counts",
            "gozinto_quantity_range",
            "machine_time_range",
        ):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "margin_ranges" in kw:
            kw["margin_ranges"] = tuple(tuple(r) for r in kw["margin_ranges"])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable instance data; arrays are read-only after construction."""

    component_cost: np.ndarray  # C_i
    price: np.ndarray  # P_j
    lost_sale_penalty: np.ndarray  # K_j
    holding_cost: np.ndarray  # H_i
    machine_time: np.ndarray  # T_im, components x machines
    gozinto: np.ndarray  # G_ij, components x items
    capacity: np.ndarray | None = None  # L_m
    initial_inventory: np.ndarray | None = None  # Ibar0_i
    family_of_item: np.ndarray | None = None
    margin: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in (
            "component_cost",
            "price",
            "lost_sale_penalty",
            "holding_cost",
            "machine_time",
            "gozinto",
            "capacity",
            "initial_inventory",
            "family_of_item",
            "margin",
        ):
            arr = getattr(self, name)
            if arr is None:
                continue
            dtype = np.int64 if name in ("gozinto", "initial_inventory", "family_of_item") else float
            arr = np.array(arr, dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n_comp, n_items = self.gozinto.shape
        if self.component_cost.shape != (n_comp,) or self.holding_cost.shape != (n_comp,):
            raise ValueError("component vectors do not match the gozinto rows")
        if self.price.shape != (n_items,) or self.lost_sale_penalty.shape != (n_items,):
            raise ValueError("item vectors do not match the gozinto columns")
        if self.machine_time.ndim != 2 or self.machine_time.shape[0] != n_comp:
            raise ValueError("machine_time must be components x machines")
        if (self.gozinto < 0).any():
            raise ValueError("gozinto entries must be non-negative")
        if self.capacity is not None and self.capacity.shape != (self.num_machines,):
            raise ValueError("one capacity per machine is required")
        if self.initial_inventory is not None:
            if self.initial_inventory.shape != (n_comp,) or (self.initial_inventory < 0).any():
                raise ValueError("initial inventory must be a non-negative vector per component")

    @property
    def num_components(self) -> int:
        return self.gozinto.shape[0]

    @property
    def num_end_items(self) -> int:
        return self.gozinto.shape[1]

    @property
    def num_machines(self) -> int:
        return self.machine_time.shape[1]

    @property
    def item_cost(self) -> np.ndarray:
        return self.gozinto.T @ self.component_cost

    def with_capacity(self, capacity) -> "Instance":
        return replace(self, capacity=np.asarray(capacity, dtype=float))

    def with_initial_inventory(self, inventory) -> "Instance":
        return replace(self, initial_inventory=np.asarray(inventory, dtype=np.int64))

    def to_dict(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        return cls(**{k: v for k, v in data.items()})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _margin_classes(n_items: int, shares, rng: np.random.Generator) -> np.ndarray:
    bounds = np.rint(np.cumsum(shares) * n_items).astype(int)
    bounds[-1] = n_items
    classes = np.searchsorted(bounds, np.arange(n_items), side="right")
    return classes[rng.permutation(n_items)]


def _family_block(
    n_items: int,
    n_comp: int,
    n_common: int,
    qty_range: tuple[int, int],
    rng: np.random.Generator,
) -> np.ndarray:
    """Gozinto block of one standard family (components x items)."""
    lo, hi = qty_range
    mask = np.zeros((n_comp, n_items), dtype=bool)
    mask[:n_common, :] = True
    specific = np.arange(n_common, n_comp)
    for k, comp in enumerate(specific):
        mask[comp, k % n_items] = True
    # items left without a specific component get a distinct random pair
    seen = {tuple(mask[n_common:, j]) for j in range(min(len(specific), n_items))}
    # a lone item may rely on the common components only
    for j in range(len(specific), n_items if n_items > 1 else 0):
        while True:
            pick = rng.choice(specific, size=2, replace=False)
            col = np.zeros(len(specific), dtype=bool)
            col[pick - n_common] = True
            if tuple(col) not in seen:
                break
        seen.add(tuple(col))
        mask[n_common:, j] = col
    qty = rng.integers(lo, hi + 1, size=mask.shape)
    return np.where(mask, qty, 0)


def generate_instance(cfg: InstanceConfig, seed) -> Instance:
    """Sample an instance with block-diagonal family structure plus outcast rows.

    Capacities are left unset; see :func:`compute_capacities`. Raises
    :class:`InstanceConfigError` for layouts that cannot be realized.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    n_comp, n_items = cfg.num_components, cfg.num_end_items
    lo_q, hi_q = cfg.gozinto_quantity_range

    cost = rng.uniform(*cfg.component_cost_range, size=n_comp)
    gozinto = np.zeros((n_comp, n_items), dtype=np.int64)
    family_of_item = np.empty(n_items, dtype=np.int64)
    row = col = 0
    for r, (n_fam_items, n_fam_comp) in enumerate(
        zip(cfg.family_sizes, cfg.family_component_counts)
    ):
        block = _family_block(
            n_fam_items, n_fam_comp, cfg.family_common_components, (lo_q, hi_q), rng
        )
        gozinto[row : row + n_fam_comp, col : col + n_fam_items] = block
        family_of_item[col : col + n_fam_items] = r
        row += n_fam_comp
        col += n_fam_items
    n_fam = len(cfg.family_sizes)
    for k in range(cfg.num_outcast_items):
        j = col + k
        include = np.zeros(n_comp, dtype=bool)
        while not include.any():
            include = rng.random(n_comp) < cfg.outcast_inclusion_prob
        gozinto[:, j] = np.where(include, rng.integers(lo_q, hi_q + 1, size=n_comp), 0)
        family_of_item[j] = n_fam + k

    classes = _margin_classes(n_items, cfg.margin_class_shares, rng)
    ranges = np.asarray(cfg.margin_ranges, dtype=float)
    margin = rng.uniform(ranges[classes, 0], ranges[classes, 1])
    item_cost = gozinto.T @ cost
    price = item_cost * (1.0 + margin)
    machine_time = rng.uniform(*cfg.machine_time_range, size=(n_comp, cfg.num_machines))

    return Instance(
        component_cost=cost,
        price=price,
        lost_sale_penalty=cfg.lost_sale_factor * price,
        holding_cost=cfg.holding_factor * cost,
        machine_time=machine_time,
        gozinto=gozinto,
        family_of_item=family_of_item,
        margin=margin,
        meta={"family_sizes": list(cfg.family_sizes), "num_outcast_items": cfg.num_outcast_items},
    )


def compute_capacities(inst: Instance, gamma: float, mean_demand) -> np.ndarray:
    """Machine availability ``gamma * T^T (G dbar)`` for average demand ``dbar``."""
    if gamma < 0:
        raise ValueError("tightness factor must be non-negative")
    mean_demand = np.asarray(mean_demand, dtype=float)
    if (mean_demand < 0).any():
        raise ValueError("mean demand must be non-negative")
    requirement = inst.gozinto @ mean_demand
    return gamma * (inst.machine_time.T @ requirement)


def default_initial_inventory(inst: Instance, mean_demand) -> np.ndarray:
    """One average period of component requirement, rounded to whole pieces."""
    req = inst.gozinto @ np.asarray(mean_demand, dtype=float)
    return np.floor(req + 0.5).astype(np.int64)
