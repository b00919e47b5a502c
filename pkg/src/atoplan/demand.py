"""Seasonal, bimodal end-item demand with optional within-family correlation.

Continuous draws are rounded half away from zero and clamped at zero, so all
emitted demands are non-negative integers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MONTHS = 12

SEASONALITY = (1.0, 1.1, 0.9, 0.8, 1.0, 0.8, 1.2, 1.3, 1.2, 1.0, 0.8, 0.9)

# Realized disaggregation weights (percent) of the reference layout with
# family sizes (12, 7, 5, 3, 3).
REFERENCE_FAMILY_WEIGHTS = (
    (8.45, 1.40, 5.63, 16.90, 5.63, 11.26, 14.08, 5.63, 8.45, 4.22, 7.04, 11.26),
    (26.92, 3.84, 3.84, 19.23, 11.53, 7.69, 26.92),
    (12.5, 25.0, 25.0, 12.5, 25.0),
    (25.0, 25.0, 50.0),
    (42.85, 14.28, 42.85),
)


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class BimodalParams:
    mu1: float = 300.0
    mu2: float = 50.0
    sigma1: float = 50.0
    sigma2: float = 15.0
    p: float = 0.8

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("standard deviations must be non-negative")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("mixing weight p must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return self.p * self.mu1 + (1.0 - self.p) * self.mu2


@dataclass(frozen=True)
class SeasonProfile:
    factors: tuple[float, ...] = SEASONALITY

    def __post_init__(self):
        if len(self.factors) != MONTHS:
            raise ValueError("a season profile needs 12 monthly factors")
        if min(self.factors) <= 0:
            raise ValueError("seasonal factors must be positive")

    def __getitem__(self, month: int) -> float:
        return self.factors[month % MONTHS]


def bimodal_draw(
    params: BimodalParams,
    size,
    rng: np.random.Generator,
    mean_scale=1.0,
    std_scale=1.0,
) -> np.ndarray:
    """Continuous mixture draws; ``mean_scale``/``std_scale`` broadcast against ``size``."""
    first = rng.random(size) < params.p
    mu = np.where(first, params.mu1, params.mu2) * mean_scale
    sd = np.where(first, params.sigma1, params.sigma2) * std_scale
    return mu + sd * rng.standard_normal(size)


@dataclass(frozen=True, eq=False)
class DemandModel:
    """Demand generator for ``num_items`` end items grouped into families.

    ``family_of_item[j]`` is the family index of item ``j``; singleton
    families (outcast items) carry weight 1. In ``"independent"`` mode the
    family layout and weights are ignored.
    """

    num_items: int
    base: BimodalParams = field(default_factory=BimodalParams)
    season: SeasonProfile = field(default_factory=SeasonProfile)
    correlation_mode: str = "independent"
    family_of_item: np.ndarray | None = None
    weights: np.ndarray | None = None
    dirichlet_params: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.correlation_mode not in ("independent", "family"):
            raise ValueError(f"unknown correlation mode {self.correlation_mode!r}")
        fam = self.family_of_item
        if fam is None:
            fam = np.arange(self.num_items)
        fam = np.asarray(fam, dtype=np.int64)
        if fam.shape != (self.num_items,):
            raise ValueError("family_of_item must have one entry per item")
        object.__setattr__(self, "family_of_item", fam)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.num_items,) or (w <= 0).any():
                raise ValueError("weights must be positive, one per item")
            sums = np.bincount(fam, weights=w)
            present = np.bincount(fam) > 0
            if not np.allclose(sums[present], 1.0, atol=1e-9):
                raise ValueError("weights must sum to 1 within each family")
            object.__setattr__(self, "weights", w)
        elif self.correlation_mode == "family":
            raise ValueError("family-correlated demand needs disaggregation weights")

    @property
    def family_sizes(self) -> np.ndarray:
        return np.bincount(self.family_of_item)

    def to_dict(self) -> dict:
        return {
            "num_items": self.num_items,
            "base": vars(self.base),
            "season": list(self.season.factors),
            "correlation_mode": self.correlation_mode,
            "family_of_item": self.family_of_item.tolist(),
            "weights": None if self.weights is None else self.weights.tolist(),
            "dirichlet_params": None
            if self.dirichlet_params is None
            else [list(z) for z in self.dirichlet_params],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DemandModel":
        return cls(
            num_items=data["num_items"],
            base=BimodalParams(**data.get("base", {})),
            season=SeasonProfile(tuple(data.get("season", SEASONALITY))),
            correlation_mode=data.get("correlation_mode", "independent"),
            family_of_item=data.get("family_of_item"),
            weights=data.get("weights"),
            dirichlet_params=None
            if data.get("dirichlet_params") is None
            else tuple(tuple(z) for z in data["dirichlet_params"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "DemandModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def draw_family_weights(zeta, rng: np.random.Generator) -> np.ndarray:
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if (zeta <= 0).any():
        raise ValueError("Dirichlet parameters must be positive")
    if zeta.size == 1:
        return np.ones(1)
    w = rng.dirichlet(zeta)
    # draws can underflow to exactly 0 for tiny zeta
    w = np.maximum(w, np.finfo(float).tiny)
    return w / w.sum()


def family_weights(
    family_of_item,
    rng: np.random.Generator | None = None,
    zeta=None,
    use_reference: bool = True,
) -> np.ndarray:
    """Disaggregation weights for every item.

    The reference percentages are used when the family sizes match that
    layout (and ``use_reference``); otherwise each multi-item family draws
    once from a Dirichlet with parameters ``zeta[r]`` (default all ones).
    """
    fam = np.asarray(family_of_item, dtype=np.int64)
    sizes = np.bincount(fam)
    weights = np.ones(len(fam))
    ref_sizes = [len(r) for r in REFERENCE_FAMILY_WEIGHTS]
    multi = [r for r in range(len(sizes)) if sizes[r] > 1]
    if use_reference and zeta is None and [sizes[r] for r in multi] == ref_sizes:
        for r, pct in zip(multi, REFERENCE_FAMILY_WEIGHTS):
            w = np.asarray(pct)
            weights[fam == r] = w / w.sum()
        return weights
    if rng is None:
        rng = np.random.default_rng()
    for r in multi:
        z = np.ones(sizes[r]) if zeta is None else np.asarray(zeta[r], dtype=float)
        weights[fam == r] = draw_family_weights(z, rng)
    return weights


def continuous_demand(model: DemandModel, months, rng, with_family_totals: bool = False):
    """Pre-rounding demand, shape ``(len(months), num_items)``.

    In family mode each family total is drawn once and split by the item
    weights, so item values of a family sum to the total exactly; pass
    ``with_family_totals`` to also get those totals.
    """
    months = np.asarray(months, dtype=np.int64) % MONTHS
    scale = np.asarray([model.season[m] for m in months])[:, None]
    n = len(months)
    if model.correlation_mode == "independent":
        raw = bimodal_draw(model.base, (n, model.num_items), rng, scale, scale)
        return (raw, None) if with_family_totals else raw
    sizes = model.family_sizes
    fam_total = bimodal_draw(
        model.base, (n, len(sizes)), rng, scale * sizes, scale * np.sqrt(sizes)
    )
    raw = fam_total[:, model.family_of_item] * model.weights
    return (raw, fam_total) if with_family_totals else raw


def disaggregate(family_totals, family_of_item, weights) -> np.ndarray:
    """Integer item demand from family totals: ``round(w_j * F_r)``, clamped at 0."""
    F = np.asarray(family_totals, dtype=float)
    items = F[..., np.asarray(family_of_item)] * np.asarray(weights, dtype=float)
    return np.maximum(round_half_away(items), 0)


def _check_month(month: int) -> None:
    if not 0 <= month < MONTHS:
        raise ValueError(f"month index must be in 0..11, got {month}")


def sample_months(model: DemandModel, months, rng: np.random.Generator) -> np.ndarray:
    """Integer demand matrix, one row per requested calendar month."""
    months = np.asarray(months, dtype=np.int64) % MONTHS
    raw = continuous_demand(model, months, rng)
    return np.maximum(round_half_away(raw), 0)


def sample_month_independent(model: DemandModel, month: int, rng) -> np.ndarray:
    _check_month(month)
    if model.correlation_mode != "independent":
        raise ValueError("model is family-correlated")
    return sample_months(model, [month], rng)[0]


def sample_month_correlated(model: DemandModel, month: int, rng) -> np.ndarray:
    _check_month(month)
    if model.correlation_mode != "family":
        raise ValueError("model is not family-correlated")
    return sample_months(model, [month], rng)[0]


def sample_month(model: DemandModel, month: int, rng) -> np.ndarray:
    _check_month(month)
    return sample_months(model, [month], rng)[0]


@dataclass(frozen=True, eq=False)
class History:
    """Monthly demand observations; row ``t`` belongs to calendar month ``(start_month + t) % 12``."""

    observations: np.ndarray
    start_month: int = 0

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=np.int64)
        if obs.ndim != 2:
            raise ValueError("observations must be a months x items matrix")
        if (obs < 0).any():
            raise ValueError("demand observations must be non-negative")
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)

    @property
    def months(self) -> np.ndarray:
        return (self.start_month + np.arange(len(self.observations))) % MONTHS

    @property
    def num_items(self) -> int:
        return self.observations.shape[1]

    @property
    def end_month(self) -> int:
        """Calendar month following the last observation."""
        return int((self.start_month + len(self.observations)) % MONTHS)

    def to_csv(self, path) -> None:
        header = "month," + ",".join(f"item_{j}" for j in range(self.num_items))
        rows = np.column_stack([self.months, self.observations])
        np.savetxt(path, rows, fmt="%d", delimiter=",", header=header, comments="")

    @classmethod
    def from_csv(cls, path) -> "History":
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        return cls(data[:, 1:], start_month=int(data[0, 0]))

    def to_dict(self) -> dict:
        return {"start_month": self.start_month, "observations": self.observations.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "History":
        return cls(np.asarray(data["observations"]), int(data.get("start_month", 0)))


def generate_history(
    model: DemandModel, years: int, rng: np.random.Generator, start_month: int = 0
) -> History:
    if years < 1:
        raise ValueError("at least one year of history is required")
    months = (start_month + np.arange(MONTHS * years)) % MONTHS
    return History(sample_months(model, months, rng), start_month)


def estimate_mean_demand(model: DemandModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Average of ``n`` monthly draws taken cyclically over the calendar."""
    if n < 1:
        raise ValueError("n must be positive")
    return sample_months(model, np.arange(n) % MONTHS, rng).mean(axis=0)


def sample_demand_path(
    model: DemandModel, months: int, rng: np.random.Generator, start_month: int = 0
) -> np.ndarray:
    return sample_months(model, (start_month + np.arange(months)) % MONTHS, rng)


def demand_model_for_instance(
    inst,
    correlation_mode: str = "independent",
    base: BimodalParams | None = None,
    season: SeasonProfile | None = None,
    rng: np.random.Generator | None = None,
    zeta=None,
) -> DemandModel:
    """Demand model whose family layout follows the instance's families."""
    fam = inst.family_of_item
    if fam is None:
        fam = np.arange(inst.num_end_items)
    weights = None
    if correlation_mode == "family":
        weights = family_weights(fam, rng=rng, zeta=zeta)
    return DemandModel(
        num_items=inst.num_end_items,
        base=base or BimodalParams(),
        season=season or SeasonProfile(),
        correlation_mode=correlation_mode,
        family_of_item=fam,
        weights=weights,
        dirichlet_params=None if zeta is None else tuple(tuple(z) for z in zeta),
    )
