"""Experiment configuration stored as a single JSON document.

Every field has a default, so ``{}`` is a valid configuration describing the
full canonical grid. Example with the documented keys::

    {
      "seed": 0,
      "instance": {"num_components": 60, "num_end_items": 35},  # InstanceConfig fields
      "instance_path": null,          # JSON written by generate-instance, overrides "instance"
      "instance_seed": null,          # defaults to "seed"
      "demand": {"correlation_mode": "independent", "base": {...}, "season": [...]},
      "years": [3, 5, 10],            # in-sample history lengths
      "gammas": [1.0, 1.1, 1.2, 1.3], # capacity tightness levels
      "policies": ["FOSVA", "TS", "TS_NOS", "MP_2", "MP_3", "MP_4", "MS3", "MS3_3", "MS3_4"],
      "lost_sales_pool": null,        # labels defining the lost-sales reference; null = non-SS policies
      "fosva": {"iterations": 50, "smoothing": 0.5, "perturbation": 1, ...},
      "solver": {"time_limit": 120, "relative_gap": 1e-4, "threads": 1, "backend": "highs"},
      "simulation": {"horizon_months": 24, "replications": 10, "initial_inventory_rule": "mean"},
      "integrality": "root",          # integer nodes in monthly solves: all | root | none
      "ss_horizon": 12,               # future months of the safety-stock chain
      "inventory_basis": "post_assembly",  # or end_of_period (leftovers plus production)
      "output_dir": "out"
    }

Tail lengths of ``MP_n`` must lie in 1..24, of ``MS3_n`` in 2..24, and
safety-stock quantiles ``SS_a`` in 0..100.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .demand import BimodalParams, SeasonProfile
from .fosva import FosvaConfig
from .instance import InstanceConfig, InstanceConfigError
from .optimizer import SolverConfig
from .simulator import SimulationConfig

DEFAULT_POLICIES = ("FOSVA", "TS", "TS_NOS", "MP_2", "MP_3", "MP_4", "MS3", "MS3_3", "MS3_4")

# purpose codes of the independent random streams derived from the master seed
STREAMS = {"instance": 1, "demand_model": 2, "mean_demand": 3, "history": 4, "fosva": 5}


class ConfigError(ValueError):
    pass


def stream(seed: int, purpose: str, *ids: int) -> np.random.Generator:
    """Random stream for one purpose; adding policies or grid points never shifts others."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[purpose], *ids)))


def _check_policy(label: str) -> None:
    name = label.strip().upper()
    if name in ("FOSVA", "TS", "TS_NOS", "MS3", "DET"):
        return
    m = re.fullmatch(r"(MP|MS3|DET)_(\d+)", name)
    if m:
        n, lo = int(m.group(2)), 2 if m.group(1) == "MS3" else 1
        if not lo <= n <= 24:
            raise ConfigError(f"policy {label}: tail length must lie in {lo}..24")
        return
    m = re.fullmatch(r"SS[_(]?(\d+(?:\.\d+)?)\)?", name)
    if m:
        if not 0 <= float(m.group(1)) <= 100:
            raise ConfigError(f"policy {label}: quantile must lie in 0..100")
        return
    raise ConfigError(f"unknown policy {label!r}")


@dataclass
class ExperimentConfig:
    seed: int = 0
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    instance_path: str | None = None
    instance_seed: int | None = None
    demand: dict = field(default_factory=dict)
    years: tuple[int, ...] = (3, 5, 10)
    gammas: tuple[float, ...] = (1.0, 1.1, 1.2, 1.3)
    policies: tuple[str, ...] = DEFAULT_POLICIES
    lost_sales_pool: tuple[str, ...] | None = None
    fosva: FosvaConfig = field(default_factory=FosvaConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    integrality: str = "root"
    ss_horizon: int = 12
    inventory_basis: str = "post_assembly"
    output_dir: str = "out"

    def validate(self) -> None:
        try:
            self.instance.validate()
        except InstanceConfigError as exc:
            raise ConfigError(f"instance: {exc}") from exc
        if self.instance_path is not None and not Path(self.instance_path).exists():
            raise ConfigError(f"instance_path {self.instance_path} does not exist")
        if not self.years or any(int(y) < 1 for y in self.years):
            raise ConfigError("years must list positive history lengths")
        if not self.gammas or any(g < 0 for g in self.gammas):
            raise ConfigError("gammas must list non-negative tightness values")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for p in self.policies:
            _check_policy(p)
        if len({p.upper() for p in self.policies}) != len(self.policies):
            raise ConfigError("policy labels must be unique")
        if self.lost_sales_pool is not None:
            unknown = set(self.lost_sales_pool) - set(self.policies)
            if unknown or not self.lost_sales_pool:
                raise ConfigError(f"lost_sales_pool must name configured policies, got {sorted(unknown)}")
        if self.integrality not in ("all", "root", "none"):
            raise ConfigError("integrality must be all, root or none")
        if self.ss_horizon < 1:
            raise ConfigError("ss_horizon must be at least 1")
        if self.inventory_basis not in ("post_assembly", "end_of_period"):
            raise ConfigError("inventory_basis must be post_assembly or end_of_period")
        mode = self.demand.get("correlation_mode", "independent")
        if mode not in ("independent", "family"):
            raise ConfigError(f"unknown correlation mode {mode!r}")

    @property
    def base_demand(self) -> BimodalParams:
        return BimodalParams(**self.demand.get("base", {}))

    @property
    def season(self) -> SeasonProfile:
        return SeasonProfile(tuple(self.demand["season"])) if "season" in self.demand else SeasonProfile()

    @property
    def pool(self) -> list[str]:
        if self.lost_sales_pool is not None:
            return list(self.lost_sales_pool)
        main = [p for p in self.policies if not p.upper().startswith("SS")]
        return main or list(self.policies)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "__dataclass_fields__"):
                v = asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        if isinstance(out["fosva"].get("inventory_cap"), np.ndarray):
            out["fosva"]["inventory_cap"] = out["fosva"]["inventory_cap"].tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kw = dict(data)
        try:
            if "instance" in kw:
                kw["instance"] = InstanceConfig.from_dict(kw["instance"] or {})
            for key, typ in (("fosva", FosvaConfig), ("solver", SolverConfig), ("simulation", SimulationConfig)):
                if key in kw:
                    kw[key] = typ(**(kw[key] or {}))
            for key in ("years", "gammas", "policies", "lost_sales_pool"):
                if kw.get(key) is not None:
                    kw[key] = tuple(kw[key])
            cfg = cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; identical configs hash identically."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, seed=None, threads=None, output_dir=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if threads is not None:
            # concurrency goes to replications; each solve stays single-threaded
            cfg = replace(cfg, simulation=replace(cfg.simulation, workers=threads),
                          solver=replace(cfg.solver, threads=1))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg
