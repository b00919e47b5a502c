"""End-to-end experiment grid: instance, histories, value training and simulation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import STREAMS, ExperimentConfig, stream
from .demand import (
    DemandModel,
    History,
    demand_model_for_instance,
    estimate_mean_demand,
    generate_history,
    sample_demand_path,
)
from .fosva import SeasonalValue, TrainingStats, train, training_trees
from .instance import Instance, compute_capacities, generate_instance
from .simulator import (
    MetricsReport,
    SimulationRecord,
    compute_metrics,
    make_policy,
    perfect_information,
    policy_label,
    replication_rng,
    resolve_initial_inventory,
    run_rolling_horizon,
)

log = logging.getLogger(__name__)


def config_label(years: int, gamma: float) -> str:
    return f"{int(years)}y_g{gamma:.2f}"


@dataclass
class Setting:
    """Instance without capacities, its demand model and the estimated mean demand."""

    instance: Instance
    demand_model: DemandModel
    mean_demand: np.ndarray

    def instance_for(self, gamma: float) -> Instance:
        return self.instance.with_capacity(compute_capacities(self.instance, gamma, self.mean_demand))


def prepare(cfg: ExperimentConfig) -> Setting:
    if cfg.instance_path is not None:
        inst = Instance.load(cfg.instance_path)
    else:
        seed = cfg.instance_seed
        if seed is None:
            seed = np.random.SeedSequence(cfg.seed, spawn_key=(STREAMS["instance"],))
        inst = generate_instance(cfg.instance, seed)
    dm = demand_model_for_instance(
        inst, cfg.demand.get("correlation_mode", "independent"), cfg.base_demand, cfg.season,
        rng=stream(cfg.seed, "demand_model"), zeta=cfg.demand.get("zeta"),
    )
    dbar = estimate_mean_demand(dm, cfg.instance.mean_demand_sample_size, stream(cfg.seed, "mean_demand"))
    return Setting(inst, dm, dbar)


def history_for(cfg: ExperimentConfig, setting: Setting, years: int) -> History:
    return generate_history(setting.demand_model, int(years), stream(cfg.seed, "history", int(years)))


def train_value(cfg: ExperimentConfig, setting: Setting, inst: Instance, history: History,
                years: int, gamma_index: int, stats: TrainingStats | None = None) -> SeasonalValue:
    seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(STREAMS["fosva"], int(years), gamma_index, cfg.fosva.seed))
               .generate_state(1)[0])
    fcfg = replace(cfg.fosva, seed=seed)
    return train(inst, training_trees(history), fcfg, setting.mean_demand, stats=stats)


@dataclass
class GridResult:
    records: dict[tuple[str, str], list[SimulationRecord]] = field(default_factory=dict)
    benchmark: dict[str, list[SimulationRecord]] = field(default_factory=dict)
    values: dict[str, SeasonalValue] = field(default_factory=dict)
    training: dict[str, TrainingStats] = field(default_factory=dict)
    metrics: MetricsReport | None = None

    @property
    def configs(self) -> list[str]:
        return list(self.benchmark)


def run_grid(cfg: ExperimentConfig, artifacts_dir=None, setting: Setting | None = None) -> GridResult:
    """Simulate every configured policy on every (history length, tightness) pair.

    Demand paths depend only on the master seed and the replication, so all
    policies and all grid points see the same paths. When ``artifacts_dir``
    holds histories or trained values from earlier subcommands they are
    reused; otherwise they are generated and written there.
    """
    setting = setting or prepare(cfg)
    sim = cfg.simulation
    art = Path(artifacts_dir) if artifacts_dir is not None else None
    result = GridResult()
    for years in cfg.years:
        hist = None
        if art is not None and (art / f"history_{years}y.csv").exists():
            hist = History.from_csv(art / f"history_{years}y.csv")
        if hist is None:
            hist = history_for(cfg, setting, years)
            if art is not None:
                hist.to_csv(art / f"history_{years}y.csv")
        start = hist.end_month
        for gi, gamma in enumerate(cfg.gammas):
            label = config_label(years, gamma)
            inst = setting.instance_for(gamma)
            inv0 = resolve_initial_inventory(inst, sim.initial_inventory_rule, setting.mean_demand)
            value = None
            if any(p.upper() == "FOSVA" for p in cfg.policies):
                path = art / f"fosva_{label}.json" if art is not None else None
                if path is not None and path.exists():
                    value = SeasonalValue.load(path)
                else:
                    stats = TrainingStats()
                    value = train_value(cfg, setting, inst, hist, years, gi, stats)
                    result.training[label] = stats
                    if path is not None:
                        value.save(path)
                result.values[label] = value
            policies = [
                make_policy(p, inst, hist, value, cfg.solver, ss_horizon=cfg.ss_horizon,
                            integrality=cfg.integrality)
                for p in cfg.policies
            ]

            def one(rep, inst=inst, inv0=inv0, hist=hist, start=start, policies=policies):
                demand = sample_demand_path(setting.demand_model, sim.horizon_months,
                                            replication_rng(cfg.seed, rep), start)
                pi = perfect_information(inst, demand, inv0, start, cfg.solver, rep)
                return pi, [run_rolling_horizon(inst, p, hist, demand, inv0, start, rep) for p in policies]

            if sim.workers > 1:
                with ThreadPoolExecutor(sim.workers) as ex:
                    outs = list(ex.map(one, range(sim.replications)))
            else:
                outs = [one(rep) for rep in range(sim.replications)]
            result.benchmark[label] = [o[0] for o in outs]
            for k, p in enumerate(policies):
                result.records[(label, p.label)] = [o[1][k] for o in outs]
            log.info("finished %s", label)
    pool = [(c, policy_label(p)) for c in result.configs for p in cfg.pool]
    result.metrics = compute_metrics(result.records, result.benchmark, pool=pool,
                                     inventory_basis=cfg.inventory_basis)
    return result
