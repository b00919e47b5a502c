"""Solver backends. Each takes the assembled arrays of a :class:`MilpModel`."""

from __future__ import annotations

import importlib.util
from dataclasses import dataclass

import numpy as np

from .model import MilpModel


class SolverError(RuntimeError):
    pass


class BackendUnavailable(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    time_limit: float = 120.0
    relative_gap: float = 1e-4
    threads: int = 1
    backend: str = "highs"

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if not 0.0 <= self.relative_gap < 1.0:
            raise ValueError("relative_gap must lie in [0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class RawResult:
    status: str  # optimal | gap-limit | time-limit | infeasible | unbounded
    values: np.ndarray | None
    objective: float | None
    gap: float | None


def _finish(model: MilpModel, x, integ, status, gap) -> RawResult:
    x = np.asarray(x, dtype=float)
    x[integ] = np.round(x[integ])
    return RawResult(status, x, model.objective_value(x), gap)


def _highs_lp(model: MilpModel, solve_int):
    import highspy
    from scipy import sparse

    c, A, rlb, rub, lb, ub, _ = model.arrays()
    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_vars
    lp.num_row_ = model.num_rows
    lp.col_cost_ = -c
    lp.col_lower_ = np.where(np.isinf(lb), -inf, lb)
    lp.col_upper_ = np.where(np.isinf(ub), inf, ub)
    lp.row_lower_ = np.where(np.isinf(rlb), -inf, rlb)
    lp.row_upper_ = np.where(np.isinf(rub), inf, rub)
    Ac = sparse.csc_matrix(A)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = Ac.indptr
    lp.a_matrix_.index_ = Ac.indices
    lp.a_matrix_.value_ = Ac.data
    if solve_int.any():
        lp.integrality_ = [
            highspy.HighsVarType.kInteger if v else highspy.HighsVarType.kContinuous
            for v in solve_int
        ]
    return lp


def _highs_session(model: MilpModel, cfg: SolverConfig, solve_int):
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(cfg.time_limit))
    h.setOptionValue("mip_rel_gap", float(cfg.relative_gap))
    h.setOptionValue("threads", int(cfg.threads))
    h.setOptionValue("random_seed", 0)
    h.passModel(_highs_lp(model, solve_int))
    return h


def _highspy(model: MilpModel, cfg: SolverConfig) -> RawResult:
    import highspy

    integ = model.arrays()[6]
    solve_int = integ & ~model.relaxable()
    h = _highs_session(model, cfg, solve_int)
    h.run()
    ms = h.getModelStatus()
    S = highspy.HighsModelStatus
    info = h.getInfo()
    gap = float(info.mip_gap) if solve_int.any() else 0.0
    if ms == S.kInfeasible:
        return RawResult("infeasible", None, None, None)
    if ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
        return RawResult("unbounded", None, None, None)
    if ms == S.kOptimal:
        status = "optimal" if gap <= 1e-9 else "gap-limit"
    elif ms == S.kTimeLimit:
        status = "time-limit"
    else:
        raise SolverError(f"HiGHS ended with status {h.modelStatusToString(ms)}")
    if info.primal_solution_status != 2:
        raise SolverError(f"HiGHS found no feasible solution ({h.modelStatusToString(ms)})")
    return _finish(model, h.getSolution().col_value, integ, status, gap)


class ValueSession:
    """Repeated solves of one model that differ only in some row bounds.

    With HiGHS available the solver object is kept alive so that each
    re-solve starts from the previous basis; otherwise every call goes
    through :func:`run_backend`. Only the optimal objective is returned.
    """

    def __init__(self, model: MilpModel, cfg: SolverConfig):
        self.model = model
        self.cfg = cfg
        self._highs = None
        if cfg.backend in ("highs", "highspy") and importlib.util.find_spec("highspy") is not None:
            integ = model.arrays()[6]
            self._highs = _highs_session(model, cfg, integ & ~model.relaxable())

    def objective(self, rows, lb, ub) -> float:
        rows = np.asarray(rows)
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        self.model.set_row_bounds(rows, lb, ub)
        if self._highs is None:
            res = run_backend(self.model, self.cfg)
            if res.values is None:
                raise SolverError(f"value solve ended as {res.status}")
            return res.objective
        import highspy

        h = self._highs
        h.changeRowsBounds(len(rows), rows.astype(np.int32), lb, ub)
        h.run()
        ms = h.getModelStatus()
        if ms != highspy.HighsModelStatus.kOptimal:
            raise SolverError(f"value solve ended as {h.modelStatusToString(ms)}")
        return -float(h.getInfo().objective_function_value)


def _scipy(model: MilpModel, cfg: SolverConfig) -> RawResult:
    from scipy.optimize import Bounds, LinearConstraint, milp

    c, A, rlb, rub, lb, ub, integ = model.arrays()
    constraints = [LinearConstraint(A, rlb, rub)] if model.num_rows else []
    res = milp(
        -c,
        constraints=constraints,
        integrality=(integ & ~model.relaxable()).astype(int),
        bounds=Bounds(lb, ub),
        options={"time_limit": cfg.time_limit, "mip_rel_gap": cfg.relative_gap, "disp": False},
    )
    gap = getattr(res, "mip_gap", None)
    if res.status == 0:
        status = "optimal" if not gap or gap <= 1e-9 else "gap-limit"
    elif res.status == 1:
        status = "time-limit"
    elif res.status == 2:
        return RawResult("infeasible", None, None, None)
    elif res.status == 3:
        return RawResult("unbounded", None, None, None)
    else:
        raise SolverError(f"HiGHS failed: {res.message}")
    if res.x is None:
        raise SolverError(f"HiGHS returned no solution ({res.message})")
    return _finish(model, res.x, integ, status, gap)


def _cbc(model: MilpModel, cfg: SolverConfig) -> RawResult:
    if importlib.util.find_spec("pulp") is None:
        raise BackendUnavailable("the 'cbc' backend needs the pulp package")
    import pulp

    c, A, rlb, rub, lb, ub, integ = model.arrays()
    solve_int = integ & ~model.relaxable()
    prob = pulp.LpProblem(model.name, pulp.LpMaximize)
    xs = [
        pulp.LpVariable(
            f"v{k}",
            lowBound=None if not np.isfinite(lb[k]) else float(lb[k]),
            upBound=None if not np.isfinite(ub[k]) else float(ub[k]),
            cat=pulp.LpInteger if solve_int[k] else pulp.LpContinuous,
        )
        for k in range(model.num_vars)
    ]
    prob += pulp.lpSum(float(c[k]) * xs[k] for k in np.flatnonzero(c))
    for r in range(model.num_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        expr = pulp.lpSum(float(v) * xs[k] for k, v in zip(A.indices[lo:hi], A.data[lo:hi]))
        if rlb[r] == rub[r]:
            prob += expr == float(rlb[r])
            continue
        if np.isfinite(rub[r]):
            prob += expr <= float(rub[r])
        if np.isfinite(rlb[r]):
            prob += expr >= float(rlb[r])
    solver = pulp.PULP_CBC_CMD(
        msg=False, timeLimit=cfg.time_limit, gapRel=cfg.relative_gap, threads=cfg.threads
    )
    prob.solve(solver)
    status = pulp.LpStatus[prob.status]
    if status == "Infeasible":
        return RawResult("infeasible", None, None, None)
    if status == "Unbounded":
        return RawResult("unbounded", None, None, None)
    if status != "Optimal":
        raise SolverError(f"CBC ended with status {status}")
    return _finish(model, [v.value() or 0.0 for v in xs], integ, "optimal", None)


def _highs(model: MilpModel, cfg: SolverConfig) -> RawResult:
    if importlib.util.find_spec("highspy") is not None:
        return _highspy(model, cfg)
    return _scipy(model, cfg)


BACKENDS = {"highs": _highs, "highspy": _highspy, "scipy": _scipy, "cbc": _cbc}


def available_backends() -> list[str]:
    out = ["highs", "scipy"]
    if importlib.util.find_spec("highspy") is not None:
        out.append("highspy")
    if importlib.util.find_spec("pulp") is not None:
        out.append("cbc")
    return out


def run_backend(model: MilpModel, cfg: SolverConfig) -> RawResult:
    if cfg.backend not in BACKENDS:
        raise BackendUnavailable(f"unknown solver backend {cfg.backend!r}")
    if cfg.backend not in available_backends():
        raise BackendUnavailable(f"solver backend {cfg.backend!r} is not installed")
    return BACKENDS[cfg.backend](model, cfg)
