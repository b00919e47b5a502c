"""CSV and figure output of simulation results.

Column names are stable:

``periods.csv``
    config, years, gamma, policy, replication, period, month, demand,
    assembled, lost_sales, produced, inventory, revenue, penalty, holding,
    production_cost, profit, status. Quantities are summed over items or
    components; the benchmark appears as policy ``PI``.
``summary.csv``
    config, years, gamma, policy, replications, profit_pct, profit_pct_ci,
    inventory_pct, inventory_pct_ci, lost_sales_dev_pct,
    lost_sales_dev_pct_ci, mean_profit, mean_lost_sales (``*_ci`` are 95%
    half-widths).
``profit_table.csv``, ``inventory_table.csv``, ``lost_sales_table.csv``, ``safety_stock_table.csv``
    one row per (years, gamma) and one column per policy; the first three
    exclude safety-stock policies, the last holds only those.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

PERIOD_COLUMNS = [
    "config", "years", "gamma", "policy", "replication", "period", "month", "demand",
    "assembled", "lost_sales", "produced", "inventory", "revenue", "penalty", "holding",
    "production_cost", "profit", "status",
]
SUMMARY_COLUMNS = [
    "config", "years", "gamma", "policy", "replications", "profit_pct", "profit_pct_ci",
    "inventory_pct", "inventory_pct_ci", "lost_sales_dev_pct", "lost_sales_dev_pct_ci",
    "mean_profit", "mean_lost_sales",
]
TABLES = {
    "profit_table.csv": ("profit_pct", False),
    "inventory_table.csv": ("inventory_pct", False),
    "lost_sales_table.csv": ("lost_sales_dev_pct", False),
    "safety_stock_table.csv": ("profit_pct", True),
}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def parse_label(config: str) -> tuple[int, float]:
    """``"10y_g1.30"`` -> ``(10, 1.3)``."""
    years, gamma = config.split("y_g")
    return int(years), float(gamma)


def _write(path: Path, columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def period_rows(result) -> list[dict]:
    rows = []
    for config in result.configs:
        years, gamma = parse_label(config)
        recs = [result.benchmark[config]] + [v for (c, _), v in result.records.items() if c == config]
        for group in recs:
            for rec in group:
                for r in rec.period_rows():
                    rows.append({"config": config, "years": years, "gamma": gamma, **r})
    return rows


def summary_rows(result) -> list[dict]:
    out = []
    for r in result.metrics.rows:
        years, gamma = parse_label(r["config"])
        out.append({**r, "years": years, "gamma": gamma})
    return out


def table_rows(summary: list[dict], metric: str, safety_stock: bool) -> tuple[list[str], list[dict]]:
    policies = []
    for r in summary:
        if r["policy"].startswith("SS_") == safety_stock and r["policy"] not in policies:
            policies.append(r["policy"])
    grid = {}
    for r in summary:
        if r["policy"] in policies:
            key = (int(r["years"]), float(r["gamma"]))
            grid.setdefault(key, {"years": key[0], "gamma": key[1]})[r["policy"]] = float(r[metric])
    rows = [grid[k] for k in sorted(grid)]
    return ["years", "gamma"] + policies, rows


def write_results(result, out_dir) -> list[Path]:
    """Write every CSV of a finished grid; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _write(out / "periods.csv", PERIOD_COLUMNS, period_rows(result))
    written.append(out / "periods.csv")
    summary = summary_rows(result)
    _write(out / "summary.csv", SUMMARY_COLUMNS, summary)
    written.append(out / "summary.csv")
    written += write_tables(summary, out)
    return written


def write_tables(summary: list[dict], out_dir) -> list[Path]:
    out = Path(out_dir)
    written = []
    for name, (metric, ss) in TABLES.items():
        cols, rows = table_rows(summary, metric, ss)
        if len(cols) == 2:
            continue
        for r in rows:
            for c in cols:
                r.setdefault(c, float("nan"))
        _write(out / name, cols, rows)
        written.append(out / name)
    return written


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- figures -----------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _monthly(rows: list[dict], config: str, column: str) -> dict[str, np.ndarray]:
    """Per-policy average over replications of ``column`` by period."""
    acc: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        if r["config"] != config:
            continue
        acc.setdefault(r["policy"], {}).setdefault(int(r["period"]), []).append(float(r[column]))
    return {p: np.array([np.mean(v[t]) for t in sorted(v)]) for p, v in acc.items()}


def plot_monthly(rows: list[dict], config: str, column: str, path, ylabel: str) -> Path:
    plt = _pyplot()
    series = _monthly(rows, config, column)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for policy, values in series.items():
        style = "k--" if policy == "PI" else "-"
        ax.plot(np.arange(1, len(values) + 1), values, style, label=policy, lw=1.2)
    ax.set_xlabel("month of the simulation")
    ax.set_ylabel(ylabel)
    ax.set_title(config)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, ncol=2, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_profit_bars(summary: list[dict], path) -> Path:
    plt = _pyplot()
    configs = sorted({r["config"] for r in summary}, key=parse_label)
    policies = list(dict.fromkeys(r["policy"] for r in summary))
    width = 0.8 / max(len(configs), 1)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.7 * len(policies)), 4.0))
    x = np.arange(len(policies))
    for k, config in enumerate(configs):
        vals = {r["policy"]: r for r in summary if r["config"] == config}
        mean = [float(vals[p]["profit_pct"]) if p in vals else np.nan for p in policies]
        ci = [float(vals[p]["profit_pct_ci"]) if p in vals else np.nan for p in policies]
        ci = np.nan_to_num(ci)
        ax.bar(x + k * width, mean, width, yerr=ci, label=config, capsize=2)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(policies, rotation=45, ha="right")
    ax.set_ylabel("profit, % of perfect information")
    ax.axhline(0, color="k", lw=0.6)
    ax.grid(axis="y", alpha=0.3)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_figures(out_dir) -> list[Path]:
    """Figures from the CSVs in ``out_dir``: profit bars and monthly cost and lost-sales curves."""
    out = Path(out_dir)
    periods = read_csv(out / "periods.csv")
    summary = read_csv(out / "summary.csv")
    figs = [plot_profit_bars(summary, out / "profit_pct.png")]
    for config in dict.fromkeys(r["config"] for r in periods):
        figs.append(plot_monthly(periods, config, "production_cost", out / f"production_cost_{config}.png",
                                 "production cost"))
        figs.append(plot_monthly(periods, config, "lost_sales", out / f"lost_sales_{config}.png",
                                 "lost sales, pieces"))
    return figs
