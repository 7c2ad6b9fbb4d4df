"""Economic role classification and population time series.

A node is a miner when it spends significantly more than it receives
(it is producing coins), a collector when it receives significantly more
than it spends, a customer when its out-degree exceeds its in-degree
significantly, and a seller the other way around. "Significantly" means
strictly above the null-model threshold for that metric. Roles are
independent flags; a node may hold several.

A node's lifetime runs from its first transaction to its last; the active
population of a role at time t counts the role's nodes whose lifetime
interval contains t.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .nullmodel import SignificanceThresholds
from .txgraph import MetricsTable, NodeMetrics

ROLE_NAMES = ("miner", "collector", "customer", "seller")


@dataclass(frozen=True)
class RoleLabel:
    is_miner: bool
    is_collector: bool
    is_customer: bool
    is_seller: bool


@dataclass
class TimeSeries:
    """A sampled series; NaN marks a missing value."""

    grid: np.ndarray  # unix seconds, strictly increasing
    values: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values must have equal length")
        if len(self.grid) > 1 and not (np.diff(self.grid) > 0).all():
            raise ValueError("grid must be strictly increasing")

    def __len__(self) -> int:
        return len(self.grid)


def classify(metrics: NodeMetrics, thresholds: SignificanceThresholds) -> RoleLabel:
    """Role flags for a single node; each flag is a strict inequality."""
    return RoleLabel(
        is_miner=metrics.out_value - metrics.in_value > thresholds.out_minus_in_value,
        is_collector=metrics.in_value - metrics.out_value > thresholds.in_minus_out_value,
        is_customer=metrics.out_degree - metrics.in_degree > thresholds.out_minus_in_degree,
        is_seller=metrics.in_degree - metrics.out_degree > thresholds.in_minus_out_degree,
    )


def classify_all(table: MetricsTable, thresholds: SignificanceThresholds) -> dict[str, np.ndarray]:
    """Vectorized classification; returns a boolean array per role."""
    return {
        "miner": table.out_value - table.in_value > thresholds.out_minus_in_value,
        "collector": table.in_value - table.out_value > thresholds.in_minus_out_value,
        "customer": table.out_degree - table.in_degree > thresholds.out_minus_in_degree,
        "seller": table.in_degree - table.out_degree > thresholds.in_minus_out_degree,
    }


def make_grid(t_min: int, t_max: int, step_seconds: int) -> np.ndarray:
    """Sample instants from t_min to t_max inclusive at a fixed step."""
    if step_seconds <= 0:
        raise ValueError("grid step must be positive")
    if t_max < t_min:
        raise ValueError("t_max before t_min")
    return np.arange(t_min, t_max + 1, step_seconds, dtype=np.int64)


def active_population(table: MetricsTable, member_mask, grid) -> TimeSeries:
    """Count members whose [first_ts, last_ts] lifetime covers each instant.

    Interval endpoints are inclusive, so a node whose first and last
    transaction coincide is still active at that instant.
    """
    grid = np.asarray(grid, dtype=np.int64)
    if len(grid) > 1 and not (np.diff(grid) > 0).all():
        raise ValueError("grid must be strictly increasing")
    member_mask = np.asarray(member_mask, dtype=bool)
    first = np.sort(table.first_ts[member_mask])
    last = np.sort(table.last_ts[member_mask])
    started = np.searchsorted(first, grid, side="right")
    ended = np.searchsorted(last, grid, side="left")
    return TimeSeries(grid=grid, values=(started - ended).astype(float))


def customer_seller_ratio(customers: TimeSeries, sellers: TimeSeries) -> TimeSeries:
    """Elementwise customers/sellers; zero-seller instants become missing."""
    if len(customers.grid) != len(sellers.grid) or (customers.grid != sellers.grid).any():
        raise ValueError("customer and seller series must share one grid")
    ratio = np.full(len(customers), math.nan)
    ok = sellers.values > 0
    ratio[ok] = customers.values[ok] / sellers.values[ok]
    return TimeSeries(grid=customers.grid.copy(), values=ratio)


# -- reports -----------------------------------------------------------------


def write_roles_csv(external_ids, labels: dict[str, np.ndarray], path, echo=None) -> None:
    """`user,is_miner,is_collector,is_customer,is_seller` with 0/1 flags."""
    from .csvio import open_report

    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user", "is_miner", "is_collector", "is_customer", "is_seller"])
        for i, ext in enumerate(external_ids):
            writer.writerow(
                [int(ext)] + [int(bool(labels[name][i])) for name in ROLE_NAMES]
            )


def read_roles_csv(path) -> dict[int, RoleLabel]:
    from .csvio import iter_report_rows

    header = ["user", "is_miner", "is_collector", "is_customer", "is_seller"]
    out = {}
    for _line, row in iter_report_rows(path, expected_header=header):
        out[int(row[0])] = RoleLabel(*(bool(int(x)) for x in row[1:5]))
    return out


def write_populations_csv(series: dict[str, TimeSeries], ratio: TimeSeries, path, echo=None) -> None:
    """`timestamp,miners,collectors,customers,sellers,ratio`; missing ratio cells are empty."""
    from .csvio import fmt, open_report

    grid = ratio.grid
    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "miners", "collectors", "customers", "sellers", "ratio"])
        for k, t in enumerate(grid):
            cells = [int(t)]
            for name in ("miner", "collector", "customer", "seller"):
                cells.append(int(series[name].values[k]))
            r = ratio.values[k]
            cells.append("" if math.isnan(r) else fmt(float(r)))
            writer.writerow(cells)
