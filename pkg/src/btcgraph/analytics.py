"""Distribution fitting, centrality, and correlation analyses.

The reuse distribution is fitted in log-log space by least squares, the
presentation-matching estimator, with a discrete maximum-likelihood
estimate emitted alongside as a cross-check since log-log regression is
biased on sparse tail bins. PageRank and HITS run as power iterations on
the sparse user graph; "money earned" by a seller is its lifetime total
incoming value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.special import zeta

from .cluster import ReuseHistogram
from .errors import ConvergenceError
from .roles import TimeSeries
from .txgraph import TxGraph, node_metrics

# -- power-law fitting ---------------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    amplitude: float
    r_min: int
    fit_method: str
    residual: float


def _usable_bins(hist: ReuseHistogram, r_min: int):
    rs = np.array([r for r, c in hist.bins.items() if r >= r_min and c > 0], dtype=float)
    cs = np.array([c for r, c in hist.bins.items() if r >= r_min and c > 0], dtype=float)
    order = np.argsort(rs)
    return rs[order], cs[order]


def fit_power_law(hist: ReuseHistogram, r_min: int = 1) -> PowerLawFit:
    """Least-squares line on (log r, log count) over bins with r >= r_min."""
    rs, cs = _usable_bins(hist, r_min)
    if len(rs) < 3:
        raise ValueError(f"need at least 3 usable bins with r >= {r_min}, found {len(rs)}")
    log_r = np.log(rs)
    log_c = np.log(cs)
    slope, intercept = np.polyfit(log_r, log_c, 1)
    residuals = log_c - (slope * log_r + intercept)
    return PowerLawFit(
        exponent=float(-slope),
        amplitude=float(math.exp(intercept)),
        r_min=r_min,
        fit_method="loglog-ls",
        residual=float(np.sqrt(np.mean(residuals**2))),
    )


def fit_power_law_mle(hist: ReuseHistogram, r_min: int = 1) -> PowerLawFit:
    """Discrete power-law MLE via the Hurwitz zeta likelihood.

    Solves d/da log zeta(a, r_min) = -mean(log r) by bracketing; immune to
    the sparse-tail bias of the log-log regression.
    """
    rs, cs = _usable_bins(hist, r_min)
    if len(rs) < 3:
        raise ValueError(f"need at least 3 usable bins with r >= {r_min}, found {len(rs)}")
    n = cs.sum()
    mean_log = float((cs * np.log(rs)).sum() / n)

    def score(a: float, h: float = 1e-6) -> float:
        return (math.log(zeta(a + h, r_min)) - math.log(zeta(a - h, r_min))) / (2 * h) + mean_log

    lo, hi = 1.0 + 1e-6, 2.0
    while score(hi) < 0 and hi < 64:
        hi *= 2
    exponent = float(brentq(score, lo, hi, xtol=1e-10))
    amplitude = float(n / zeta(exponent, r_min))
    predicted = np.log(amplitude) - exponent * np.log(rs)
    residuals = np.log(cs) - predicted
    return PowerLawFit(
        exponent=exponent,
        amplitude=amplitude,
        r_min=r_min,
        fit_method="mle-zeta",
        residual=float(np.sqrt(np.mean(residuals**2))),
    )


# -- centrality ----------------------------------------------------------------


@dataclass
class CentralityScores:
    pagerank: np.ndarray
    hubs: np.ndarray
    authorities: np.ndarray


def _transition_matrix(graph: TxGraph, value_weighted: bool):
    n = graph.node_count
    weights = graph.value.astype(float) if value_weighted else np.ones(graph.edge_count)
    out_weight = np.zeros(n)
    np.add.at(out_weight, graph.src, weights)
    dangling = out_weight == 0.0
    inv = np.zeros(n)
    inv[~dangling] = 1.0 / out_weight[~dangling]
    M = sparse.csr_matrix(
        (weights * inv[graph.src], (graph.dst, graph.src)), shape=(n, n)
    )
    return M, dangling


def pagerank(
    graph: TxGraph,
    damping: float = 0.85,
    tolerance: float = 1e-10,
    max_iterations: int = 200,
    value_weighted: bool = False,
) -> np.ndarray:
    """Power iteration with uniform redistribution of dangling mass.

    Transition weights are edge multiplicities by default (each repeated
    trade counts); pass value_weighted=True to weight by satoshi value.
    Stops when the L1 change drops below tolerance; the result sums to 1.
    """
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    if tolerance <= 0.0:
        raise ValueError("tolerance must be positive")
    n = graph.node_count
    if n == 0:
        return np.empty(0)
    M, dangling = _transition_matrix(graph, value_weighted)
    x = np.full(n, 1.0 / n)
    teleport = (1.0 - damping) / n
    for _ in range(max_iterations):
        spread = M @ x + x[dangling].sum() / n
        x_new = damping * spread + teleport
        x_new /= x_new.sum()
        delta = float(np.abs(x_new - x).sum())
        x = x_new
        if delta < tolerance:
            return x
    raise ConvergenceError(
        f"pagerank did not converge in {max_iterations} iterations", delta, last=x
    )


def hits(
    graph: TxGraph, tolerance: float = 1e-10, max_iterations: int = 1000
) -> tuple[np.ndarray, np.ndarray]:
    """Mutual-reinforcement iteration; hubs and authorities, each unit L2 norm.

    Converges to the principal singular pair of the (multiplicity-weighted)
    adjacency. Raises on a graph without edges, where the scores are
    undefined.
    """
    if graph.edge_count == 0:
        raise ValueError("HITS needs at least one edge")
    n = graph.node_count
    A = sparse.csr_matrix(
        (np.ones(graph.edge_count), (graph.src, graph.dst)), shape=(n, n)
    )
    AT = A.T.tocsr()
    h = np.full(n, 1.0 / math.sqrt(n))
    a = np.zeros(n)
    for _ in range(max_iterations):
        a_new = AT @ h
        a_new /= np.linalg.norm(a_new)
        h_new = A @ a_new
        h_new /= np.linalg.norm(h_new)
        delta = float(np.abs(a_new - a).sum() + np.abs(h_new - h).sum())
        a, h = a_new, h_new
        if delta < tolerance:
            return h, a
    raise ConvergenceError(
        f"HITS did not converge in {max_iterations} iterations", delta, last=(h, a)
    )


# -- correlation ----------------------------------------------------------------


def pearson(x, y) -> float:
    """Sample Pearson coefficient; pairs containing NaN are dropped first."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("series lengths differ")
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if len(x) < 2:
        raise ValueError("need at least 2 complete pairs")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("zero variance makes the coefficient undefined")
    return float((xc @ yc) / math.sqrt(vx * vy))


@dataclass
class CentralityEarningsStudy:
    """Per-measure correlation between seller centrality and money earned."""

    log_space: dict[str, float]
    linear_space: dict[str, float]
    usable_sellers: dict[str, int]
    excluded_sellers: dict[str, int]


def centrality_earnings_study(earnings, measures: dict) -> CentralityEarningsStudy:
    """Array-level core: correlate each measure with the earnings vector.

    Entries with zero earnings or zero score cannot be placed in log
    space; they are excluded per measure, with counts reported.
    """
    earnings = np.asarray(earnings, dtype=float)
    log_space: dict[str, float] = {}
    linear_space: dict[str, float] = {}
    usable: dict[str, int] = {}
    excluded: dict[str, int] = {}
    for name, score in measures.items():
        score = np.asarray(score, dtype=float)
        ok = (earnings > 0) & (score > 0)
        usable[name] = int(ok.sum())
        excluded[name] = int(len(earnings) - ok.sum())
        if usable[name] < 3:
            raise ValueError(
                f"fewer than 3 usable sellers for {name} "
                f"({excluded[name]} excluded for zero score or earnings)"
            )
        log_space[name] = pearson(np.log(score[ok]), np.log(earnings[ok]))
        linear_space[name] = pearson(score[ok], earnings[ok])
    return CentralityEarningsStudy(log_space, linear_space, usable, excluded)


def centrality_earnings_correlation(
    graph: TxGraph, scores: CentralityScores, seller_set
) -> CentralityEarningsStudy:
    """Correlate each centrality measure with seller earnings.

    Earnings are the seller's lifetime incoming value. The headline
    coefficient is computed in log-log space; the linear-space variant is
    reported alongside.
    """
    sellers = np.array(sorted(int(s) for s in seller_set), dtype=np.int64)
    if len(sellers) < 3:
        raise ValueError("need at least 3 sellers")
    earnings = node_metrics(graph).in_value[sellers].astype(float)
    measures = {
        "pagerank": scores.pagerank[sellers],
        "hubs": scores.hubs[sellers],
        "authorities": scores.authorities[sellers],
    }
    return centrality_earnings_study(earnings, measures)


def _median_step(grid: np.ndarray) -> float:
    return float(np.median(np.diff(grid))) if len(grid) > 1 else math.inf


def _locf(series: TimeSeries, instants: np.ndarray) -> np.ndarray:
    """Last observation carried forward; NaN before the first observation."""
    idx = np.searchsorted(series.grid, instants, side="right") - 1
    out = np.full(len(instants), math.nan)
    has_prior = idx >= 0
    out[has_prior] = series.values[idx[has_prior]]
    return out


def align_series(a: TimeSeries, b: TimeSeries) -> tuple[np.ndarray, np.ndarray]:
    """Resample both series onto the coarser grid over their overlap.

    Values are carried forward from the last observation; instants missing
    in either series come back as NaN.
    """
    if len(a.grid) == 0 or len(b.grid) == 0:
        raise ValueError("empty series")
    lo = max(a.grid[0], b.grid[0])
    hi = min(a.grid[-1], b.grid[-1])
    if lo > hi:
        raise ValueError("series do not overlap in time")
    coarse = a if _median_step(a.grid) >= _median_step(b.grid) else b
    instants = coarse.grid[(coarse.grid >= lo) & (coarse.grid <= hi)]
    return _locf(a, instants), _locf(b, instants)


def series_correlation(a: TimeSeries, b: TimeSeries) -> float:
    """Pearson correlation after aligning both series on the coarser grid;
    grid points missing in either series drop out of the coefficient."""
    x, y = align_series(a, b)
    return pearson(x, y)


# -- reports ---------------------------------------------------------------------


def write_centrality_csv(graph: TxGraph, scores: CentralityScores, path, echo=None) -> None:
    """`node,pagerank,hub,authority,in_value_satoshi` keyed by external id."""
    from .csvio import fmt, open_report

    in_value = node_metrics(graph).in_value
    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node", "pagerank", "hub", "authority", "in_value_satoshi"])
        for i in range(graph.node_count):
            writer.writerow(
                [
                    int(graph.external_ids[i]),
                    fmt(float(scores.pagerank[i])),
                    fmt(float(scores.hubs[i])),
                    fmt(float(scores.authorities[i])),
                    int(in_value[i]),
                ]
            )


def write_fit_csv(fits, path, echo=None) -> None:
    """`exponent,amplitude,r_min,residual,method`, one row per estimator."""
    from .csvio import fmt, open_report

    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["exponent", "amplitude", "r_min", "residual", "method"])
        for fit in fits:
            writer.writerow(
                [fmt(fit.exponent), fmt(fit.amplitude), fit.r_min, fmt(fit.residual), fit.fit_method]
            )


def write_correlations_csv(rows, path, echo=None) -> None:
    """`name,space,coefficient,n_points` summary of every correlation run."""
    from .csvio import fmt, open_report

    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "space", "coefficient", "n_points"])
        for name, space, coefficient, n_points in rows:
            writer.writerow([name, space, fmt(float(coefficient)), int(n_points)])
