"""Pipeline orchestration over flat-file stage exports.

Every stage reads the previous stage's exported CSVs and writes its own,
so each CLI subcommand can run standalone and the all-in-one pipeline is
just the stages in order. All randomness flows from the single config
seed (the null model derives independent streams from it); reports embed
the seed and configuration as leading comment lines, and a rerun with the
same inputs and seed is byte-identical.

Reserved endpoints (negative user ids: -1 coinbase source, -2 unknown)
are excluded from classification and centrality; their edges still count
toward lifetimes, so population series see every user's full activity
span.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, fields
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np

from . import analytics, cluster, nullmodel, roles, txgraph
from .blockparse import scan_block_files
from .csvio import fmt, iter_report_rows, open_report
from .errors import IngestError

log = logging.getLogger(__name__)

TX_INPUTS_FILE = "tx_inputs.csv"
TX_OUTPUTS_FILE = "tx_outputs.csv"
PARSE_ERRORS_FILE = "parse_errors.csv"
CLUSTERING_FILE = "clustering.csv"
HISTOGRAM_FILE = "reuse_histogram.csv"
EDGES_FILE = "edges.csv"
THRESHOLDS_FILE = "thresholds.csv"
ROLES_FILE = "roles.csv"
POPULATIONS_FILE = "populations.csv"
CENTRALITY_FILE = "centrality.csv"
FIT_FILE = "powerlaw_fit.csv"
CORRELATIONS_FILE = "correlations.csv"
ERROR_SUMMARY_FILE = "error_summary.json"

REPORT_FILES = [
    CLUSTERING_FILE,
    HISTOGRAM_FILE,
    FIT_FILE,
    THRESHOLDS_FILE,
    ROLES_FILE,
    POPULATIONS_FILE,
    CENTRALITY_FILE,
    CORRELATIONS_FILE,
]


@dataclass
class PipelineConfig:
    """Run settings; exactly one of blocks_dir / edge_list must be set."""

    output_dir: Path
    blocks_dir: Path | None = None
    edge_list: Path | None = None
    p_value: float = 0.01
    seed: int = 0
    grid_step_days: float = 14.0
    damping: float = 0.85
    tolerance: float = 1e-10
    max_iterations: int = 200
    hits_max_iterations: int = 1000
    r_min: int = 1
    strict_ingest: bool = True
    value_weighted: bool = False
    price_series: Path | None = None
    difficulty_series: Path | None = None

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if (self.blocks_dir is None) == (self.edge_list is None):
            raise ValueError("set exactly one input: blocks_dir or edge_list")
        if not 0.0 < self.p_value < 1.0:
            raise ValueError("p_value must lie in (0, 1)")
        if self.grid_step_days <= 0:
            raise ValueError("grid_step_days must be positive")

    def echo(self) -> dict:
        out = {"seed": self.seed, "p_value": self.p_value, "rng_name": nullmodel.RNG_NAME}
        if self.blocks_dir is not None:
            out["input"] = f"raw-blocks:{self.blocks_dir}"
        else:
            out["input"] = f"edge-list:{self.edge_list}"
        return out


_CONFIG_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config_file(path) -> dict:
    """Read the simple `key=value` config format ('#' starts a comment)."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise IngestError(f"expected key=value, found {body!r}", line_no)
            key, _, value = body.partition("=")
            values[key.strip()] = value.strip()
    return values


def config_from_mapping(values: dict) -> PipelineConfig:
    kwargs = {}
    known = {f.name: f for f in fields(PipelineConfig)}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        if raw is None:
            continue
        if key in ("output_dir", "blocks_dir", "edge_list", "price_series", "difficulty_series"):
            kwargs[key] = Path(raw)
        elif key in ("seed", "max_iterations", "hits_max_iterations", "r_min"):
            kwargs[key] = int(raw)
        elif key in ("strict_ingest", "value_weighted"):
            kwargs[key] = _CONFIG_BOOL[str(raw).lower()] if isinstance(raw, str) else bool(raw)
        else:
            kwargs[key] = float(raw)
    if "output_dir" not in kwargs:
        raise ValueError("config must set output_dir")
    return PipelineConfig(**kwargs)


# -- external series ----------------------------------------------------------


@dataclass
class ExternalSeries:
    """A dated external series (market price, mining difficulty)."""

    kind: str  # "price-usd" | "difficulty"
    points: list[tuple[date, float]] = field(default_factory=list)

    def to_timeseries(self) -> roles.TimeSeries:
        grid = [int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())
                for d, _ in self.points]
        values = [v for _, v in self.points]
        return roles.TimeSeries(grid=np.array(grid, dtype=np.int64),
                                values=np.array(values, dtype=float))


def ingest_external_series(path, kind: str) -> ExternalSeries:
    """Read `date_iso8601,value` rows into a sorted, deduplicated series.

    Duplicate dates keep the later row (a warning is logged); unparseable
    dates and negative values fail with their line number.
    """
    if kind not in ("price-usd", "difficulty"):
        raise ValueError(f"unknown series kind {kind!r}")
    by_date: dict[date, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if line_no == 1 and row[0].strip().lower() in ("date", "date_iso8601"):
                continue
            if len(row) != 2:
                raise IngestError(f"expected 2 fields, found {len(row)}", line_no)
            try:
                d = date.fromisoformat(row[0].strip())
            except ValueError as exc:
                raise IngestError(f"bad date {row[0]!r}: {exc}", line_no) from None
            try:
                value = float(row[1])
            except ValueError:
                raise IngestError(f"bad value {row[1]!r}", line_no) from None
            if value < 0:
                raise IngestError(f"negative value {value}", line_no)
            if d in by_date:
                log.warning("%s line %d: duplicate date %s, later row wins", path, line_no, d)
            by_date[d] = value
    return ExternalSeries(kind=kind, points=sorted(by_date.items()))


def write_series_csv(series: ExternalSeries, path, echo=None) -> None:
    with open_report(path, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date_iso8601", "value"])
        for d, v in series.points:
            writer.writerow([d.isoformat(), fmt(float(v))])


# -- stage: parse ---------------------------------------------------------------


def stage_parse(blocks_dir, out_dir, echo=None) -> None:
    """Decode raw block files into flat transaction tables.

    First pass indexes every outpoint's address, second pass resolves
    input ownership; `tx_inputs.csv` gets one row per resolved input,
    `tx_outputs.csv` one row per output (empty address for non-P2PKH).
    """
    blocks_dir = Path(blocks_dir)
    if not blocks_dir.is_dir():
        raise IngestError(f"block directory {blocks_dir} does not exist")
    out_dir = Path(out_dir)

    errors: list[tuple[str, int, str]] = []

    def on_error(path, offset, message):
        errors.append((path, offset, message))

    from .blockparse import build_outpoint_index, resolve_input_addresses

    outpoints = {}
    n_blocks = 0
    n_txs = 0
    for block in scan_block_files(blocks_dir, on_error=on_error):
        n_blocks += 1
        n_txs += len(block.transactions)
        outpoints.update(build_outpoint_index(block.transactions))

    unresolved_total = 0
    stage_echo = dict(echo or {})
    with open_report(out_dir / TX_INPUTS_FILE, stage_echo) as in_fh, open_report(
        out_dir / TX_OUTPUTS_FILE, stage_echo
    ) as out_fh:
        in_writer = csv.writer(in_fh, lineterminator="\n")
        in_writer.writerow(["txid", "address"])
        out_writer = csv.writer(out_fh, lineterminator="\n")
        out_writer.writerow(["txid", "vout", "address", "value_satoshi", "timestamp", "coinbase"])
        for block in scan_block_files(blocks_dir, on_error=lambda *a: None):
            for tx in block.transactions:
                resolved, unresolved = resolve_input_addresses(tx, outpoints)
                unresolved_total += unresolved
                for addr in resolved:
                    in_writer.writerow([tx.txid_hex, addr.encoded])
                for vout, out in enumerate(tx.outputs):
                    out_writer.writerow(
                        [
                            tx.txid_hex,
                            vout,
                            out.address.encoded if out.address else "",
                            out.value,
                            block.timestamp,
                            int(tx.is_coinbase),
                        ]
                    )

    summary_echo = dict(stage_echo)
    summary_echo.update(
        {"blocks": n_blocks, "transactions": n_txs, "unresolved_inputs": unresolved_total}
    )
    with open_report(out_dir / PARSE_ERRORS_FILE, summary_echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["file", "offset", "message"])
        for path, offset, message in errors:
            writer.writerow([Path(path).name, offset, message])


def _read_input_groups(parsed_dir) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for _line, row in iter_report_rows(Path(parsed_dir) / TX_INPUTS_FILE,
                                       expected_header=["txid", "address"]):
        groups.setdefault(row[0], []).append(row[1])
    return groups


def _read_outputs(parsed_dir):
    header = ["txid", "vout", "address", "value_satoshi", "timestamp", "coinbase"]
    for _line, row in iter_report_rows(Path(parsed_dir) / TX_OUTPUTS_FILE, expected_header=header):
        yield row[0], int(row[1]), row[2], int(row[3]), int(row[4]), bool(int(row[5]))


# -- stage: cluster ---------------------------------------------------------------


def stage_cluster(parsed_dir, out_dir, echo=None) -> None:
    """Cluster input groups and tally address reuse from the parse tables."""
    groups = _read_input_groups(parsed_dir)

    clustering = cluster.AddressClustering()
    for txid in groups:
        indices = sorted({clustering.intern(a) for a in groups[txid]})
        clustering.union_group(indices)

    tx_addresses: dict[str, set[str]] = {t: set(g) for t, g in groups.items()}
    for txid, _vout, address, _value, _ts, _cb in _read_outputs(parsed_dir):
        if address:
            clustering.intern(address)
            tx_addresses.setdefault(txid, set()).add(address)
    clustering.finalize()

    usage: dict[str, int] = {}
    for addresses in tx_addresses.values():
        for a in addresses:
            usage[a] = usage.get(a, 0) + 1
    hist = cluster.histogram_from_usage_counts(usage.values())

    out_dir = Path(out_dir)
    cluster.write_clustering_csv(clustering, out_dir / CLUSTERING_FILE, echo=echo)
    cluster.write_histogram_csv(hist, out_dir / HISTOGRAM_FILE, echo=echo)


def _read_clustering(path) -> dict[str, int]:
    users = {}
    for _line, row in iter_report_rows(path, expected_header=["address", "user_id"]):
        users[row[0]] = int(row[1])
    return users


# -- stage: graph -----------------------------------------------------------------


def stage_graph_from_parsed(parsed_dir, clustering_path, out_dir, echo=None) -> None:
    """Edge list from the parse tables plus an address clustering."""
    users = _read_clustering(clustering_path)
    groups = _read_input_groups(parsed_dir)
    tx_src: dict[str, int] = {}
    for txid, addresses in groups.items():
        tx_src[txid] = users[addresses[0]]

    src, dst, val, ts = [], [], [], []
    for txid, _vout, address, value, timestamp, coinbase in _read_outputs(parsed_dir):
        if coinbase:
            s = txgraph.COINBASE_EXTERNAL_ID
        else:
            s = tx_src.get(txid, txgraph.UNKNOWN_EXTERNAL_ID)
        d = users[address] if address else txgraph.UNKNOWN_EXTERNAL_ID
        if s == d:
            continue
        src.append(s)
        dst.append(d)
        val.append(value)
        ts.append(timestamp)

    graph = txgraph._densify(
        np.array(src, dtype=np.int64),
        np.array(dst, dtype=np.int64),
        np.array(val, dtype=np.int64),
        np.array(ts, dtype=np.int64),
    )
    txgraph.write_edge_list_csv(graph, Path(out_dir) / EDGES_FILE, echo=echo)


def stage_graph_from_edge_list(edge_list, out_dir, strict=True, echo=None) -> list[tuple[int, str]]:
    """Normalize an external edge list into the canonical export.

    Also writes the identity clustering (each user is its own entity in a
    pre-clustered input) and a reuse histogram over per-user incident-edge
    counts, so the bundle keeps the same shape in both input modes.
    """
    graph, rejects = txgraph.ingest_edge_list(edge_list, strict=strict)
    out_dir = Path(out_dir)
    txgraph.write_edge_list_csv(graph, out_dir / EDGES_FILE, echo=echo)

    with open_report(out_dir / CLUSTERING_FILE, echo) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["address", "user_id"])
        for ext in graph.external_ids:
            if ext >= 0:
                writer.writerow([int(ext), int(ext)])

    incident = np.bincount(graph.src, minlength=graph.node_count) + np.bincount(
        graph.dst, minlength=graph.node_count
    )
    incident = incident[graph.external_ids >= 0]
    hist = cluster.histogram_from_usage_counts(incident.tolist())
    cluster.write_histogram_csv(hist, out_dir / HISTOGRAM_FILE, echo=echo)
    return rejects


def load_graph(edges_path) -> txgraph.TxGraph:
    graph, _ = txgraph.ingest_edge_list(edges_path, strict=True)
    return graph


def _classified_subgraph(graph: txgraph.TxGraph):
    """Drop reserved endpoints; issuance and unknown flows must not skew
    the economic metrics or the centrality scores."""
    return graph.without_nodes(graph.reserved_nodes())


# -- stage: nullmodel ---------------------------------------------------------------


def stage_nullmodel(edges_path, p_value, seed, out_dir, echo=None) -> None:
    """Thresholds from an ER graph matched to the classified data graph."""
    graph = load_graph(edges_path)
    sub, _ = _classified_subgraph(graph)
    config = nullmodel.NullModelConfig(n=sub.node_count, m=sub.edge_count,
                                       p_value=p_value, seed=seed)
    er = nullmodel.generate_er(config)
    er = nullmodel.assign_sampled_values(er, sub.value, seed)
    thresholds = nullmodel.compute_thresholds(er, p_value)
    nullmodel.write_thresholds_csv(
        thresholds, Path(out_dir) / THRESHOLDS_FILE, config=config, echo=echo
    )


# -- stage: classify ----------------------------------------------------------------


def stage_classify(edges_path, thresholds_path, out_dir, echo=None) -> None:
    graph = load_graph(edges_path)
    sub, _ = _classified_subgraph(graph)
    thresholds = nullmodel.read_thresholds_csv(thresholds_path)
    table = txgraph.node_metrics(sub)
    labels = roles.classify_all(table, thresholds)
    roles.write_roles_csv(sub.external_ids, labels, Path(out_dir) / ROLES_FILE, echo=echo)


# -- stage: timeseries ----------------------------------------------------------------


def stage_timeseries(edges_path, roles_path, grid_step_days, out_dir, echo=None) -> None:
    """Active-population series on a fixed grid across the data span.

    Lifetimes come from the full graph (reserved endpoints included) so a
    user's first and last activity bound its interval; populations at the
    span edges are right-censored by construction.
    """
    graph = load_graph(edges_path)
    label_by_user = roles.read_roles_csv(roles_path)
    table = txgraph.node_metrics(graph)

    step = max(1, int(round(float(grid_step_days) * 86400)))
    t_min = int(graph.timestamp.min()) if graph.edge_count else 0
    t_max = int(graph.timestamp.max()) if graph.edge_count else 0
    grid = roles.make_grid(t_min, t_max, step)

    masks = {name: np.zeros(graph.node_count, dtype=bool) for name in roles.ROLE_NAMES}
    ext_index = {int(e): i for i, e in enumerate(graph.external_ids)}
    for user, label in label_by_user.items():
        i = ext_index[user]
        masks["miner"][i] = label.is_miner
        masks["collector"][i] = label.is_collector
        masks["customer"][i] = label.is_customer
        masks["seller"][i] = label.is_seller

    series = {
        name: roles.active_population(table, mask, grid) for name, mask in masks.items()
    }
    ratio = roles.customer_seller_ratio(series["customer"], series["seller"])
    roles.write_populations_csv(series, ratio, Path(out_dir) / POPULATIONS_FILE, echo=echo)


def read_populations_csv(path) -> dict[str, roles.TimeSeries]:
    header = ["timestamp", "miners", "collectors", "customers", "sellers", "ratio"]
    grid, cols = [], {name: [] for name in header[1:]}
    for _line, row in iter_report_rows(path, expected_header=header):
        grid.append(int(row[0]))
        for k, name in enumerate(header[1:], start=1):
            cols[name].append(float(row[k]) if row[k] != "" else float("nan"))
    grid_arr = np.array(grid, dtype=np.int64)
    return {
        name: roles.TimeSeries(grid=grid_arr.copy(), values=np.array(vals))
        for name, vals in cols.items()
    }


# -- stage: centrality ----------------------------------------------------------------


def stage_centrality(
    edges_path,
    out_dir,
    damping=0.85,
    tolerance=1e-10,
    max_iterations=200,
    hits_max_iterations=1000,
    value_weighted=False,
    echo=None,
) -> None:
    graph = load_graph(edges_path)
    sub, _ = _classified_subgraph(graph)
    pr = analytics.pagerank(
        sub,
        damping=damping,
        tolerance=tolerance,
        max_iterations=max_iterations,
        value_weighted=value_weighted,
    )
    hubs, authorities = analytics.hits(
        sub, tolerance=tolerance, max_iterations=hits_max_iterations
    )
    scores = analytics.CentralityScores(pagerank=pr, hubs=hubs, authorities=authorities)
    analytics.write_centrality_csv(sub, scores, Path(out_dir) / CENTRALITY_FILE, echo=echo)


def read_centrality_csv(path):
    header = ["node", "pagerank", "hub", "authority", "in_value_satoshi"]
    nodes, pr, hub, auth, in_value = [], [], [], [], []
    for _line, row in iter_report_rows(path, expected_header=header):
        nodes.append(int(row[0]))
        pr.append(float(row[1]))
        hub.append(float(row[2]))
        auth.append(float(row[3]))
        in_value.append(int(row[4]))
    return (
        np.array(nodes, dtype=np.int64),
        {"pagerank": np.array(pr), "hubs": np.array(hub), "authorities": np.array(auth)},
        np.array(in_value, dtype=np.int64),
    )


# -- stage: report ----------------------------------------------------------------


def stage_report(out_dir, price_path=None, difficulty_path=None, r_min=1, echo=None) -> None:
    """Final summaries: the reuse-distribution fit and every correlation."""
    out_dir = Path(out_dir)
    hist = cluster.read_histogram_csv(out_dir / HISTOGRAM_FILE)

    fits = []
    fit_echo = dict(echo or {})
    try:
        fits.append(analytics.fit_power_law(hist, r_min=r_min))
        fits.append(analytics.fit_power_law_mle(hist, r_min=r_min))
    except ValueError as exc:
        fit_echo["degenerate"] = str(exc)
    analytics.write_fit_csv(fits, out_dir / FIT_FILE, echo=fit_echo)

    rows = []
    populations = read_populations_csv(out_dir / POPULATIONS_FILE)
    if price_path is not None:
        price = ingest_external_series(price_path, "price-usd").to_timeseries()
        ratio = populations["ratio"]
        coef = analytics.series_correlation(ratio, price)
        x, y = analytics.align_series(ratio, price)
        n_pairs = int((~(np.isnan(x) | np.isnan(y))).sum())
        rows.append(("customer_seller_ratio_vs_price", "linear", coef, n_pairs))
    if difficulty_path is not None:
        difficulty = ingest_external_series(difficulty_path, "difficulty")
        write_series_csv(difficulty, out_dir / "difficulty_series.csv", echo=echo)

    node_ids, measures, in_value = read_centrality_csv(out_dir / CENTRALITY_FILE)
    label_by_user = roles.read_roles_csv(out_dir / ROLES_FILE)
    seller_ids = {u for u, lab in label_by_user.items() if lab.is_seller}
    seller_mask = np.isin(node_ids, np.array(sorted(seller_ids), dtype=np.int64))
    if seller_mask.sum() >= 3:
        study = analytics.centrality_earnings_study(
            in_value[seller_mask].astype(float),
            {name: vals[seller_mask] for name, vals in measures.items()},
        )
        for name in ("pagerank", "hubs", "authorities"):
            rows.append(
                (f"{name}_vs_earnings", "log-log", study.log_space[name], study.usable_sellers[name])
            )
            rows.append(
                (f"{name}_vs_earnings", "linear", study.linear_space[name], study.usable_sellers[name])
            )
    analytics.write_correlations_csv(rows, out_dir / CORRELATIONS_FILE, echo=echo)


# -- all-in-one ----------------------------------------------------------------


def run_pipeline(config: PipelineConfig) -> list[Path]:
    """Run every stage; returns the report paths in the bundle.

    On a stage failure an ``error_summary.json`` naming the stage and the
    reports completed so far is written before the exception propagates.
    """
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    echo = config.echo()
    completed: list[str] = []
    stage = "configure"
    try:
        if config.blocks_dir is not None:
            stage = "parse"
            stage_parse(config.blocks_dir, out, echo=echo)
            stage = "cluster"
            stage_cluster(out, out, echo=echo)
            completed += [CLUSTERING_FILE, HISTOGRAM_FILE]
            stage = "graph"
            stage_graph_from_parsed(out, out / CLUSTERING_FILE, out, echo=echo)
        else:
            stage = "graph"
            if not Path(config.edge_list).is_file():
                raise IngestError(f"edge list {config.edge_list} does not exist")
            stage_graph_from_edge_list(
                config.edge_list, out, strict=config.strict_ingest, echo=echo
            )
            completed += [CLUSTERING_FILE, HISTOGRAM_FILE]

        stage = "nullmodel"
        stage_nullmodel(out / EDGES_FILE, config.p_value, config.seed, out, echo=echo)
        completed.append(THRESHOLDS_FILE)
        stage = "classify"
        stage_classify(out / EDGES_FILE, out / THRESHOLDS_FILE, out, echo=echo)
        completed.append(ROLES_FILE)
        stage = "timeseries"
        stage_timeseries(out / EDGES_FILE, out / ROLES_FILE, config.grid_step_days, out, echo=echo)
        completed.append(POPULATIONS_FILE)
        stage = "centrality"
        stage_centrality(
            out / EDGES_FILE,
            out,
            damping=config.damping,
            tolerance=config.tolerance,
            max_iterations=config.max_iterations,
            hits_max_iterations=config.hits_max_iterations,
            value_weighted=config.value_weighted,
            echo=echo,
        )
        completed.append(CENTRALITY_FILE)
        stage = "report"
        stage_report(
            out,
            price_path=config.price_series,
            difficulty_path=config.difficulty_series,
            r_min=config.r_min,
            echo=echo,
        )
        completed += [FIT_FILE, CORRELATIONS_FILE]
    except Exception as exc:
        summary = {
            "stage": stage,
            "error_type": type(exc).__name__,
            "message": str(exc),
            "completed_reports": completed,
        }
        with open(out / ERROR_SUMMARY_FILE, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        raise
    return [out / name for name in REPORT_FILES]
