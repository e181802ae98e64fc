"""Plain-text and CSV report tables. Output is a pure function of the records."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Any, Mapping, Sequence

from cbea.fixtures import Manifest
from cbea.metrics import MetricReport, RunRecord, by_variant, horizon_grouping, metric_report, shadow_recall
from cbea.stats import ClusterResult, Interval

FOOTER = (
    "Note: raw, summarized, rag, long_context and tool_agent are simulated with the rule-based "
    "generator; their magnitudes are not comparable with real-model runs, only their direction."
)
SUMMARY_COLUMNS = ("Att.", "Inv.", "Struct.", "Repair", "Cost")
DETAIL_COLUMNS = ("OHCVR", "ECF", "Wit.", "Cons.", "NFER")


def _align(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)] if rows else [len(h) for h in header]
    line = lambda r: "  ".join(str(x).ljust(w) if i == 0 else str(x).rjust(w) for i, (x, w) in enumerate(zip(r, widths)))
    out = [line(header), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def summary_rows(reports: Sequence[MetricReport]) -> list[list[str]]:
    return [
        [r.variant, str(r.attempted), str(r.invalid), f"{r.availability:.4f}", r.repair_correctness.fmt(), f"{r.mean_cost:.1f}"]
        for r in reports
    ]


def detail_rows(reports: Sequence[MetricReport]) -> list[list[str]]:
    return [[r.variant, r.ohcvr.fmt(), r.ecf.fmt(), r.witness_drop.fmt(), r.consequence.fmt(), r.nfer.fmt()] for r in reports]


def state_rows(reports: Sequence[MetricReport]) -> tuple[list[str], list[list[str]]]:
    from cbea.candidates import OUTCOME_STATES

    header = ["Method", *OUTCOME_STATES, "attempted"]
    return header, [[r.variant, *(str(r.states.get(s, 0)) for s in OUTCOME_STATES), str(r.attempted)] for r in reports]


def reports_for(records: Sequence[RunRecord]) -> list[MetricReport]:
    return [metric_report(rows, v) for v, rows in sorted(by_variant(records).items())]


def horizon_rows(records: Sequence[RunRecord], manifest: Manifest) -> list[list[str]]:
    rows = []
    for variant, groups in horizon_grouping(records, manifest).items():
        for k, r in groups.items():
            rows.append([variant, str(k), str(r.attempted), f"{r.availability:.4f}", r.ohcvr.fmt(), r.witness_drop.fmt(), r.consequence.fmt()])
    return rows


def shadow_rows(records: Sequence[RunRecord], manifest: Manifest) -> tuple[list[list[str]], list[list[str]]]:
    overall, domains = [], []
    for variant, rows in sorted(by_variant(records).items()):
        s = shadow_recall({r.fixture_id: r.realized_text for r in rows}, manifest)
        fmt = lambda x: "null" if x is None else f"{x:.4f}"
        overall.append([variant, fmt(s["overall"])])
        for d, v in s["per_domain"].items():
            domains.append([variant, d, fmt(v)])
    return overall, domains


def selector_rows(summary: Mapping[str, Mapping[str, Any]]) -> list[list[str]]:
    fmt = lambda x: "null" if x is None else f"{x:.4f}"
    return [
        [name, f"{s['avg_size']:.2f}", fmt(s["hard"]), fmt(s["required_witness"]), fmt(s["tail"]), fmt(s["debt"]), fmt(s["control_union"])]
        for name, s in summary.items()
    ]


def interval_rows(named: Mapping[str, Interval]) -> list[list[str]]:
    return [[k, f"{v.estimate:.4f}", f"{v.ci_low:.4f}", f"{v.ci_high:.4f}"] for k, v in named.items()]


def cluster_rows(res: ClusterResult) -> list[list[str]]:
    named = {f"{w} share": iv for w, iv in res.shares.items()}
    named.update({f"{a}-{b} margin": iv for (a, b), iv in res.margins.items()})
    return interval_rows(named)


def write_reports(records: Sequence[RunRecord], manifest: Manifest | None, out_dir: str | Path) -> list[Path]:
    """Summary, covered-detail, state and (with a manifest) horizon and shadow tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = reports_for(records)
    written = []

    def emit(name: str, header: Sequence[str], rows: Sequence[Sequence[str]], footer: bool = False) -> None:
        txt = _align(header, rows) + (FOOTER + "\n" if footer else "")
        (out / f"{name}.txt").write_text(txt)
        (out / f"{name}.csv").write_text(_csv(header, rows))
        written.extend([out / f"{name}.txt", out / f"{name}.csv"])

    emit("summary", ["Method", *SUMMARY_COLUMNS], summary_rows(reports), footer=True)
    emit("covered_detail", ["Method", *DETAIL_COLUMNS], detail_rows(reports), footer=True)
    emit("states", *state_rows(reports))
    if manifest is not None and records:
        emit("horizon", ["Method", "Domains", "Att.", "Struct.", "OHCVR", "Wit.", "Cons."], horizon_rows(records, manifest))
        overall, domains = shadow_rows(records, manifest)
        emit("shadow_overall", ["Method", "Uncomp."], overall)
        emit("shadow_domain", ["Method", "Domain", "Uncomp."], domains)
    return written
