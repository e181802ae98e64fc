"""Benchmark metrics with explicit denominators.

Every attempt is classified exactly once. Rates over an empty denominator are
reported as undefined with a reason instead of silently becoming zero.
"""

from __future__ import annotations

import json
import statistics
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from cbea.candidates import (
    FAILURE_STATES,
    OUTCOME_STATES,
    AttemptOutcome,
    ControlAct,
    InfeasibilityReason,
    StructuredCommitment,
)
from cbea.contract import check_predicate
from cbea.fixtures import Fixture, Manifest
from cbea.text import normalize


class EmptyDenominator(ValueError):
    pass


class PartitionBreach(ValueError):
    pass


@dataclass(frozen=True)
class OracleEval:
    hard_violation: bool | None = None
    coverage_failure: bool | None = None
    witness_drop: bool | None = None
    consequence_failure: bool | None = None
    infeasible_emission: bool | None = None
    repair_match: bool | None = None


@dataclass(frozen=True)
class RunRecord:
    fixture_id: str
    variant: str
    outcome: AttemptOutcome
    oracle_eval: OracleEval
    realized_text: str = ""
    selected: tuple[str, ...] = ()
    privacy_ok: bool | None = None
    domain_count: int = 0
    domain: str = ""

    def to_json(self) -> str:
        return json.dumps(record_to_dict(self), sort_keys=True)


def _act_to_dict(act: ControlAct | None) -> dict[str, Any] | None:
    if act is None:
        return None
    return {
        "kind": act.kind,
        "commitment": act.commitment.to_dict() if act.commitment else None,
        "reason": asdict(act.reason) if act.reason else None,
    }


def _act_from_dict(d: Mapping[str, Any] | None) -> ControlAct | None:
    if d is None:
        return None
    c = StructuredCommitment(**d["commitment"]) if d.get("commitment") else None
    r = d.get("reason")
    return ControlAct(d["kind"], c, InfeasibilityReason(r["kind"], tuple(r["detail"])) if r else None)


def record_to_dict(r: RunRecord) -> dict[str, Any]:
    o = r.outcome
    return {
        "fixture_id": r.fixture_id,
        "variant": r.variant,
        "outcome": {
            "state": o.state,
            "act": _act_to_dict(o.act),
            "raw_text": o.raw_text,
            "input_tokens": o.input_tokens,
            "output_tokens": o.output_tokens,
            "retries": o.retries,
            "reason": o.reason,
        },
        "oracle_eval": asdict(r.oracle_eval),
        "realized_text": r.realized_text,
        "selected": list(r.selected),
        "privacy_ok": r.privacy_ok,
        "domain_count": r.domain_count,
        "domain": r.domain,
    }


def record_from_dict(d: Mapping[str, Any]) -> RunRecord:
    o = d["outcome"]
    outcome = AttemptOutcome(
        o["state"], _act_from_dict(o["act"]), o["raw_text"], o["input_tokens"], o["output_tokens"], o.get("retries", 0), o.get("reason", "")
    )
    return RunRecord(
        d["fixture_id"], d["variant"], outcome, OracleEval(**d["oracle_eval"]), d.get("realized_text", ""),
        tuple(d.get("selected", ())), d.get("privacy_ok"), d.get("domain_count", 0), d.get("domain", ""),
    )


def write_jsonl(records: Iterable[RunRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_jsonl(path) -> list[RunRecord]:
    with open(path) as fh:
        return [record_from_dict(json.loads(line)) for line in fh if line.strip()]


# --- per-row oracle evaluation --------------------------------------------------

def due_obligations(f: Fixture) -> list[Mapping[str, Any]]:
    turn = f.profile.get("turn", 0)
    return [o for o in f.profile.get("obligations", ()) if o["due_turn"] <= turn]


def evaluate(f: Fixture, outcome: AttemptOutcome) -> OracleEval:
    """Score one attempt against the fixture's oracle labels."""
    emitted = outcome.state == "emitted"
    a = outcome.act.commitment if emitted and outcome.act else None
    hv = cov = wd = cons = None
    if a is not None:
        cited = set(a.evidence_witness_ids)
        hv = any(not check_predicate(p, a) for p in f.oracle_contract)
        required = set(f.oracle_witnesses.get("hard", ())) | set(f.oracle_witnesses.get("required_witness", ()))
        cov = not required <= cited
        tail = set(f.oracle_witnesses.get("tail", ()))
        wd = (not tail <= cited) if tail else None
        due = due_obligations(f)
        if due:
            acked = set(a.consequence_obligations)
            cons = any(o["id"] not in acked or not cited.intersection(o["source_evidence_ids"]) for o in due)
    nf = emitted if f.infeasible else None
    rm = None
    if f.expected_repair is not None:
        rm = outcome.state == "repair_act" and outcome.act is not None and outcome.act.kind == f.expected_repair
    return OracleEval(hv, cov, wd, cons, nf, rm)


# --- aggregation ----------------------------------------------------------------

@dataclass(frozen=True)
class Rate:
    value: float | None
    numerator: int
    denominator: int
    reason: str = ""

    @classmethod
    def of(cls, flags: Sequence[bool], what: str) -> "Rate":
        if not flags:
            return cls(None, 0, 0, f"empty denominator: no {what}")
        n = sum(1 for x in flags if x)
        return cls(n / len(flags), n, len(flags))

    def fmt(self, digits: int = 4) -> str:
        return "null" if self.value is None else f"{self.value:.{digits}f}"


def availability(records: Sequence[RunRecord]) -> float:
    if not records:
        raise EmptyDenominator("availability needs at least one attempted row")
    return sum(1 for r in records if r.outcome.state == "emitted") / len(records)


def _flags(records: Sequence[RunRecord], name: str) -> list[bool]:
    return [getattr(r.oracle_eval, name) for r in records if getattr(r.oracle_eval, name) is not None]


def ohcvr(records: Sequence[RunRecord]) -> Rate:
    return Rate.of(_flags(records, "hard_violation"), "emitted commitments")


def nfer(records: Sequence[RunRecord]) -> Rate:
    return Rate.of(_flags(records, "infeasible_emission"), "oracle-infeasible fixtures")


def repair_correctness(records: Sequence[RunRecord]) -> Rate:
    return Rate.of(_flags(records, "repair_match"), "fixtures with an expected repair")


def coverage_and_continuity(records: Sequence[RunRecord]) -> dict[str, Rate]:
    return {
        "ecf": Rate.of(_flags(records, "coverage_failure"), "emitted commitments"),
        "witness_drop": Rate.of(_flags(records, "witness_drop"), "emitted rows with tail labels"),
        "consequence": Rate.of(_flags(records, "consequence_failure"), "emitted rows with due obligations"),
    }


def denominator_report(records: Sequence[RunRecord]) -> dict[str, dict[str, int]]:
    """State counts per variant; raises PartitionBreach on duplicate or unclassified rows."""
    seen: set[tuple[str, str]] = set()
    out: dict[str, dict[str, int]] = {}
    for r in records:
        key = (r.variant, r.fixture_id)
        if key in seen:
            raise PartitionBreach(f"row classified twice: {key}")
        seen.add(key)
        if r.outcome.state not in OUTCOME_STATES:
            raise PartitionBreach(f"unclassified state {r.outcome.state!r}")
        counts = out.setdefault(r.variant, {s: 0 for s in OUTCOME_STATES} | {"attempted": 0})
        counts[r.outcome.state] += 1
        counts["attempted"] += 1
    for variant, counts in out.items():
        if sum(counts[s] for s in OUTCOME_STATES) != counts["attempted"]:
            raise PartitionBreach(f"state counts for {variant} do not sum to attempted")
    return out


@dataclass(frozen=True)
class MetricReport:
    variant: str
    attempted: int
    invalid: int
    availability: float
    ohcvr: Rate
    ecf: Rate
    witness_drop: Rate
    consequence: Rate
    nfer: Rate
    repair_correctness: Rate
    mean_cost: float
    states: Mapping[str, int] = field(default_factory=dict)


def metric_report(records: Sequence[RunRecord], variant: str | None = None) -> MetricReport:
    if not records:
        raise EmptyDenominator("no records")
    variant = variant or records[0].variant
    states = denominator_report(records)[variant] if len({r.variant for r in records}) == 1 else {}
    cc = coverage_and_continuity(records)
    return MetricReport(
        variant=variant,
        attempted=len(records),
        invalid=sum(1 for r in records if r.outcome.state in FAILURE_STATES),
        availability=availability(records),
        ohcvr=ohcvr(records),
        ecf=cc["ecf"],
        witness_drop=cc["witness_drop"],
        consequence=cc["consequence"],
        nfer=nfer(records),
        repair_correctness=repair_correctness(records),
        mean_cost=statistics.fmean(r.outcome.input_tokens for r in records),
        states=states,
    )


def by_variant(records: Iterable[RunRecord]) -> dict[str, list[RunRecord]]:
    out: dict[str, list[RunRecord]] = defaultdict(list)
    for r in records:
        out[r.variant].append(r)
    return dict(out)


def horizon_grouping(records: Sequence[RunRecord], manifest: Manifest) -> dict[str, dict[int, MetricReport]]:
    counts = {f.id: f.required_domain_count for f in manifest}
    out: dict[str, dict[int, MetricReport]] = {}
    for variant, rows in sorted(by_variant(records).items()):
        groups: dict[int, list[RunRecord]] = defaultdict(list)
        for r in rows:
            groups[counts[r.fixture_id]].append(r)
        out[variant] = {k: metric_report(groups[k], variant) for k in sorted(groups)}
    return out


def payload_stats(records: Sequence[RunRecord], reference: str = "raw") -> dict[str, dict[str, float]]:
    """Median input/output tokens per variant and the input delta against ``reference``."""
    groups = by_variant(records)
    med = {
        v: (statistics.median(r.outcome.input_tokens for r in rows), statistics.median(r.outcome.output_tokens for r in rows))
        for v, rows in groups.items()
    }
    ref = med.get(reference, (None, None))[0]
    out = {}
    for v, (mi, mo) in sorted(med.items()):
        row = {"median_input_tokens": float(mi), "median_output_tokens": float(mo)}
        if ref is not None:
            row["delta_vs_raw"] = float(ref - mi)
            row["reduction_vs_raw"] = float((ref - mi) / ref) if ref else 0.0
        out[v] = row
    return out


def shadow_recall(outputs: Mapping[str, str], manifest: Manifest) -> dict[str, Any]:
    """Weighted uncompiled-fact recall over realized texts keyed by fixture id."""
    matched_w = 0.0
    total_w = 0.0
    per_domain: dict[str, list[float]] = defaultdict(lambda: [0.0, 0.0])
    per_fixture: dict[str, float] = {}
    for f in manifest:
        if f.id not in outputs or not f.shadow_facts:
            continue
        toks = normalize(outputs[f.id])
        hit = [s for s in f.shadow_facts if s.matches(toks)]
        m = sum(s.weight for s in hit)
        t = sum(s.weight for s in f.shadow_facts)
        per_fixture[f.id] = len(hit) / len(f.shadow_facts)
        matched_w += m
        total_w += t
        per_domain[f.domain][0] += m
        per_domain[f.domain][1] += t
    return {
        "overall": matched_w / total_w if total_w else None,
        "per_domain": {d: (m / t if t else None) for d, (m, t) in sorted(per_domain.items())},
        "per_fixture": per_fixture,
    }
