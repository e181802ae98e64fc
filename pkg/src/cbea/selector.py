"""Budgeted evidence activation (CBEA), the MMR baseline and selector recall.

J(Z) = rel*Rel + cov*Cov + tail*Tail + debt*Debt - over*Over, maximized
greedily under a cost budget with a tail-witness pass first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from cbea.contract import CoverageMatrix, EvidencePool, EvidenceUnit, MutableState, RequiredCoverageSet, TurnContext
from cbea.text import jaccard, token_set

TERMS = ("rel", "cov", "tail", "debt", "over")
RECALL_CATEGORIES = ("hard", "required_witness", "tail", "debt")


class UnknownId(KeyError):
    pass


@dataclass(frozen=True)
class SelectorWeights:
    rel: float = 1.0
    cov: float = 2.0
    tail: float = 2.0
    debt: float = 1.0
    over: float = 1.0

    def __post_init__(self) -> None:
        for name in TERMS:
            v = getattr(self, name)
            if not (v >= 0 and v != float("inf")):
                raise ValueError(f"weight {name} must be finite and nonnegative")

    def without_coverage_terms(self) -> "SelectorWeights":
        return SelectorWeights(rel=self.rel, cov=0.0, tail=0.0, debt=0.0, over=self.over)


@dataclass(frozen=True)
class Budget:
    total: int
    tail_reserve: int = 0

    def __post_init__(self) -> None:
        if self.total < 0 or self.tail_reserve < 0:
            raise ValueError("budget must be nonnegative")
        if self.tail_reserve > self.total:
            raise ValueError("tail reserve exceeds total budget")

    @property
    def main(self) -> int:
        return self.total - self.tail_reserve

    @classmethod
    def for_pool(cls, pool: EvidencePool, total: int) -> "Budget":
        """Reserve the cost of the labeled tail units, capped at a third of the total."""
        tail_cost = sum(u.cost for u in pool if u.tail)
        return cls(total, min(tail_cost, total // 3))


@dataclass(frozen=True)
class ActivationResult:
    selected: frozenset[str]
    spent_cost: int
    objective_value: float
    per_term: Mapping[str, float]
    order: tuple[str, ...] = ()


def relevance(unit: EvidenceUnit, query: frozenset[str]) -> float:
    toks = token_set(unit.content)
    if not toks:
        return 0.0
    return min(1.0, len(toks & query) / len(toks))


def coverage_indicator(Z: Iterable[str], rid: str, M: CoverageMatrix) -> int:
    if rid not in M.requirement_ids:
        raise UnknownId(rid)
    for eid in Z:
        if not M.has_evidence(eid):
            raise UnknownId(eid)
        if M.covers(eid, rid):
            return 1
    return 0


def objective(
    Z: Iterable[str],
    pool: EvidencePool,
    R: RequiredCoverageSet,
    M: CoverageMatrix,
    u: MutableState,
    c: TurnContext,
    weights: SelectorWeights = SelectorWeights(),
) -> tuple[float, dict[str, float]]:
    """Return J(Z) and its unweighted terms."""
    Z = frozenset(Z)
    for eid in Z:
        if eid not in pool:
            raise UnknownId(eid)
    query = frozenset(c.observation_tokens)
    units = [pool.get(e) for e in sorted(Z)]
    rids = set(R.ids)
    tail_rids = {r.id for r in R.by_source("tail_witness")}

    rel = sum(relevance(unit, query) for unit in units)
    cov = sum(r.weight * coverage_indicator(Z, r.id, M) for r in R)
    tail = sum(1 for unit in units if unit.tail and unit.covers & tail_rids)
    debt = sum(1 for o in u.obligations if Z.intersection(o.source_evidence_ids))
    over = sum(
        1 for unit in units if unit.dimension not in c.active_dimensions and not (unit.covers & rids)
    )
    terms = {"rel": rel, "cov": cov, "tail": float(tail), "debt": float(debt), "over": float(over)}
    J = (
        weights.rel * rel
        + weights.cov * cov
        + weights.tail * tail
        + weights.debt * debt
        - weights.over * over
    )
    return J, terms


class _Scorer:
    """Incremental marginal gains for the greedy pass."""

    def __init__(self, pool, R, u, c, weights):
        self.pool = pool
        self.weights = weights
        self.rids = set(R.ids)
        self.rweight = {r.id: r.weight for r in R}
        self.tail_rids = {r.id for r in R.by_source("tail_witness")}
        query = frozenset(c.observation_tokens)
        self.rel = {e.id: relevance(e, query) for e in pool}
        self.over = {
            e.id: 1.0 if (e.dimension not in c.active_dimensions and not (e.covers & self.rids)) else 0.0
            for e in pool
        }
        self.obligation_sources = {o.id: frozenset(o.source_evidence_ids) for o in u.obligations}
        self.covered: set[str] = set()
        self.credited: set[str] = set()

    def gain(self, e: EvidenceUnit) -> float:
        w = self.weights
        new_cov = sum(self.rweight[r] for r in (e.covers & self.rids) - self.covered)
        tail = 1.0 if e.tail and e.covers & self.tail_rids else 0.0
        debt = sum(
            1 for oid, src in self.obligation_sources.items() if oid not in self.credited and e.id in src
        )
        return w.rel * self.rel[e.id] + w.cov * new_cov + w.tail * tail + w.debt * debt - w.over * self.over[e.id]

    def add(self, e: EvidenceUnit) -> None:
        self.covered |= e.covers & self.rids
        self.credited |= {oid for oid, src in self.obligation_sources.items() if e.id in src}


def greedy_select(
    pool: EvidencePool,
    R: RequiredCoverageSet,
    M: CoverageMatrix,
    u: MutableState,
    c: TurnContext,
    weights: SelectorWeights = SelectorWeights(),
    budget: Budget = Budget(12),
) -> ActivationResult:
    """Greedy budgeted coverage with tail-witness reservation.

    The tail pass runs first whenever a reserve is set; the reserve is a floor,
    so tail units may also draw on the main budget, and any unspent reserve
    funds ordinary evidence afterwards.
    """
    scorer = _Scorer(pool, R, u, c, weights)
    selected: list[str] = []
    spent = 0

    if budget.tail_reserve > 0:
        for req in R.by_source("tail_witness"):
            if req.id in scorer.covered:
                continue
            options = sorted(
                (e for e in pool if e.tail and req.id in e.covers and e.id not in selected),
                key=lambda e: (e.cost, e.id),
            )
            for e in options:
                if spent + e.cost <= budget.total:
                    selected.append(e.id)
                    spent += e.cost
                    scorer.add(e)
                    break

    while True:
        best: EvidenceUnit | None = None
        best_ratio = 0.0
        for e in pool:
            if e.id in selected or spent + e.cost > budget.total:
                continue
            ratio = scorer.gain(e) / e.cost
            if ratio > best_ratio or (best is not None and ratio == best_ratio and e.id < best.id):
                best, best_ratio = e, ratio
        if best is None or best_ratio <= 0:
            break
        selected.append(best.id)
        spent += best.cost
        scorer.add(best)

    J, terms = objective(selected, pool, R, M, u, c, weights)
    return ActivationResult(frozenset(selected), spent, J, terms, tuple(selected))


def mmr_select(
    pool: EvidencePool | Sequence[EvidenceUnit],
    query_tokens: Iterable[str],
    budget: int,
    lambda_mmr: float = 0.5,
) -> tuple[str, ...]:
    """Relevance-diversity reranking of the query-matching units. Reads only ids, contents and costs.

    Units sharing no token with the query are never retrieved, so they are
    never candidates for the rerank.
    """
    if not 0.0 <= lambda_mmr <= 1.0:
        raise ValueError("lambda_mmr must lie in [0, 1]")
    query = frozenset(query_tokens)
    toks = {e.id: token_set(e.content) for e in pool}
    sim_q = {i: jaccard(t, query) for i, t in toks.items()}
    units = sorted((e for e in pool if sim_q[e.id] > 0), key=lambda e: e.id)
    chosen: list[str] = []
    spent = 0
    while True:
        best_id, best_score = None, float("-inf")
        for e in units:
            if e.id in chosen or spent + e.cost > budget:
                continue
            redundancy = max((jaccard(toks[e.id], toks[s]) for s in chosen), default=0.0)
            score = lambda_mmr * sim_q[e.id] - (1 - lambda_mmr) * redundancy
            if score > best_score:
                best_id, best_score = e.id, score
        if best_id is None:
            return tuple(chosen)
        chosen.append(best_id)
        spent += next(e.cost for e in units if e.id == best_id)


@dataclass(frozen=True)
class SelectorRecall:
    hard: float
    required_witness: float
    tail: float
    debt: float
    control_union: float
    empty: frozenset[str] = field(default_factory=frozenset)

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in (*RECALL_CATEGORIES, "control_union")}


def selector_recall(Z: Iterable[str], oracle: Mapping[str, Iterable[str]]) -> SelectorRecall:
    """Per-category recall of labeled control evidence; empty denominators report 1.0 and are flagged."""
    Z = frozenset(Z)
    values: dict[str, float] = {}
    empty: set[str] = set()
    union: set[str] = set()
    for cat in RECALL_CATEGORIES:
        labeled = frozenset(oracle.get(cat, ()))
        union |= labeled
        if not labeled:
            values[cat] = 1.0
            empty.add(cat)
        else:
            values[cat] = len(Z & labeled) / len(labeled)
    if union:
        values["control_union"] = len(Z & union) / len(union)
    else:
        values["control_union"] = 1.0
        empty.add("control_union")
    return SelectorRecall(**values, empty=frozenset(empty))


def mean_recall(reports: Sequence[SelectorRecall]) -> dict[str, float | None]:
    """Average each category over the fixtures that actually label it."""
    out: dict[str, float | None] = {}
    for cat in (*RECALL_CATEGORIES, "control_union"):
        vals = [getattr(r, cat) for r in reports if cat not in r.empty]
        out[cat] = sum(vals) / len(vals) if vals else None
    return out
