"""Lexicographic commitment validation and repair routing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from cbea.candidates import ControlAct, InfeasibilityReason, StructuredCommitment
from cbea.contract import (
    CoverageMatrix,
    EvidencePool,
    HardContract,
    MutableState,
    RequiredCoverageSet,
    TurnContext,
    check_predicate,
)

SOFT_DIMS, SOFT_WITNESS, SOFT_DEBT = 1.0, 0.5, 0.25
SOFT_MAX = SOFT_DIMS + SOFT_WITNESS + SOFT_DEBT

REPAIR_ROUTE = {
    "missing_evidence": "clarify",
    "contract_conflict": "recontract",
    "unsupported_commitment": "abstain",
    "validator_failure": "fallback",
}


class EmptyCandidateSet(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ViolationVector:
    hard: int
    coverage: int
    no_feasible_flag: int
    neg_soft: float
    unknown_witnesses: tuple[str, ...] = field(default=(), compare=False)

    @property
    def key(self) -> tuple[int, int, int, float]:
        return (self.hard, self.coverage, self.no_feasible_flag, self.neg_soft)

    @property
    def validator_failure(self) -> bool:
        return bool(self.unknown_witnesses)


@dataclass(frozen=True)
class GateContext:
    """Everything the gate needs for one turn.

    ``check_coverage`` is off only in the coverage/tail ablation, where the
    requirement set no longer carries the coverage component.
    """

    contract: HardContract
    Z: frozenset[str]
    requirements: RequiredCoverageSet
    matrix: CoverageMatrix
    state: MutableState
    context: TurnContext
    pool: EvidencePool
    check_coverage: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "Z", frozenset(self.Z))


def failed_predicates(a: StructuredCommitment, h: HardContract) -> tuple[str, ...]:
    return tuple(p.id for p in h if not check_predicate(p, a))


def uncovered_requirements(
    a: StructuredCommitment, Z: frozenset[str], R: RequiredCoverageSet, M: CoverageMatrix
) -> tuple[str, ...]:
    cited = [e for e in a.evidence_witness_ids if e in Z and M.has_evidence(e)]
    return tuple(r for r in R.ids if not any(M.covers(e, r) for e in cited))


def soft_score(a: StructuredCommitment, u: MutableState, Z: Iterable[str], c: TurnContext, pool: EvidencePool) -> float:
    Z = frozenset(Z)
    wits = list(dict.fromkeys(a.evidence_witness_ids))
    in_z = [e for e in wits if e in Z and e in pool]
    if c.active_dimensions:
        addressed = {pool.get(e).dimension for e in in_z} & c.active_dimensions
        dims = len(addressed) / len(c.active_dimensions)
    else:
        dims = 1.0
    witness = len(in_z) / len(wits) if wits else 0.0
    due = u.due
    if due:
        acked = set(a.consequence_obligations)
        debt = sum(1 for o in due if o.id in acked) / len(due)
    else:
        debt = 1.0
    return SOFT_DIMS * dims + SOFT_WITNESS * witness + SOFT_DEBT * debt


def violation_vector(a: StructuredCommitment, ctx: GateContext, infeasible: bool = False) -> ViolationVector:
    hard = len(failed_predicates(a, ctx.contract))
    if ctx.check_coverage:
        coverage = len(uncovered_requirements(a, ctx.Z, ctx.requirements, ctx.matrix))
    else:
        coverage = 0
    unknown = tuple(e for e in a.evidence_witness_ids if e not in ctx.Z)
    flag = 1 if (infeasible and a.is_commitment) else 0
    S = soft_score(a, ctx.state, ctx.Z, ctx.context, ctx.pool)
    return ViolationVector(hard, coverage, flag, -S, unknown)


def _rank_key(item: tuple[StructuredCommitment, ViolationVector]):
    a, v = item
    return (*v.key, a.candidate_id, a.selected_option)


def lex_select(
    A: Sequence[StructuredCommitment], ctx: GateContext, infeasible: bool = False
) -> list[tuple[StructuredCommitment, ViolationVector]]:
    """Total order by (hard, coverage, no_feasible_flag, -S), ties by candidate id."""
    if not A:
        raise EmptyCandidateSet("no candidates to rank")
    scored = [(a, violation_vector(a, ctx, infeasible)) for a in A]
    return sorted(scored, key=_rank_key)


def feasible_set(A: Sequence[StructuredCommitment], ctx: GateContext) -> list[StructuredCommitment]:
    out = []
    for a in A:
        v = violation_vector(a, ctx)
        if v.hard == 0 and v.coverage == 0:
            out.append(a)
    return out


def diagnose_infeasibility(A: Sequence[StructuredCommitment], ctx: GateContext) -> InfeasibilityReason:
    """Reason for an empty feasible set; conflict outranks missing evidence."""
    commitments = [a for a in A if a.is_commitment]
    if commitments and all(failed_predicates(a, ctx.contract) for a in commitments):
        failed = sorted({p for a in commitments for p in failed_predicates(a, ctx.contract)})
        return InfeasibilityReason("contract_conflict", tuple(failed))
    reachable = {r for e in ctx.Z if ctx.matrix.has_evidence(e) for r in ctx.matrix.covered_by(e)}
    for a in commitments:
        if failed_predicates(a, ctx.contract):
            continue
        gaps = uncovered_requirements(a, ctx.Z, ctx.requirements, ctx.matrix) if ctx.check_coverage else ()
        if gaps and all(r not in reachable for r in gaps):
            return InfeasibilityReason("missing_evidence", gaps)
    unknown = sorted({e for a in commitments for e in a.evidence_witness_ids if e not in ctx.Z})
    if unknown:
        return InfeasibilityReason("unsupported_commitment", tuple(unknown))
    return InfeasibilityReason("validator_failure", ())


def route_repair(reason: InfeasibilityReason) -> ControlAct:
    return ControlAct(REPAIR_ROUTE[reason.kind], None, reason)


@dataclass(frozen=True)
class GateDecision:
    act: ControlAct
    vector: ViolationVector | None
    ranked: tuple[tuple[StructuredCommitment, ViolationVector], ...]
    feasible: tuple[str, ...]
    reason: InfeasibilityReason | None = None


def gate(A: Sequence[StructuredCommitment], ctx: GateContext) -> GateDecision:
    if not A:
        raise EmptyCandidateSet("no candidates to gate")
    F = feasible_set(A, ctx)
    infeasible = not F
    ranked = tuple(lex_select(A, ctx, infeasible))
    if F:
        fids = {id(a) for a in F}
        best = min(
            ((a, v) for a, v in ranked if id(a) in fids),
            key=lambda av: (av[1].neg_soft, av[0].candidate_id, av[0].selected_option),
        )
        return GateDecision(
            ControlAct.from_commitment(best[0]), best[1], ranked, tuple(a.candidate_id for a in F)
        )
    reason = diagnose_infeasibility(A, ctx)
    return GateDecision(route_repair(reason), None, ranked, (), reason)


def emit_or_route(A: Sequence[StructuredCommitment], ctx: GateContext) -> ControlAct:
    return gate(A, ctx).act
