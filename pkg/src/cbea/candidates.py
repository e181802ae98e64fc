"""Structured candidates: schema, parsing, rule-based generation, realization and state update."""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Sequence

from cbea.contract import (
    Compiled,
    CoverageMatrix,
    EvidencePool,
    HardContract,
    MutableState,
    Obligation,
    RequiredCoverageSet,
    TurnContext,
    check_predicate,
)
from cbea.text import normalize

if TYPE_CHECKING:
    from cbea.fixtures import Fixture

REPAIR_KINDS = ("clarify", "recontract", "abstain", "fallback")
REPAIR_STATUSES = ("none", *REPAIR_KINDS)
ACT_KINDS = ("commitment", *REPAIR_KINDS)
OUTCOME_STATES = (
    "emitted",
    "repair_act",
    "timeout",
    "no_output",
    "parse_failure",
    "partial_output",
    "blank_output",
    "invalid",
)
FAILURE_STATES = OUTCOME_STATES[2:]

_LIST_FIELDS = (
    "claimed_predicates",
    "evidence_witness_ids",
    "covered_requirements",
    "consequence_obligations",
    "surface_requirements",
)
_REQUIRED_FIELDS = ("selected_option", "commitment_type", *_LIST_FIELDS, "repair_status")
_OPTIONAL_FIELDS = ("surface_text", "terms", "candidate_id")
SCHEMA_FIELDS = _REQUIRED_FIELDS + _OPTIONAL_FIELDS

# source priority when the generator builds an under-covered candidate
_DROP_PRIORITY = ("tail_witness", "consequence_debt", "required_field", "scene_obligation", "hard_predicate")


class ParseFailure(ValueError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class MissingSurfaceRequirement(ValueError):
    pass


@dataclass(frozen=True)
class StructuredCommitment:
    selected_option: str
    commitment_type: str
    claimed_predicates: tuple[str, ...] = ()
    evidence_witness_ids: tuple[str, ...] = ()
    covered_requirements: tuple[str, ...] = ()
    consequence_obligations: tuple[str, ...] = ()
    repair_status: str = "none"
    surface_requirements: tuple[str, ...] = ()
    surface_text: str = ""
    terms: Mapping[str, Any] = field(default_factory=dict)
    candidate_id: str = ""

    def __post_init__(self) -> None:
        for name in _LIST_FIELDS:
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "terms", dict(self.terms))
        if self.repair_status not in REPAIR_STATUSES:
            raise ValueError(f"unknown repair_status {self.repair_status!r}")
        if self.repair_status == "none":
            if not self.selected_option:
                raise ValueError("a commitment must select an option")
        elif self.selected_option or self.consequence_obligations:
            raise ValueError("repair acts carry no commitment")

    @property
    def is_commitment(self) -> bool:
        return self.repair_status == "none"

    def to_dict(self) -> dict[str, Any]:
        d = {name: getattr(self, name) for name in SCHEMA_FIELDS}
        for name in _LIST_FIELDS:
            d[name] = list(d[name])
        return d


def serialize_commitment(a: StructuredCommitment) -> str:
    return json.dumps(a.to_dict(), sort_keys=True, separators=(",", ":"))


_FENCE = re.compile(r"^\s*```(?:json)?\s*(.*?)\s*```\s*$", re.S)


def parse_commitment(text: str) -> StructuredCommitment:
    """Strict schema parse; raises ParseFailure on anything else."""
    if not text or not text.strip():
        raise ParseFailure("blank")
    m = _FENCE.match(text)
    body = m.group(1) if m else text
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"malformed json: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ParseFailure("top level is not an object")
    unknown = set(data) - set(SCHEMA_FIELDS)
    if unknown:
        raise ParseFailure(f"unknown fields {sorted(unknown)}")
    missing = [k for k in _REQUIRED_FIELDS if k not in data]
    if missing:
        raise ParseFailure(f"missing fields {missing}")
    for k in ("selected_option", "commitment_type", "repair_status", "surface_text", "candidate_id"):
        if k in data and not isinstance(data[k], str):
            raise ParseFailure(f"{k} must be a string")
    for k in _LIST_FIELDS:
        if not isinstance(data[k], list) or not all(isinstance(x, str) for x in data[k]):
            raise ParseFailure(f"{k} must be a list of strings")
    if "terms" in data and not isinstance(data["terms"], dict):
        raise ParseFailure("terms must be an object")
    try:
        return StructuredCommitment(**data)
    except ValueError as exc:
        raise ParseFailure(str(exc)) from None


@dataclass(frozen=True)
class InfeasibilityReason:
    kind: str
    detail: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("missing_evidence", "contract_conflict", "unsupported_commitment", "validator_failure"):
            raise ValueError(f"unknown infeasibility kind {self.kind!r}")
        object.__setattr__(self, "detail", tuple(self.detail))


@dataclass(frozen=True)
class ControlAct:
    kind: str
    commitment: StructuredCommitment | None = None
    reason: InfeasibilityReason | None = None

    def __post_init__(self) -> None:
        if self.kind not in ACT_KINDS:
            raise ValueError(f"unknown act kind {self.kind!r}")
        if self.kind == "commitment":
            if self.commitment is None or not self.commitment.is_commitment:
                raise ValueError("commitment act needs a commitment payload")
        elif self.commitment is not None and (
            self.commitment.repair_status != self.kind or self.commitment.selected_option
        ):
            raise ValueError("repair acts must not carry a selected option")

    @property
    def is_commitment(self) -> bool:
        return self.kind == "commitment"

    @classmethod
    def from_commitment(cls, a: StructuredCommitment) -> "ControlAct":
        return cls("commitment" if a.is_commitment else a.repair_status, a)


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model_id: str = ""
    temperature: float = 0.2
    max_output_tokens: int = 2200
    parse_retries: int = 3
    timeout_seconds: int = 180
    api_key_env: str = "CBEA_BACKEND_API_KEY"
    max_in_flight: int = 4


@dataclass(frozen=True)
class AttemptOutcome:
    state: str
    act: ControlAct | None = None
    raw_text: str = ""
    input_tokens: int = 0
    output_tokens: int = 0
    retries: int = 0
    reason: str = ""

    def __post_init__(self) -> None:
        if self.state not in OUTCOME_STATES:
            raise ValueError(f"unknown outcome state {self.state!r}")
        if self.state == "emitted" and (self.act is None or not self.act.is_commitment):
            raise ValueError("emitted outcome needs a commitment act")
        if self.state == "repair_act" and (self.act is None or self.act.is_commitment):
            raise ValueError("repair outcome needs a non-commitment act")


def outcome_for_act(act: ControlAct, **kw: Any) -> AttemptOutcome:
    return AttemptOutcome("emitted" if act.is_commitment else "repair_act", act, **kw)


# --- rule-based generation ----------------------------------------------------

GATED_VARIANTS = frozenset({"validator_only", "runtime_no_cbea", "cbea_lcv", "oracle_evidence"})
UNGATED_VARIANTS = frozenset({"raw", "summarized", "rag", "long_context", "tool_agent"})


def _witness_map(R: RequiredCoverageSet, M: CoverageMatrix, Z: frozenset[str]) -> dict[str, str]:
    out = {}
    for r in R:
        if r.id not in M.requirement_ids:
            continue
        cover = sorted(e for e in M.covering(r.id) if e in Z)
        if cover:
            out[r.id] = cover[0]
    return out


def _acknowledged(u: MutableState, Z: frozenset[str]) -> list[str]:
    return [o.id for o in u.due if Z.intersection(o.source_evidence_ids)]


def soft_units(pool: EvidencePool) -> list[str]:
    return [e.id for e in pool if not e.provenance.confirmed]


def candidate_text(a: StructuredCommitment, pool: EvidencePool) -> str:
    parts = [a.surface_text, str(a.terms.get("label", a.selected_option))]
    parts += [pool.get(e).content for e in a.evidence_witness_ids if e in pool]
    parts += [pool.get(c).content for c in a.claimed_predicates if c in pool]
    return " ".join(parts)


def _jitter(seed: int, *keys: str) -> float:
    h = hashlib.sha256("|".join((str(seed), *keys)).encode()).digest()
    return int.from_bytes(h[:8], "big") / 2**64


def generate_candidates_rule_based(
    fixture: "Fixture",
    compiled: Compiled,
    Z: Iterable[str],
    variant: str = "cbea_lcv",
    seed: int = 0,
    requirements: RequiredCoverageSet | None = None,
) -> list[StructuredCommitment]:
    """Deterministic candidate set over the evidence ids ``Z``.

    Per option: a fully witnessed candidate, one that hardens a soft hint, and
    one missing a witness; then repair candidates for each applicable reason.
    Gated variants get generation order; ungated baselines get the list ranked
    by surface relevance with a seeded perturbation standing in for sampling.
    """
    Z = frozenset(Z)
    h, pool, u, R = compiled.contract, compiled.pool, compiled.state, requirements or compiled.requirements
    M = compiled.matrix
    rtype = {r.id: r.source for r in R}
    witness = _witness_map(R, M, Z)
    ack = _acknowledged(u, Z)
    hints = soft_units(pool)
    out: list[StructuredCommitment] = []

    for opt in fixture.options:
        wits = sorted(set(witness.values()))
        base = StructuredCommitment(
            selected_option=opt["id"],
            commitment_type="recommendation",
            claimed_predicates=h.ids,
            evidence_witness_ids=tuple(wits),
            covered_requirements=tuple(r for r in R.ids if r in witness),
            consequence_obligations=tuple(ack) + tuple(opt.get("follow_ups", ())),
            surface_requirements=tuple(fixture.surface_requirements),
            terms=opt.get("terms", {}) | {"label": opt.get("label", opt["id"])},
            candidate_id=f"{opt['id']}:full",
        )
        out.append(base)
        claim = hints[0] if hints else f"assumed:{opt['id']}"
        out.append(
            replace(base, claimed_predicates=base.claimed_predicates + (claim,), candidate_id=f"{opt['id']}:hardened")
        )
        drop = next(
            (r for src in _DROP_PRIORITY for r in R.ids if rtype[r] == src and r in witness),
            None,
        )
        if drop is not None:
            gone = witness[drop]
            lost = {r for r, e in witness.items() if e == gone}
            kept_ack = [o.id for o in u.due if o.id in ack and (Z - {gone}).intersection(o.source_evidence_ids)]
            out.append(
                replace(
                    base,
                    evidence_witness_ids=tuple(e for e in wits if e != gone),
                    covered_requirements=tuple(r for r in base.covered_requirements if r not in lost),
                    consequence_obligations=tuple(kept_ack) + tuple(opt.get("follow_ups", ())),
                    candidate_id=f"{opt['id']}:under",
                )
            )

    uncovered = tuple(r for r in R.ids if r not in witness)
    if uncovered:
        out.append(_repair("clarify", uncovered))
    violated = sorted({p.id for a in out if a.is_commitment for p in h if not check_predicate(p, a)})
    if violated:
        out.append(_repair("recontract", tuple(violated)))
    out.append(_repair("abstain", ()))

    if variant not in UNGATED_VARIANTS:
        return out
    query = frozenset(compiled.context.observation_tokens)

    def score(a: StructuredCommitment) -> float:
        toks = set(normalize(candidate_text(a, pool)))
        rel = len(toks & query) / (len(query) or 1)
        return rel + 0.5 * _jitter(seed, fixture.id, variant, a.candidate_id)

    return sorted(out, key=lambda a: (-score(a), a.candidate_id))


def _repair(kind: str, detail: tuple[str, ...]) -> StructuredCommitment:
    return StructuredCommitment(
        selected_option="",
        commitment_type=kind,
        repair_status=kind,
        terms={"detail": list(detail)},
        candidate_id=f"repair:{kind}",
    )


# --- realization and state update ----------------------------------------------

def realize_surface(
    a: StructuredCommitment | ControlAct,
    u: MutableState,
    Z: EvidencePool,
    c: TurnContext,
    describe: Mapping[str, str] | None = None,
) -> str:
    """Template realization of a commitment or control act; deterministic."""
    describe = describe or {}
    if isinstance(a, ControlAct):
        if a.is_commitment:
            a = a.commitment  # type: ignore[assignment]
        else:
            detail = a.reason.detail if a.reason else tuple((a.commitment.terms if a.commitment else {}).get("detail", ()))
            return _repair_text(a.kind, detail, describe)
    assert isinstance(a, StructuredCommitment)
    if not a.is_commitment:
        return _repair_text(a.repair_status, tuple(a.terms.get("detail", ())), describe)

    label = a.terms.get("label", a.selected_option)
    lines = [f"Recommendation: {label}."]
    snippets = [f"[{e}] {Z.get(e).content}" for e in a.evidence_witness_ids if e in Z]
    if snippets:
        lines.append("Grounded in: " + " ".join(snippets))
    due = {o.id: o for o in u.obligations}
    carried = [due[o].description or o if o in due else o for o in a.consequence_obligations]
    if carried:
        lines.append("Carrying forward: " + "; ".join(carried) + ".")
    for req in a.surface_requirements:
        if not req.strip():
            raise MissingSurfaceRequirement("empty surface requirement")
        lines.append(f"Note: {req}")
    return " ".join(lines)


def _repair_text(kind: str, detail: Sequence[str], describe: Mapping[str, str]) -> str:
    named = "; ".join(describe.get(d, d) for d in detail)
    if kind == "clarify":
        return f"Before I recommend anything, please confirm: {named}?" if named else "Before I recommend anything, could you clarify one detail?"
    if kind == "recontract":
        return f"Every option conflicts with a confirmed boundary ({named}). Do you want to revise that boundary?"
    if kind == "abstain":
        return "I cannot support a commitment with the evidence available, so I will not recommend an option."
    return "Falling back to a side-by-side comparison with explicit uncertainty; no option is recommended."


def update_state(u: MutableState, a: ControlAct, x_next: TurnContext) -> MutableState:
    turn = u.turn + 1
    obligations = list(u.obligations)
    if a.is_commitment:
        known = {o.id for o in obligations}
        for oid in a.commitment.consequence_obligations:  # type: ignore[union-attr]
            if oid not in known:
                obligations.append(Obligation(oid, turn + 1, oid))
                known.add(oid)
    digest = hashlib.sha256((u.history_digest + "\n" + x_next.scenario_text).encode()).hexdigest()
    return MutableState(turn, tuple(obligations), digest)


# --- prompts -------------------------------------------------------------------

SCHEMA_BLURB = (
    "Reply with one JSON object with fields selected_option, commitment_type, claimed_predicates, "
    "evidence_witness_ids, covered_requirements, consequence_obligations, repair_status, "
    "surface_requirements, surface_text."
)


def _options_block(fixture: "Fixture") -> list[str]:
    return [f"- {o['id']}: {o.get('label', o['id'])}" for o in fixture.options]


def build_prompt(
    fixture: "Fixture",
    compiled: Compiled,
    variant: str,
    Z: Iterable[str] = (),
    history: Sequence[str] | None = None,
) -> str:
    """Prompt text for one attempt.

    Gated variants see only compiled fields and the activated evidence; the
    baselines see their own view of the observation history.
    """
    lines = [SCHEMA_BLURB, "Options:", *_options_block(fixture)]
    if variant not in UNGATED_VARIANTS:
        lines.append("Confirmed contract:")
        lines += [f"- {p.id}: {p.provenance.raw_span}" for p in compiled.contract]
        due = compiled.state.due
        if due:
            lines.append("Obligations due:")
            lines += [f"- {o.id}" for o in due]
        lines.append("Evidence:")
        Zs = frozenset(Z)
        lines += [f"- [{e.id}] {e.content}" for e in compiled.pool if e.id in Zs]
    else:
        lines.append("History:")
        lines += list(history if history is not None else fixture.observations)
    lines.append("Current turn: " + compiled.context.scenario_text)
    return "\n".join(lines)
