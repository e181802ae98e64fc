"""Runtime objects and contract compilation.

Compilation turns the confirmed-facts block of a fixture into the hard
contract, the evidence pool, the mutable state, the required coverage set and
the binary coverage matrix. Only confirmed answers become predicates;
everything inferred stays in the pool as ordinary evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from cbea.text import normalize

PREDICATE_KINDS = (
    "forbid_option",
    "require_slot",
    "bound_numeric",
    "protect_obligation",
    "no_unwitnessed_claim",
)
COMPARATORS = ("eq", "neq", "leq", "geq", "in_set", "absent")
REQUIREMENT_SOURCES = (
    "hard_predicate",
    "required_field",
    "consequence_debt",
    "scene_obligation",
    "no_feasible_guard",
    "tail_witness",
)

# kind -> comparators that make sense for it
VALID_PAIRINGS: dict[str, frozenset[str]] = {
    "forbid_option": frozenset({"neq", "absent"}),
    "require_slot": frozenset({"eq", "in_set"}),
    "bound_numeric": frozenset({"leq", "geq", "eq"}),
    "protect_obligation": frozenset({"eq", "in_set"}),
    "no_unwitnessed_claim": frozenset({"absent", "neq"}),
}


class ContractError(ValueError):
    pass


class DuplicateId(ContractError):
    pass


class UnconfirmedHardening(ContractError):
    """A soft hint was marked as a predicate source."""


class UnknownRequirement(ContractError):
    pass


@dataclass(frozen=True)
class ProvenanceRecord:
    source_turn: int
    confirmed: bool
    raw_span: str

    def __post_init__(self) -> None:
        if self.source_turn < 0:
            raise ValueError("source_turn must be >= 0")
        if self.confirmed and not self.raw_span:
            raise ValueError("confirmed provenance needs a raw span")


def _freeze_value(value: Any) -> Any:
    if isinstance(value, (list, tuple, set, frozenset)):
        return tuple(sorted(value, key=repr))
    return value


@dataclass(frozen=True)
class HardPredicate:
    id: str
    kind: str
    target: str
    comparator: str
    value: Any
    provenance: ProvenanceRecord
    dimension: str = ""
    description: str = ""

    def __post_init__(self) -> None:
        if self.kind not in VALID_PAIRINGS:
            raise ValueError(f"unknown predicate kind {self.kind!r}")
        if self.comparator not in VALID_PAIRINGS[self.kind]:
            raise ValueError(f"{self.kind} cannot use comparator {self.comparator!r}")
        object.__setattr__(self, "value", _freeze_value(self.value))


@dataclass(frozen=True)
class HardContract:
    predicates: tuple[HardPredicate, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "predicates", tuple(self.predicates))
        _check_unique(p.id for p in self.predicates)
        for p in self.predicates:
            if not p.provenance.confirmed:
                raise UnconfirmedHardening(f"predicate {p.id} is not confirmed")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.predicates)

    def __len__(self) -> int:
        return len(self.predicates)

    def __iter__(self):
        return iter(self.predicates)


@dataclass(frozen=True)
class EvidenceUnit:
    id: str
    content: str
    dimension: str
    provenance: ProvenanceRecord
    tail: bool = False
    cost: int = 1
    covers: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.cost < 1:
            raise ValueError(f"evidence unit {self.id} needs cost >= 1")
        object.__setattr__(self, "covers", frozenset(self.covers))


@dataclass(frozen=True)
class EvidencePool:
    units: tuple[EvidenceUnit, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "units", tuple(self.units))
        _check_unique(u.id for u in self.units)
        object.__setattr__(self, "_index", {u.id: u for u in self.units})

    def __len__(self) -> int:
        return len(self.units)

    def __iter__(self):
        return iter(self.units)

    def __contains__(self, unit_id: object) -> bool:
        return unit_id in self._index  # type: ignore[attr-defined]

    def get(self, unit_id: str) -> EvidenceUnit:
        return self._index[unit_id]  # type: ignore[attr-defined]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(u.id for u in self.units)

    def subset(self, ids: Iterable[str]) -> "EvidencePool":
        keep = set(ids)
        return EvidencePool(tuple(u for u in self.units if u.id in keep))


@dataclass(frozen=True)
class Requirement:
    id: str
    dimension: str
    weight: float = 1.0
    source: str = "required_field"
    description: str = ""

    def __post_init__(self) -> None:
        if self.source not in REQUIREMENT_SOURCES:
            raise ValueError(f"unknown requirement source {self.source!r}")
        if self.weight < 0:
            raise ValueError("requirement weight must be nonnegative")


@dataclass(frozen=True)
class RequiredCoverageSet:
    requirements: tuple[Requirement, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "requirements", tuple(self.requirements))
        _check_unique(r.id for r in self.requirements)

    def __len__(self) -> int:
        return len(self.requirements)

    def __iter__(self):
        return iter(self.requirements)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.requirements)

    def get(self, rid: str) -> Requirement:
        for r in self.requirements:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def by_source(self, *sources: str) -> tuple[Requirement, ...]:
        return tuple(r for r in self.requirements if r.source in sources)

    def without_sources(self, *sources: str) -> "RequiredCoverageSet":
        return RequiredCoverageSet(tuple(r for r in self.requirements if r.source not in sources))


@dataclass(frozen=True, eq=False)
class CoverageMatrix:
    evidence_ids: tuple[str, ...]
    requirement_ids: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.uint8).reshape(
            len(self.evidence_ids), len(self.requirement_ids)
        )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_row", {e: i for i, e in enumerate(self.evidence_ids)})
        object.__setattr__(self, "_col", {r: j for j, r in enumerate(self.requirement_ids)})

    @classmethod
    def build(cls, pool: EvidencePool, requirements: RequiredCoverageSet) -> "CoverageMatrix":
        rids = requirements.ids
        entries = np.zeros((len(pool), len(rids)), dtype=np.uint8)
        for i, unit in enumerate(pool):
            for j, rid in enumerate(rids):
                if rid in unit.covers:
                    entries[i, j] = 1
        return cls(pool.ids, rids, entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape  # type: ignore[return-value]

    def has_evidence(self, eid: str) -> bool:
        return eid in self._row  # type: ignore[attr-defined]

    def covers(self, eid: str, rid: str) -> bool:
        return bool(self.entries[self._row[eid], self._col[rid]])  # type: ignore[attr-defined]

    def covering(self, rid: str) -> tuple[str, ...]:
        j = self._col[rid]  # type: ignore[attr-defined]
        return tuple(e for i, e in enumerate(self.evidence_ids) if self.entries[i, j])

    def covered_by(self, eid: str) -> tuple[str, ...]:
        i = self._row[eid]  # type: ignore[attr-defined]
        return tuple(r for j, r in enumerate(self.requirement_ids) if self.entries[i, j])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoverageMatrix):
            return NotImplemented
        return (
            self.evidence_ids == other.evidence_ids
            and self.requirement_ids == other.requirement_ids
            and np.array_equal(self.entries, other.entries)
        )


@dataclass(frozen=True)
class Obligation:
    id: str
    due_turn: int
    description: str = ""
    source_evidence_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_evidence_ids", tuple(self.source_evidence_ids))


@dataclass(frozen=True)
class MutableState:
    turn: int = 0
    obligations: tuple[Obligation, ...] = ()
    history_digest: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "obligations", tuple(self.obligations))

    @property
    def due(self) -> tuple[Obligation, ...]:
        return tuple(o for o in self.obligations if o.due_turn <= self.turn)

    @property
    def overdue_ids(self) -> frozenset[str]:
        return frozenset(o.id for o in self.due)

    @property
    def obligation_ids(self) -> tuple[str, ...]:
        return tuple(o.id for o in self.obligations)


@dataclass(frozen=True)
class RequirementDecl:
    """A fixture-declared requirement that the runtime must witness this turn."""

    id: str
    dimension: str
    description: str = ""


@dataclass(frozen=True)
class TurnContext:
    scenario_text: str
    observation_tokens: tuple[str, ...]
    active_dimensions: frozenset[str] = frozenset()
    required_fields: tuple[RequirementDecl, ...] = ()
    tail_witnesses: tuple[RequirementDecl, ...] = ()
    weights: tuple[tuple[str, float], ...] = ()

    @classmethod
    def from_scenario(
        cls,
        scenario_text: str,
        active_dimensions: Iterable[str] = (),
        required_fields: Sequence[RequirementDecl] = (),
        tail_witnesses: Sequence[RequirementDecl] = (),
        weights: Mapping[str, float] | None = None,
    ) -> "TurnContext":
        return cls(
            scenario_text=scenario_text,
            observation_tokens=tuple(normalize(scenario_text)),
            active_dimensions=frozenset(active_dimensions),
            required_fields=tuple(required_fields),
            tail_witnesses=tuple(tail_witnesses),
            weights=tuple(sorted((weights or {}).items())),
        )

    def weight(self, rid: str) -> float:
        return dict(self.weights).get(rid, 1.0)


@dataclass(frozen=True)
class ClarificationAnswer:
    question_id: str
    answer: str
    confirmed: bool


@dataclass(frozen=True)
class Compiled:
    contract: HardContract
    pool: EvidencePool
    state: MutableState
    requirements: RequiredCoverageSet
    matrix: CoverageMatrix
    context: TurnContext

    def __iter__(self):
        # unpacks as the 5-tuple (h, E, u, R, M)
        return iter((self.contract, self.pool, self.state, self.requirements, self.matrix))


def _check_unique(ids: Iterable[str]) -> None:
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            raise DuplicateId(i)
        seen.add(i)


# --- predicate evaluation -------------------------------------------------

_MISSING = object()


def resolve_target(obj: Any, path: str) -> Any:
    head, _, rest = path.partition(".")
    value = obj.get(head, _MISSING) if isinstance(obj, Mapping) else getattr(obj, head, _MISSING)
    for part in rest.split(".") if rest else ():
        if value is _MISSING or not isinstance(value, Mapping):
            return _MISSING
        value = value.get(part, _MISSING)
    return value


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_collection(v: Any) -> bool:
    return isinstance(v, (list, tuple, set, frozenset))


def _eq(v: Any, target: Any) -> bool:
    if _is_collection(v):
        return target in v
    return v == target


def check_predicate(p: HardPredicate, a: Any) -> bool:
    """Evaluate one hard predicate against a structured commitment. Never raises."""
    v = resolve_target(a, p.target)
    try:
        if p.comparator == "absent":
            return v is _MISSING or v in (None, False, "") or (_is_collection(v) and len(v) == 0)
        if v is _MISSING or v is None:
            return False
        if p.comparator == "eq":
            return _eq(v, p.value)
        if p.comparator == "neq":
            return not _eq(v, p.value)
        if p.comparator in ("leq", "geq"):
            if not (_is_number(v) and _is_number(p.value)):
                return False
            return v <= p.value if p.comparator == "leq" else v >= p.value
        if p.comparator == "in_set":
            allowed = set(p.value) if _is_collection(p.value) else {p.value}
            if _is_collection(v):
                return all(x in allowed for x in v)
            return v in allowed
    except TypeError:
        return False
    return False


# --- compilation ------------------------------------------------------------

def derive_requirements(h: HardContract, u: MutableState, c: TurnContext) -> RequiredCoverageSet:
    """Build the per-turn requirement set from the contract, state and context."""
    reqs: list[Requirement] = []
    for p in h:
        rid = f"req:hard:{p.id}"
        reqs.append(Requirement(rid, p.dimension, c.weight(rid), "hard_predicate", p.description or p.id))
    for d in c.required_fields:
        reqs.append(Requirement(d.id, d.dimension, c.weight(d.id), "required_field", d.description))
    for o in u.due:
        rid = f"req:debt:{o.id}"
        reqs.append(Requirement(rid, "consequence", c.weight(rid), "consequence_debt", o.description))
    for d in c.tail_witnesses:
        reqs.append(Requirement(d.id, d.dimension, c.weight(d.id), "tail_witness", d.description))
    claimed = {r.dimension for r in reqs}
    for dim in sorted(c.active_dimensions - claimed):
        rid = f"req:scene:{dim}"
        reqs.append(Requirement(rid, dim, c.weight(rid), "scene_obligation", f"current {dim} situation"))
    return RequiredCoverageSet(tuple(reqs))


def _provenance(block: Mapping[str, Any], confirmed: bool, span: str) -> ProvenanceRecord:
    return ProvenanceRecord(int(block.get("source_turn", 0)), confirmed, span)


def compile_contract(answers: Sequence[ClarificationAnswer], profile: Mapping[str, Any]) -> Compiled:
    """Compile confirmed answers plus the confirmed-facts block into runtime objects.

    ``profile`` keys (all optional): ``turn``, ``scenario``, ``active_dimensions``,
    ``predicates``, ``hints``, ``evidence``, ``required_fields``, ``tail_witnesses``,
    ``obligations``, ``weights``.
    """
    by_question: dict[str, ClarificationAnswer] = {}
    for a in answers:
        if a.question_id in by_question:
            raise DuplicateId(a.question_id)
        by_question[a.question_id] = a

    predicates: list[HardPredicate] = []
    units: list[EvidenceUnit] = []
    for spec in profile.get("predicates", ()):
        ans = by_question.get(spec["question_id"])
        if ans is None:
            continue
        if not ans.confirmed:
            # soft reading of the answer stays as evidence, never a predicate
            units.append(
                EvidenceUnit(
                    id=f"soft:{spec['id']}",
                    content=ans.answer,
                    dimension=spec.get("dimension", ""),
                    provenance=_provenance(spec, False, ans.answer),
                )
            )
            continue
        predicates.append(
            HardPredicate(
                id=spec["id"],
                kind=spec["kind"],
                target=spec["target"],
                comparator=spec["comparator"],
                value=spec.get("value"),
                provenance=_provenance(spec, True, ans.answer),
                dimension=spec.get("dimension", ""),
                description=spec.get("description", ""),
            )
        )

    for hint in profile.get("hints", ()):
        if hint.get("as_hard"):
            raise UnconfirmedHardening(f"hint {hint['id']} is marked as a hard predicate source")
        units.append(
            EvidenceUnit(
                id=hint["id"],
                content=hint["text"],
                dimension=hint.get("dimension", ""),
                provenance=_provenance(hint, False, hint["text"]),
                cost=int(hint.get("cost", 1)),
            )
        )

    for ev in profile.get("evidence", ()):
        confirmed = bool(ev.get("confirmed", True))
        units.append(
            EvidenceUnit(
                id=ev["id"],
                content=ev["content"],
                dimension=ev.get("dimension", ""),
                provenance=_provenance(ev, confirmed, ev["content"]),
                tail=bool(ev.get("tail", False)),
                cost=int(ev.get("cost", 1)),
                covers=frozenset(ev.get("covers", ())),
            )
        )

    contract = HardContract(tuple(predicates))
    pool = EvidencePool(tuple(units))
    state = MutableState(
        turn=int(profile.get("turn", 0)),
        obligations=tuple(
            Obligation(o["id"], int(o["due_turn"]), o.get("description", ""), tuple(o.get("source_evidence_ids", ())))
            for o in profile.get("obligations", ())
        ),
    )
    context = TurnContext.from_scenario(
        profile.get("scenario", ""),
        active_dimensions=profile.get("active_dimensions", ()),
        required_fields=[RequirementDecl(d["id"], d.get("dimension", ""), d.get("description", "")) for d in profile.get("required_fields", ())],
        tail_witnesses=[RequirementDecl(d["id"], d.get("dimension", ""), d.get("description", "")) for d in profile.get("tail_witnesses", ())],
        weights=profile.get("weights"),
    )
    requirements = derive_requirements(contract, state, context)
    known = set(requirements.ids)
    for unit in pool:
        extra = unit.covers - known
        if extra:
            raise UnknownRequirement(f"{unit.id} covers undeclared requirement(s) {sorted(extra)}")
        if unit.tail and not any(requirements.get(r).source == "tail_witness" for r in unit.covers):
            raise ContractError(f"tail unit {unit.id} covers no tail-witness requirement")
    matrix = CoverageMatrix.build(pool, requirements)
    return Compiled(contract, pool, state, requirements, matrix, context)
