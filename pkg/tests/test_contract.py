import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbea.candidates import StructuredCommitment
from cbea.contract import (
    ClarificationAnswer,
    ContractError,
    CoverageMatrix,
    DuplicateId,
    EvidencePool,
    EvidenceUnit,
    HardContract,
    HardPredicate,
    MutableState,
    Obligation,
    ProvenanceRecord,
    RequirementDecl,
    TurnContext,
    UnconfirmedHardening,
    UnknownRequirement,
    check_predicate,
    compile_contract,
    derive_requirements,
)

from tests.strategies import compiled_turns

CONFIRMED = ProvenanceRecord(1, True, "yes, that is fixed")


def pred(pid="p1", kind="bound_numeric", target="terms.monthly_cost", comparator="leq", value=900):
    return HardPredicate(pid, kind, target, comparator, value, CONFIRMED, "money")


def commitment(**terms):
    return StructuredCommitment("o1", "recommendation", terms=terms)


PROFILE = {
    "turn": 3,
    "scenario": "Should I take the flat or stay put",
    "active_dimensions": ["money", "family"],
    "predicates": [
        {"id": "p1", "question_id": "q1", "kind": "bound_numeric", "target": "terms.monthly_cost", "comparator": "leq", "value": 900, "dimension": "money"},
        {"id": "p2", "question_id": "q2", "kind": "require_slot", "target": "terms.keeps_caregiving", "comparator": "eq", "value": True, "dimension": "family"},
    ],
    "hints": [{"id": "hint:1", "text": "maybe I prefer the city", "dimension": "place"}],
    "evidence": [
        {"id": "ev:hard:p1", "content": "rent cap is 900", "dimension": "money", "covers": ["req:hard:p1"]},
        {"id": "ev:tail:1", "content": "promised the neighbours a spring visit", "dimension": "tail", "tail": True, "covers": ["req:tail:1"]},
    ],
    "required_fields": [{"id": "req:field:notice", "dimension": "money"}],
    "tail_witnesses": [{"id": "req:tail:1", "dimension": "tail"}],
    "obligations": [{"id": "ob1", "due_turn": 2, "source_evidence_ids": ["ev:hard:p1"]}, {"id": "ob2", "due_turn": 5}],
}


def test_confirmed_answers_become_predicates():
    c = compile_contract([ClarificationAnswer("q1", "900 max", True), ClarificationAnswer("q2", "yes", True)], PROFILE)
    assert c.contract.ids == ("p1", "p2")
    assert c.contract.predicates[0].provenance.raw_span == "900 max"


def test_unconfirmed_answer_stays_soft_evidence():
    c = compile_contract([ClarificationAnswer("q1", "900 max", True), ClarificationAnswer("q2", "probably", False)], PROFILE)
    assert c.contract.ids == ("p1",)
    assert "soft:p2" in c.pool
    assert not c.pool.get("soft:p2").provenance.confirmed


def test_hint_marked_hard_is_rejected():
    bad = {**PROFILE, "hints": [{"id": "hint:x", "text": "I guess", "as_hard": True}]}
    with pytest.raises(UnconfirmedHardening):
        compile_contract([], bad)


def test_unconfirmed_predicate_cannot_enter_contract():
    p = HardPredicate("p", "bound_numeric", "terms.x", "leq", 1, ProvenanceRecord(0, False, ""))
    with pytest.raises(UnconfirmedHardening):
        HardContract((p,))


def test_unknown_coverage_target_is_rejected():
    bad = {**PROFILE, "evidence": [{"id": "e", "content": "x", "covers": ["req:nope"]}]}
    with pytest.raises(UnknownRequirement):
        compile_contract([], bad)


def test_tail_unit_must_cover_tail_requirement():
    bad = {**PROFILE, "evidence": [{"id": "e", "content": "x", "tail": True, "covers": ["req:field:notice"]}]}
    with pytest.raises(ContractError):
        compile_contract([], bad)


def test_duplicate_ids_rejected():
    u = EvidenceUnit("e", "x", "d", CONFIRMED)
    with pytest.raises(DuplicateId):
        EvidencePool((u, u))
    with pytest.raises(DuplicateId):
        compile_contract([ClarificationAnswer("q1", "a", True), ClarificationAnswer("q1", "b", True)], PROFILE)


def test_requirement_derivation_order_and_sources():
    c = compile_contract([ClarificationAnswer("q1", "900", True)], PROFILE)
    # hard, fields, due debt, tail, then scene rows for active dims nothing else claims
    assert c.requirements.ids == ("req:hard:p1", "req:field:notice", "req:debt:ob1", "req:tail:1", "req:scene:family")
    assert [r.source for r in c.requirements] == [
        "hard_predicate", "required_field", "consequence_debt", "tail_witness", "scene_obligation",
    ]


def test_only_due_obligations_generate_debt_requirements():
    u = MutableState(turn=3, obligations=(Obligation("a", 3), Obligation("b", 4)))
    R = derive_requirements(HardContract(), u, TurnContext.from_scenario("x"))
    assert R.ids == ("req:debt:a",)


def test_coverage_matrix_matches_declared_covers():
    c = compile_contract([ClarificationAnswer("q1", "900", True)], PROFILE)
    M = c.matrix
    assert M.shape == (len(c.pool), len(c.requirements))
    assert M.covers("ev:hard:p1", "req:hard:p1")
    assert M.covering("req:tail:1") == ("ev:tail:1",)
    assert M.covered_by("hint:1") == ()


@pytest.mark.parametrize(
    "p, terms, expected",
    [
        (pred(value=900), {"monthly_cost": 900}, True),
        (pred(value=900), {"monthly_cost": 901}, False),
        (pred(value=900), {"monthly_cost": "cheap"}, False),
        (pred(value=900), {}, False),
        (pred(comparator="geq", value=35), {"monthly_cost": 40}, True),
        (pred(kind="require_slot", target="terms.keeps_caregiving", comparator="eq", value=True), {"keeps_caregiving": True}, True),
        (pred(kind="require_slot", target="terms.keeps_caregiving", comparator="eq", value=True), {"keeps_caregiving": False}, False),
        (pred(kind="require_slot", target="terms.role", comparator="in_set", value=["senior", "lead"]), {"role": "lead"}, True),
        (pred(kind="require_slot", target="terms.role", comparator="in_set", value=["senior", "lead"]), {"role": "junior"}, False),
        (pred(kind="forbid_option", target="terms.relocates", comparator="absent", value=None), {}, True),
        (pred(kind="forbid_option", target="terms.relocates", comparator="absent", value=None), {"relocates": True}, False),
    ],
)
def test_predicate_table(p, terms, expected):
    assert check_predicate(p, commitment(**terms)) is expected


def test_claim_predicate_on_list_field():
    p = HardPredicate("pnc", "no_unwitnessed_claim", "claimed_predicates", "neq", "soft:p9", CONFIRMED)
    assert check_predicate(p, StructuredCommitment("o1", "r", claimed_predicates=("p1",)))
    assert not check_predicate(p, StructuredCommitment("o1", "r", claimed_predicates=("p1", "soft:p9")))


def test_invalid_kind_comparator_pairing():
    with pytest.raises(ValueError):
        pred(kind="forbid_option", comparator="leq")


@given(st.one_of(st.none(), st.integers(), st.floats(allow_nan=True), st.text(), st.booleans(), st.lists(st.integers())))
def test_check_predicate_is_total(value):
    # any field value yields a bool, never an exception
    for p in (pred(), pred(kind="require_slot", comparator="in_set", value=[1, 2]), pred(kind="forbid_option", comparator="absent", value=None)):
        assert check_predicate(p, commitment(monthly_cost=value)) in (True, False)


@given(compiled_turns())
def test_matrix_rows_match_unit_covers(c):
    for i, e in enumerate(c.matrix.evidence_ids):
        row = {r for j, r in enumerate(c.matrix.requirement_ids) if c.matrix.entries[i, j]}
        assert row == set(c.pool.get(e).covers)
    assert c.matrix.entries.dtype == np.uint8


def test_compiled_unpacks_as_five_tuple():
    h, E, u, R, M = compile_contract([ClarificationAnswer("q1", "900", True)], PROFILE)
    assert isinstance(M, CoverageMatrix) and len(E) == 3


def test_eight_by_four_matrix_by_membership_scan():
    profile = {
        "active_dimensions": ["money"],
        "predicates": [
            {"id": "p1", "question_id": "q1", "kind": "bound_numeric", "target": "terms.cost", "comparator": "leq", "value": 5, "dimension": "money"},
            {"id": "p2", "question_id": "q2", "kind": "require_slot", "target": "terms.care", "comparator": "eq", "value": True, "dimension": "family"},
        ],
        "required_fields": [{"id": "f1", "dimension": "money"}, {"id": "f2", "dimension": "family"}],
        "evidence": [
            {"id": f"e{i}", "content": "x", "covers": cov}
            for i, cov in enumerate([["req:hard:p1"], [], ["f1", "f2"], ["req:hard:p2"], ["f2"], [], ["req:hard:p1", "f1"], []])
        ],
    }
    c = compile_contract([ClarificationAnswer("q1", "5", True), ClarificationAnswer("q2", "yes", True)], profile)
    assert len(c.contract) == 2 and c.matrix.shape == (8, 4)
    for i, spec in enumerate(profile["evidence"]):
        for j, rid in enumerate(c.requirements.ids):
            assert c.matrix.entries[i, j] == (rid in spec["covers"])


def test_empty_compile_is_identity():
    c = compile_contract([], {})
    assert len(c.contract) == 0 and len(c.pool) == 0 and c.matrix.shape == (0, 0)
    assert len(derive_requirements(HardContract(), MutableState(), TurnContext.from_scenario(""))) == 0


def test_requirement_sources_by_hand():
    h = HardContract((pred("p1"), pred("p2", comparator="geq")))
    u = MutableState(4, (Obligation("ob", 4),))
    c = TurnContext.from_scenario("x", tail_witnesses=[RequirementDecl("req:tail:1", "tail")])
    R = derive_requirements(h, u, c)
    assert [r.source for r in R] == ["hard_predicate", "hard_predicate", "consequence_debt", "tail_witness"]
    assert derive_requirements(h, u, c) == R


def test_forbidden_option_selection_fails():
    p = HardPredicate("nd", "forbid_option", "selected_option", "neq", "new_unsecured_debt", CONFIRMED)
    assert not check_predicate(p, StructuredCommitment("new_unsecured_debt", "recommendation"))
    assert check_predicate(p, StructuredCommitment("keep_renting", "recommendation"))


def test_overdue_obligation_flagged():
    u = MutableState(turn=5, obligations=(Obligation("due_now", 5), Obligation("later", 6)))
    assert u.overdue_ids == {"due_now"}
