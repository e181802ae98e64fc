"""Hypothesis strategies for small synthetic turns."""

from hypothesis import strategies as st

from cbea.contract import ClarificationAnswer, compile_contract

WORDS = ("plan", "budget", "rent", "move", "school", "offer", "family", "salary", "city", "loan", "garden", "visit")
DIMS = ("money", "family", "career", "place")


@st.composite
def compiled_turns(draw, max_units=9):
    """A compiled turn with random evidence, requirements, obligations and tail labels."""
    n_fields = draw(st.integers(0, 3))
    n_tail = draw(st.integers(0, 2))
    fields = [{"id": f"req:field:{i}", "dimension": draw(st.sampled_from(DIMS))} for i in range(n_fields)]
    tails = [{"id": f"req:tail:{i}", "dimension": "tail"} for i in range(n_tail)]
    active = draw(st.sets(st.sampled_from(DIMS), max_size=3))
    rids = [f["id"] for f in fields]
    scenario = " ".join(draw(st.lists(st.sampled_from(WORDS), min_size=2, max_size=8)))
    n_units = draw(st.integers(1, max_units))
    evidence = []
    for i in range(n_units):
        is_tail = bool(tails) and draw(st.booleans())
        covers = [draw(st.sampled_from(tails))["id"]] if is_tail else draw(st.lists(st.sampled_from(rids), unique=True, max_size=2)) if rids else []
        evidence.append(
            {
                "id": f"e{i}",
                "content": " ".join(draw(st.lists(st.sampled_from(WORDS), min_size=1, max_size=6))),
                "dimension": draw(st.sampled_from((*DIMS, "noise"))),
                "cost": draw(st.integers(1, 3)),
                "tail": is_tail,
                "covers": covers,
            }
        )
    obligations = []
    if draw(st.booleans()):
        src = draw(st.lists(st.sampled_from([e["id"] for e in evidence]), min_size=1, max_size=2, unique=True))
        obligations.append({"id": "ob1", "due_turn": draw(st.integers(0, 3)), "source_evidence_ids": src})
    profile = {
        "turn": 2,
        "scenario": scenario,
        "active_dimensions": sorted(active),
        "evidence": evidence,
        "required_fields": fields,
        "tail_witnesses": tails,
        "obligations": obligations,
    }
    return compile_contract([], profile)


def answers_for(specs, confirmed=True):
    return [ClarificationAnswer(s["question_id"], "yes", confirmed) for s in specs]
