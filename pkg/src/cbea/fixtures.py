"""Synthetic benchmark fixtures with oracle labels and shadow facts.

Every fixture is a templated multi-turn history plus the confirmed-facts
profile that compiles into runtime objects. The generator also records the
answers a correct runtime must reach (confirmed contract, labeled witnesses,
feasible options, expected repair) and a few hidden "shadow" facts that are
visible in the history but never compiled.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from cbea.contract import (
    ClarificationAnswer,
    Compiled,
    HardContract,
    HardPredicate,
    ProvenanceRecord,
    check_predicate,
    compile_contract,
)
from cbea.text import contains_sequence, normalize, whitespace_tokens

SCHEMA_VERSION = "1"
BUCKETS = ("falsehard", "exception", "tail", "infeasible", "debt", "surface")
DOMAINS = ("investment", "love_choice", "career", "relocation", "comprehensive")
FIXTURES_PER_BUCKET = 60
DOMAIN_COUNT_SPLIT = {2: 24, 3: 24, 4: 12}  # per bucket; 144/144/72 overall
MISSING_PREMISE_BUCKETS = frozenset({"falsehard", "exception", "debt", "surface"})
WITNESS_CATEGORIES = ("hard", "required_witness", "tail", "debt")

DOMAIN_DIMS = {
    "investment": ("finance", "family", "lifestyle", "health", "career"),
    "love_choice": ("social", "family", "lifestyle", "housing", "finance"),
    "career": ("career", "finance", "family", "health", "housing"),
    "relocation": ("housing", "career", "family", "finance", "social"),
    "comprehensive": ("finance", "family", "career", "housing", "health", "social", "lifestyle"),
}
OFF_DIMS = ("gossip", "trivia", "hobby", "media", "hearsay", "ads", "chatter", "rumor", "press", "reviews", "links", "tv", "strangers")

OPTION_LABELS = {
    "investment": ("index fund plan", "rental property purchase", "crypto margin account", "bond ladder", "startup equity stake", "high yield savings"),
    "love_choice": ("moving in together", "long distance for a year", "pausing the relationship", "marrying this spring", "counseling first", "separate apartments nearby"),
    "career": ("staying at the current firm", "the startup offer", "the consulting contract", "a graduate program", "the internal transfer", "freelance work"),
    "relocation": ("the uptown apartment", "staying in this city", "the coastal town house", "the suburban rental", "moving back home", "the downtown loft"),
    "comprehensive": ("selling the house and renting", "the overseas job", "a sabbatical year", "buying a smaller home", "keeping things as they are", "going part time"),
}
SCENARIO_OPENERS = {
    "investment": "I am trying to decide where my savings should go this year.",
    "love_choice": "I am trying to decide what to do about my relationship this year.",
    "career": "I am trying to decide about a job move this year.",
    "relocation": "I am trying to decide where to live this year.",
    "comprehensive": "I am trying to decide how to reshape my whole life this year.",
}

# per dimension: predicate template, confirmed answer, control sentences
DIM_RULES: dict[str, dict[str, Any]] = {
    "finance": dict(kind="bound_numeric", attr="monthly_cost", comparator="leq", answer="No more than {v} a month, full stop.", unit="Confirmed limit: monthly cost stays at or below {v}."),
    "family": dict(kind="protect_obligation", attr="keeps_caregiving", comparator="eq", answer="Yes, weekend care for mom has to continue.", unit="Confirmed duty: weekend caregiving for mom continues."),
    "career": dict(kind="require_slot", attr="role_level", comparator="in_set", answer="Only a senior or lead role, confirmed.", unit="Confirmed slot: role level must be senior or lead."),
    "housing": dict(kind="bound_numeric", attr="commute_minutes", comparator="leq", answer="Travel must stay under {v} minutes each way.", unit="Confirmed limit: travel time stays within {v} minutes."),
    "health": dict(kind="bound_numeric", attr="weekly_hours", comparator="leq", answer="At most {v} working hours per week.", unit="Confirmed limit: no more than {v} working hours weekly."),
    "social": dict(kind="forbid_option", attr="moves_away_from_partner", comparator="absent", answer="Nothing that puts distance between us.", unit="Confirmed boundary: no plan separating Sam and me geographically."),
    "lifestyle": dict(kind="forbid_option", attr="requires_weekend_work", comparator="absent", answer="Saturdays and Sundays stay free.", unit="Confirmed boundary: Saturdays and Sundays remain free."),
}
FIELD_TEXT = {
    "finance": ("current savings runway", "Savings cover {n} months of expenses right now."),
    "family": ("caregiving schedule", "Mom needs help Saturday mornings, per the schedule."),
    "career": ("current title", "Present title: analyst level two, eligible for promotion."),
    "housing": ("lease end date", "Present lease ends in {n} months."),
    "health": ("sleep baseline", "Sleep averages {n} hours nightly lately."),
    "social": ("partner plans", "Sam plans to stay local through next year."),
    "lifestyle": ("weekly rhythm", "Saturdays are for hiking and errands."),
}
MISSING_FIELD = {
    "finance": "monthly take-home income",
    "family": "who else can cover caregiving",
    "career": "notice period at the current job",
    "housing": "maximum acceptable rent",
    "health": "doctor clearance for longer hours",
    "social": "whether Sam agrees to the timing",
    "lifestyle": "which commitments are fixed on Saturdays",
}
SCENE_TEXT = {
    "finance": "Money feels tight after the car repair.",
    "family": "Mom's mobility declined over winter.",
    "career": "Promotion talks stalled after reorganization.",
    "housing": "Landlord announced renovations starting autumn.",
    "health": "Back pain flared twice recently.",
    "social": "Sam started evening classes.",
    "lifestyle": "Hiking group meets Saturday mornings.",
}
DIM_PHRASE = {
    "finance": "monthly cost limit",
    "family": "caregiving for mom",
    "career": "role level",
    "housing": "travel time",
    "health": "working hours",
    "social": "staying near Sam",
    "lifestyle": "free Saturdays",
}
CONTEXT_TEXT = {
    "finance": "Whatever I decide, the budget has to hold up all year.",
    "family": "My family comes first when I decide things like this.",
    "career": "My career growth should not stall because of this choice.",
    "housing": "Where I live shapes how long the commute feels every day.",
    "health": "My health took a hit last year and I want to protect it.",
    "social": "My partner and I want the same options to stay open.",
    "lifestyle": "Keeping weekends calm matters for how this year goes.",
}
TAIL_TEXT = (
    "Footnote: lease clause forbids subletting, penalty equals two months' rent.",
    "Footnote: pension vesting cliff lands eleven weeks out.",
    "Footnote: visa renewal hinges on continuous employment.",
    "Footnote: insurer excludes preexisting conditions during probation.",
    "Footnote: loan covenant triggers repayment upon relocation.",
)
DEBT_TEXT = (
    ("repay sister", "Promised Lena: repay 600 before June."),
    ("attend recital", "Promised niece: attend recital next Thursday."),
    ("tax filing", "Owe accountant: signed forms by Friday."),
    ("car handover", "Agreed with Omar: car handover next weekend."),
)
FUTURE_DEBT = ("Promised Lena: help repaint her kitchen eventually.", "Agreed with Omar: split storage fees later.")
HINT_TEXT = (
    "I guess maybe around {v} per month could be fine, not sure.",
    "Possibly weekends could flex sometimes, hard to say.",
    "Maybe a longer trip to work is tolerable, who knows.",
)
DISTRACTOR_TEXT = (
    "A coworker insists {label} is the smartest decision this year.",
    "I read that {label} is trending, so maybe I should decide fast.",
    "Everyone at the gym is talking about {label} this year.",
    "A podcast said {label} is what people like me should decide on.",
    "My neighbor thinks {label} is the only sensible way to decide this year.",
    "Forums keep saying {label} beats the other options this year.",
    "An ad promised that {label} works for everyone trying to decide.",
    "A friend of a friend picked {label} and says I should too.",
    "Online reviews rank {label} first among the options.",
    "My barber swears {label} changed his year completely.",
    "A newsletter claimed {label} is where smart money should go.",
    "My cousin keeps sending me links about {label}.",
    "A talk show host called {label} the move of the year.",
    "Strangers on a train were debating {label} loudly.",
)
FILLER_TEXT = (
    "We chatted about the weather and how grey it has been.",
    "I mentioned the traffic was slow again on the way in.",
    "We talked about what to cook for dinner tonight.",
    "I said the new phone update changed some settings.",
    "We laughed about a funny video someone shared.",
    "I noted that the office coffee machine broke again.",
)
SURFACE_TEXT = (
    "Mention that the final decision is due Friday.",
    "Say plainly that the numbers are estimates.",
    "Remind me to talk this over with Sam.",
)
# invented vocabulary, disjoint from everything above
SHADOW_BANK = (
    ("My old roommate Teodric still calls me every Sunday.", ["teodric"], ["roommate * still calls"]),
    ("I once sold pottery at the Wexbury market.", ["wexbury"], ["sold pottery * the"]),
    ("My grandmother grew up in Ostrava Vale.", ["ostrava vale"], ["grandmother grew *"]),
    ("There is a dog named Pimbleton at the pool.", ["pimbleton"], ["dog named *"]),
    ("My favorite cafe is Lumenhouse on the corner.", ["lumenhouse"], ["favorite cafe *"]),
    ("I sing tenor in the Corvane choir.", ["corvane"], ["sing tenor * the"]),
    ("My brother Halvard restores old sailboats.", ["halvard"], ["restores old sailboats"]),
    ("I collect stamps from Zephyria.", ["zephyria"], ["collect stamps *"]),
    ("My dentist is called Quillory.", ["quillory"], ["dentist * called"]),
    ("I learned chess from uncle Bertrand Vosk.", ["bertrand vosk"], ["learned chess *"]),
    ("We had a parrot called Mistral Jinx.", ["mistral jinx"], ["parrot called *"]),
    ("I ran a half marathon in Fennick Bay.", ["fennick bay"], ["half marathon *"]),
)

FALSE_VALUES = {"career": ("junior", "mid"), "social": True, "lifestyle": True, "family": False}


@dataclass(frozen=True)
class ShadowFact:
    fact_id: str
    aliases: tuple[str, ...]
    paraphrase_patterns: tuple[str, ...]
    weight: float = 1.0
    due_turn: int = 0

    def matches(self, tokens: Sequence[str]) -> bool:
        return any(contains_sequence(tokens, normalize(p)) for p in (*self.aliases, *self.paraphrase_patterns))


@dataclass(frozen=True)
class Fixture:
    id: str
    bucket: str
    domain: str
    required_domain_count: int
    observations: tuple[str, ...]
    confirmed_answers: tuple[ClarificationAnswer, ...]
    options: tuple[dict[str, Any], ...]
    oracle_contract: HardContract
    oracle_witnesses: Mapping[str, tuple[str, ...]]
    oracle_feasible: tuple[str, ...]
    expected_repair: str | None
    shadow_facts: tuple[ShadowFact, ...]
    profile: Mapping[str, Any]
    surface_requirements: tuple[str, ...] = ()
    seed: int = 0

    @property
    def infeasible(self) -> bool:
        return not self.oracle_feasible

    @property
    def scenario(self) -> str:
        return self.profile["scenario"]

    def compile(self) -> Compiled:
        return compile_contract(self.confirmed_answers, self.profile)

    def to_dict(self) -> dict[str, Any]:
        d = {
            "id": self.id,
            "bucket": self.bucket,
            "domain": self.domain,
            "required_domain_count": self.required_domain_count,
            "observations": list(self.observations),
            "confirmed_answers": [asdict(a) for a in self.confirmed_answers],
            "options": [dict(o) for o in self.options],
            "oracle_contract": [_predicate_to_dict(p) for p in self.oracle_contract],
            "oracle_witnesses": {k: list(v) for k, v in self.oracle_witnesses.items()},
            "oracle_feasible": list(self.oracle_feasible),
            "expected_repair": self.expected_repair,
            "shadow_facts": [asdict(s) for s in self.shadow_facts],
            "profile": self.profile,
            "surface_requirements": list(self.surface_requirements),
            "seed": self.seed,
        }
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Fixture":
        return cls(
            id=d["id"],
            bucket=d["bucket"],
            domain=d["domain"],
            required_domain_count=int(d["required_domain_count"]),
            observations=tuple(d["observations"]),
            confirmed_answers=tuple(ClarificationAnswer(**a) for a in d["confirmed_answers"]),
            options=tuple(dict(o) for o in d["options"]),
            oracle_contract=HardContract(tuple(_predicate_from_dict(p) for p in d["oracle_contract"])),
            oracle_witnesses={k: tuple(v) for k, v in d["oracle_witnesses"].items()},
            oracle_feasible=tuple(d["oracle_feasible"]),
            expected_repair=d.get("expected_repair"),
            shadow_facts=tuple(
                ShadowFact(s["fact_id"], tuple(s["aliases"]), tuple(s["paraphrase_patterns"]), s["weight"], s["due_turn"])
                for s in d["shadow_facts"]
            ),
            profile=d["profile"],
            surface_requirements=tuple(d.get("surface_requirements", ())),
            seed=int(d.get("seed", 0)),
        )


def _predicate_to_dict(p: HardPredicate) -> dict[str, Any]:
    value = list(p.value) if isinstance(p.value, tuple) else p.value
    return {
        "id": p.id,
        "kind": p.kind,
        "target": p.target,
        "comparator": p.comparator,
        "value": value,
        "provenance": asdict(p.provenance),
        "dimension": p.dimension,
        "description": p.description,
    }


def _predicate_from_dict(d: Mapping[str, Any]) -> HardPredicate:
    return HardPredicate(
        d["id"], d["kind"], d["target"], d["comparator"], d["value"],
        ProvenanceRecord(**d["provenance"]), d.get("dimension", ""), d.get("description", ""),
    )


@dataclass(frozen=True)
class Manifest:
    fixtures: tuple[Fixture, ...]
    seed: int
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self) -> None:
        ids = [f.id for f in self.fixtures]
        if len(set(ids)) != len(ids):
            raise ValueError("fixture ids must be unique")

    def __iter__(self):
        return iter(self.fixtures)

    def __len__(self) -> int:
        return len(self.fixtures)

    def get(self, fixture_id: str) -> Fixture:
        for f in self.fixtures:
            if f.id == fixture_id:
                return f
        raise KeyError(fixture_id)

    def to_json(self) -> str:
        doc = {"schema_version": self.schema_version, "seed": self.seed, "fixtures": [f.to_dict() for f in self.fixtures]}
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
        return cls(tuple(Fixture.from_dict(f) for f in doc["fixtures"]), int(doc["seed"]), doc["schema_version"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        return cls.from_json(Path(path).read_text())


# --- generation --------------------------------------------------------------

def _option_terms(rng: random.Random, preds: Sequence[dict[str, Any]], violate: set[str]) -> dict[str, Any]:
    terms: dict[str, Any] = {
        "monthly_cost": rng.randrange(600, 1400, 50),
        "keeps_caregiving": True,
        "role_level": rng.choice(("senior", "lead")),
        "commute_minutes": rng.randrange(15, 35, 5),
        "weekly_hours": rng.randrange(35, 46),
    }
    for p in preds:
        attr, v = p["target"].split(".", 1)[1], p["value"]
        if p["id"] not in violate:
            if p["kind"] == "require_slot" and p.get("exception"):
                terms[attr] = p["exception"]
            continue
        if p["comparator"] == "leq":
            terms[attr] = v + rng.randrange(50, 400, 10) if attr == "monthly_cost" else v + rng.randrange(5, 30)
        elif p["comparator"] == "eq":
            terms[attr] = False
        elif p["comparator"] == "in_set":
            terms[attr] = rng.choice(("junior", "mid", "unscheduled"))
        elif p["comparator"] == "absent":
            terms[attr] = True
        elif p["comparator"] == "neq":
            pass  # claim-based predicates are violated by candidates, not options
    return terms


def _as_commitment_view(option: Mapping[str, Any], claimed: Iterable[str]) -> dict[str, Any]:
    return {"selected_option": option["id"], "terms": option["terms"], "claimed_predicates": list(claimed)}


def generate_fixture(
    bucket: str,
    domain: str,
    seed: int,
    index: int = 0,
    required_domain_count: int | None = None,
    missing_premise: bool | None = None,
) -> Fixture:
    """Deterministic fixture for (bucket, domain, seed, index)."""
    if bucket not in BUCKETS:
        raise ValueError(f"unknown bucket {bucket!r}")
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    rng = random.Random(f"{seed}:{bucket}:{domain}:{index}")
    k = required_domain_count or rng.choice((2, 3, 4))
    if missing_premise is None:
        missing_premise = bucket in MISSING_PREMISE_BUCKETS and rng.random() < 0.5
    dims = rng.sample(DOMAIN_DIMS[domain], k)
    fid = f"{bucket}-{index:03d}"

    # confirmed predicates
    pred_specs: list[dict[str, Any]] = []
    answers: list[ClarificationAnswer] = []
    evidence: list[dict[str, Any]] = []
    witnesses: dict[str, list[str]] = {c: [] for c in WITNESS_CATEGORIES}
    required_fields: list[dict[str, Any]] = []
    history_facts: list[tuple[str, bool]] = []  # (sentence, may lead a turn)

    def add_predicate(pid: str, dim: str, kind: str, target: str, comparator: str, value: Any, answer: str, unit_text: str, desc: str, **extra):
        q = f"q:{pid}"
        pred_specs.append(dict(id=pid, question_id=q, kind=kind, target=target, comparator=comparator, value=value, dimension=dim, description=desc, source_turn=1, **extra))
        answers.append(ClarificationAnswer(q, answer, True))
        uid = f"ev:hard:{pid}"
        evidence.append(dict(id=uid, content=unit_text, dimension=dim, covers=[f"req:hard:{pid}"], source_turn=1))
        witnesses["hard"].append(uid)
        history_facts.append((unit_text, True))

    for j, dim in enumerate(dims[: min(2, k)]):
        rule = DIM_RULES[dim]
        if rule["comparator"] == "leq":
            v = {"finance": rng.randrange(1500, 2500, 100), "housing": rng.choice((40, 45, 50)), "health": rng.choice((48, 50, 52))}[dim]
        elif rule["comparator"] == "eq":
            v = True
        elif rule["comparator"] == "in_set":
            v = ["senior", "lead"]
        else:
            v = None
        add_predicate(
            f"p{j + 1}", dim, rule["kind"], f"terms.{rule['attr']}", rule["comparator"], v,
            rule["answer"].format(v=v), rule["unit"].format(v=v), f"{dim} rule on {rule['attr']}",
        )

    if bucket == "exception":
        dim = dims[0]
        exc = rng.choice(("waiver_start", "interim_cover"))
        add_predicate(
            "px", dim, "require_slot", "terms.timing", "in_set", ["after_notice", exc],
            "Start only after notice, except the scoped waiver case.",
            f"Confirmed exception: early start allowed only under {exc.replace('_', ' ')}.",
            "timing rule with scoped exception", exception=exc,
        )
        rid = "req:field:exception"
        required_fields.append(dict(id=rid, dimension=dim, description="scope of the timing exception"))
        uid = "ev:field:exception"
        text = f"Exception scope: {exc.replace('_', ' ')} lasts through March only."
        evidence.append(dict(id=uid, content=text, dimension=dim, covers=[rid], source_turn=2))
        witnesses["required_witness"].append(uid)
        history_facts.append((text, True))

    # soft material: every fixture carries one unconfirmed hint
    hints: list[dict[str, Any]] = []
    if bucket == "falsehard":
        dim = dims[0]
        q = "q:soft1"
        hint_answer = HINT_TEXT[0].format(v=rng.randrange(2600, 3400, 100))
        pred_specs.append(dict(id="soft1", question_id=q, kind="bound_numeric", target="terms.monthly_cost", comparator="leq", value=3000, dimension=dim, source_turn=2))
        answers.append(ClarificationAnswer(q, hint_answer, False))
        history_facts.append((hint_answer, False))
        add_predicate(
            "pnc", dim, "no_unwitnessed_claim", "claimed_predicates", "neq", "soft:soft1",
            "That number was only a guess, do not treat it as a rule.",
            "Confirmed note: the earlier spending guess is not a rule.",
            "no hardening of the spending guess",
        )
    else:
        text = HINT_TEXT[rng.randrange(1, len(HINT_TEXT))]
        hints.append(dict(id="hint:1", text=text, dimension=dims[-1], source_turn=2))
        history_facts.append((text, False))

    # required field
    fdim = rng.choice(dims)
    fdesc, ftext = FIELD_TEXT[fdim]
    ftext = ftext.format(n=rng.randrange(3, 10))
    required_fields.append(dict(id=f"req:field:{fdim}", dimension=fdim, description=fdesc))
    evidence.append(dict(id=f"ev:field:{fdim}", content=ftext, dimension=fdim, covers=[f"req:field:{fdim}"], source_turn=2))
    witnesses["required_witness"].append(f"ev:field:{fdim}")
    history_facts.append((ftext, True))
    if missing_premise:
        mdim = rng.choice([d for d in dims if d != fdim] or dims)
        required_fields.append(dict(id="req:field:missing", dimension=mdim, description=MISSING_FIELD[mdim]))

    # consequence debt
    turn = 5 + k
    obligations: list[dict[str, Any]] = []
    n_debt = 2 if bucket == "debt" else int(rng.random() < 0.5)
    for j, (desc, text) in enumerate(rng.sample(DEBT_TEXT, n_debt)):
        oid = f"ob{j + 1}"
        uid = f"ev:debt:{oid}"
        obligations.append(dict(id=oid, due_turn=turn - rng.randrange(0, 2), description=desc, source_evidence_ids=[uid]))
        evidence.append(dict(id=uid, content=text, dimension="consequence", covers=[f"req:debt:{oid}"], source_turn=1))
        witnesses["debt"].append(uid)
        history_facts.append((text, False))
    if rng.random() < 0.5:
        text = rng.choice(FUTURE_DEBT)
        obligations.append(dict(id="ob_future", due_turn=turn + 3, description="later favor", source_evidence_ids=["ev:debt:future"]))
        evidence.append(dict(id="ev:debt:future", content=text, dimension="consequence", source_turn=1))
        history_facts.append((text, False))

    # tail witnesses
    tail_decls: list[dict[str, Any]] = []
    n_tail = rng.choice((1, 2)) if bucket == "tail" else int(rng.random() < 1 / 3)
    for j, text in enumerate(rng.sample(TAIL_TEXT, n_tail)):
        tdim = rng.choice(dims)
        rid = f"req:tail:{j + 1}"
        tail_decls.append(dict(id=rid, dimension=tdim, description=f"rare {tdim} detail"))
        uid = f"ev:tail:{j + 1}"
        evidence.append(dict(id=uid, content=text, dimension=tdim, tail=True, covers=[rid], source_turn=3))
        witnesses["tail"].append(uid)
        history_facts.append((text, False))

    # scene obligations for active dimensions nobody else witnesses
    claimed = {p["dimension"] for p in pred_specs if p["question_id"] in {a.question_id for a in answers if a.confirmed}}
    claimed |= {d["dimension"] for d in required_fields} | {d["dimension"] for d in tail_decls}
    if any(o["due_turn"] <= turn for o in obligations):
        claimed.add("consequence")
    for dim in sorted(set(dims) - claimed):
        uid = f"ev:scene:{dim}"
        evidence.append(dict(id=uid, content=SCENE_TEXT[dim], dimension=dim, covers=[f"req:scene:{dim}"], source_turn=3))
        witnesses["required_witness"].append(uid)
        history_facts.append((SCENE_TEXT[dim], True))

    # options
    labels = rng.sample(OPTION_LABELS[domain], 3)
    hard_ids = [p["id"] for p in pred_specs if p["id"] not in ("soft1", "pnc")]
    if bucket == "infeasible":
        plan = [{hard_ids[0]}, {hard_ids[-1]}, {hard_ids[rng.randrange(len(hard_ids))]}]
    else:
        plan = [set(), {hard_ids[0]}, {hard_ids[-1]} if rng.random() < 0.5 else set()]
    options = []
    for j, (label, violate) in enumerate(zip(labels, plan)):
        terms = _option_terms(rng, [p for p in pred_specs if p["id"] in hard_ids], violate)
        if "timing" not in terms:
            terms["timing"] = "after_notice"
        options.append(dict(id=f"o{j + 1}", label=label, terms=terms, follow_ups=[f"review:o{j + 1}"]))
    if bucket == "exception":
        exc = next(p["exception"] for p in pred_specs if p["id"] == "px")
        options[0]["terms"]["timing"] = exc
        options[1]["terms"]["timing"] = "immediately"

    # context and distractor units (no requirement coverage)
    for dim in dims:
        uid = f"ev:ctx:{dim}"
        evidence.append(dict(id=uid, content=CONTEXT_TEXT[dim], dimension=dim, source_turn=2))
        history_facts.append((CONTEXT_TEXT[dim], True))
    for j, tmpl in enumerate(rng.sample(DISTRACTOR_TEXT, rng.randrange(9, 12))):
        text = tmpl.format(label=labels[(j + 1) % 3])
        uid = f"ev:noise:{j + 1}"
        evidence.append(dict(id=uid, content=text, dimension=OFF_DIMS[j], source_turn=2))
        history_facts.append((text, True))

    surface = tuple(rng.sample(SURFACE_TEXT, 2)) if bucket == "surface" else ()
    scenario = (
        f"{SCENARIO_OPENERS[domain]} The options are {labels[0]}, {labels[1]} or {labels[2]}. "
        f"It has to respect my {', '.join(DIM_PHRASE[d] for d in dims)}."
    )

    # shadow facts, spread across the history
    n_turns = turn
    shadow_src = rng.sample(SHADOW_BANK, 3)
    shadow = []
    shadow_turn = {}
    for j, (text, aliases, patterns) in enumerate(shadow_src):
        t = 1 + (j * (n_turns - 1)) // 3 + rng.randrange(0, max(1, (n_turns - 1) // 3))
        t = min(t, n_turns - 1)
        shadow.append(ShadowFact(f"s{j + 1}", tuple(aliases), tuple(patterns), rng.choice((1.0, 0.5)), t))
        shadow_turn[text] = t

    observations = _assemble_history(rng, n_turns, history_facts, shadow_turn, scenario)

    # pool order: tail and debt units last so pool-order selection starves them
    order = {"hard": 0, "field": 1, "scene": 2, "ctx": 3, "noise": 4, "debt": 6, "tail": 7}
    evidence.sort(key=lambda e: (order.get(e["id"].split(":")[1], 5), e["id"]))

    profile = {
        "turn": turn,
        "scenario": scenario,
        "active_dimensions": sorted(dims),
        "predicates": pred_specs,
        "hints": hints,
        "evidence": evidence,
        "required_fields": required_fields,
        "tail_witnesses": tail_decls,
        "obligations": obligations,
    }

    oracle = HardContract(
        tuple(
            HardPredicate(
                p["id"], p["kind"], p["target"], p["comparator"], p["value"],
                ProvenanceRecord(p["source_turn"], True, next(a.answer for a in answers if a.question_id == p["question_id"])),
                p["dimension"], p.get("description", ""),
            )
            for p in pred_specs
            if next(a for a in answers if a.question_id == p["question_id"]).confirmed
        )
    )
    feasible = tuple(
        o["id"] for o in options
        if not missing_premise and all(check_predicate(p, _as_commitment_view(o, oracle.ids)) for p in oracle)
    )
    if bucket == "infeasible":
        expected = "recontract"
    elif missing_premise:
        expected = "clarify"
    else:
        expected = None

    return Fixture(
        id=fid,
        bucket=bucket,
        domain=domain,
        required_domain_count=k,
        observations=tuple(observations),
        confirmed_answers=tuple(answers),
        options=tuple(options),
        oracle_contract=oracle,
        oracle_witnesses={c: tuple(sorted(v)) for c, v in witnesses.items()},
        oracle_feasible=feasible,
        expected_repair=expected,
        shadow_facts=tuple(shadow),
        profile=json.loads(json.dumps(profile)),
        surface_requirements=surface,
        seed=seed,
    )


def _assemble_history(
    rng: random.Random,
    n_turns: int,
    facts: Sequence[tuple[str, bool]],
    shadow_turn: Mapping[str, int],
    scenario: str,
) -> list[str]:
    turns: list[list[str]] = [[] for _ in range(n_turns)]
    turns[0].append("Hi, I need help thinking through a big decision.")
    leads = [f for f, lead in facts if lead]
    trailing = [f for f, lead in facts if not lead]
    rng.shuffle(leads)
    for t in range(1, n_turns):
        if leads:
            turns[t].append(leads.pop())
    for f in leads:
        turns[rng.randrange(1, n_turns)].append(f)
    for f in trailing:
        turns[rng.randrange(1, n_turns)].append(f)
    for text, t in shadow_turn.items():
        turns[t].append(text)
    for t in range(1, n_turns):
        if not turns[t]:
            turns[t].append(rng.choice(FILLER_TEXT))
    return [" ".join(t) for t in turns] + [scenario]


def generate_manifest(seed: int) -> Manifest:
    fixtures = []
    for bucket in BUCKETS:
        rng = random.Random(f"{seed}:{bucket}:layout")
        counts = [c for c, n in DOMAIN_COUNT_SPLIT.items() for _ in range(n)]
        rng.shuffle(counts)
        for i in range(FIXTURES_PER_BUCKET):
            fixtures.append(
                generate_fixture(
                    bucket,
                    DOMAINS[i % len(DOMAINS)],
                    seed,
                    index=i,
                    required_domain_count=counts[i],
                    missing_premise=bucket in MISSING_PREMISE_BUCKETS and i % 2 == 1,
                )
            )
    return Manifest(tuple(fixtures), seed)


def extend_history(f: Fixture, factor: float) -> Fixture:
    """Pad the visible history with filler turns until it is ``factor`` times longer."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return f
    history, current = list(f.observations[:-1]), f.observations[-1]
    base = sum(whitespace_tokens(t) for t in f.observations)
    target = factor * base
    total = base
    i = 0
    while total < target:
        turn = " ".join(FILLER_TEXT[(i + j) % len(FILLER_TEXT)] for j in range(3))
        history.append(turn)
        total += whitespace_tokens(turn)
        i += 1
    return Fixture(**{**f.__dict__, "observations": tuple(history + [current])})


def privacy_boundary_check(prompt: str, f: Fixture) -> tuple[bool, tuple[str, ...]]:
    """Pass iff no shadow alias or paraphrase pattern matches the normalized prompt."""
    tokens = normalize(prompt)
    offending = tuple(s.fact_id for s in f.shadow_facts if s.matches(tokens))
    return (not offending, offending)


def digest(observations: Sequence[str]) -> list[str]:
    """Lossy summary: keep the first sentence of every turn."""
    out = []
    for turn in observations:
        first = turn.split(". ")[0]
        out.append(first if first.endswith(".") else first + ".")
    return out
