from collections import Counter

import pytest

from cbea.fixtures import (
    BUCKETS,
    DOMAINS,
    Fixture,
    Manifest,
    digest,
    extend_history,
    generate_manifest,
    privacy_boundary_check,
)
from cbea.text import normalize, whitespace_tokens


def option_passes(pred, option, claimed):
    """Comparator table written out directly, independent of the predicate engine."""
    if pred.target == "claimed_predicates":
        return pred.value not in claimed
    attr = pred.target.split(".", 1)[1]
    if attr not in option["terms"]:
        return pred.comparator == "absent"
    v = option["terms"][attr]
    if pred.comparator == "leq":
        return v <= pred.value
    if pred.comparator == "geq":
        return v >= pred.value
    if pred.comparator == "eq":
        return v == pred.value
    if pred.comparator == "in_set":
        return v in pred.value
    if pred.comparator == "absent":
        return v in (None, False, "")
    if pred.comparator == "neq":
        return v != pred.value
    raise AssertionError(pred.comparator)


def test_manifest_layout(manifest):
    assert len(manifest) == 360
    assert Counter(f.bucket for f in manifest) == {b: 60 for b in BUCKETS}
    assert Counter(f.domain for f in manifest) == {d: 72 for d in DOMAINS}
    assert Counter(f.required_domain_count for f in manifest) == {2: 144, 3: 144, 4: 72}
    assert len({f.id for f in manifest}) == 360


def test_oracle_feasibility_by_enumeration(manifest):
    for f in manifest:
        missing = any(r["id"].endswith(":missing") for r in f.profile["required_fields"])
        expected = tuple(
            o["id"] for o in f.options
            if not missing and all(option_passes(p, o, f.oracle_contract.ids) for p in f.oracle_contract)
        )
        assert f.oracle_feasible == expected, f.id


def test_expected_repairs(manifest):
    for f in manifest:
        if f.bucket == "infeasible":
            assert f.infeasible and f.expected_repair == "recontract"
        elif f.infeasible:
            assert f.expected_repair == "clarify"
        else:
            assert f.expected_repair is None
    assert sum(1 for f in manifest if f.infeasible) == 180


def test_generation_is_deterministic():
    a, b = generate_manifest(3), generate_manifest(3)
    assert a.to_json() == b.to_json()
    assert generate_manifest(4).to_json() != a.to_json()


def test_manifest_round_trip(tmp_path, manifest):
    path = tmp_path / "m.json"
    manifest.save(path)
    back = Manifest.load(path)
    assert back.to_json() == manifest.to_json()
    f = manifest.fixtures[5]
    assert Fixture.from_dict(f.to_dict()) == f


def test_fixtures_compile(manifest):
    for f in manifest:
        c = f.compile()
        assert c.contract.ids == f.oracle_contract.ids
        for cat, units in f.oracle_witnesses.items():
            assert all(u in c.pool for u in units), (f.id, cat)


def test_shadow_facts_live_in_history_not_pool(manifest):
    for f in manifest.fixtures[::11]:
        history = normalize(" ".join(f.observations))
        assert all(s.matches(history) for s in f.shadow_facts)
        pool_text = normalize(" ".join(e.content for e in f.compile().pool))
        assert not any(s.matches(pool_text) for s in f.shadow_facts)


def test_privacy_check_flags_leaks(manifest):
    f = manifest.fixtures[0]
    ok, bad = privacy_boundary_check("nothing here", f)
    assert ok and bad == ()
    ok, bad = privacy_boundary_check(" ".join(f.observations), f)
    assert not ok and set(bad) == {s.fact_id for s in f.shadow_facts}


@pytest.mark.parametrize("factor", [1.0, 2.0, 4.0])
def test_extend_history_reaches_factor(manifest, factor):
    f = manifest.fixtures[1]
    g = extend_history(f, factor)
    base = sum(whitespace_tokens(t) for t in f.observations)
    assert sum(whitespace_tokens(t) for t in g.observations) >= factor * base
    assert g.observations[-1] == f.observations[-1]


def test_digest_keeps_first_sentences():
    assert digest(["One. Two. Three", "Solo"]) == ["One.", "Solo."]


def test_infeasible_fixture_invariant():
    from cbea.fixtures import generate_fixture

    f = generate_fixture("infeasible", "career", 7)
    assert f.oracle_feasible == () and f.expected_repair == "recontract"
    assert generate_fixture("infeasible", "career", 7).to_dict() == f.to_dict()


def test_removing_tail_unit_flips_compliant_set():
    from cbea.candidates import generate_candidates_rule_based
    from cbea.fixtures import generate_fixture
    from cbea.lcv import GateContext, feasible_set

    f = generate_fixture("tail", "investment", 3)
    c = f.compile()
    tails = [e.id for e in c.pool if e.tail]
    assert tails

    def compliant(Z):
        A = generate_candidates_rule_based(f, c, Z)
        ctx = GateContext(c.contract, Z, c.requirements, c.matrix, c.state, c.context, c.pool)
        return {a.selected_option for a in feasible_set(A, ctx)}

    full = frozenset(c.pool.ids)
    assert compliant(full) == set(f.oracle_feasible) != set()
    for t in tails:
        assert compliant(full - {t}) == set()


def test_histograms_hold_across_seeds():
    a, b = generate_manifest(101), generate_manifest(202)
    assert a.fixtures[0].observations != b.fixtures[0].observations
    for m in (a, b):
        assert Counter(f.bucket for f in m) == {x: 60 for x in BUCKETS}
        assert Counter(f.required_domain_count for f in m) == {2: 144, 3: 144, 4: 72}


def test_long_history_keeps_compilation(manifest):
    f = manifest.fixtures[2]
    assert extend_history(f, 1.0) is f
    g = extend_history(f, 4.0)
    a, b = f.compile(), g.compile()
    assert (a.contract, a.pool, a.state, a.requirements, a.context) == (b.contract, b.pool, b.state, b.requirements, b.context)
    assert a.matrix == b.matrix


def test_privacy_names_injected_alias(manifest):
    f = manifest.fixtures[4]
    s = f.shadow_facts[1]
    assert privacy_boundary_check("Evidence: " + s.aliases[0], f) == (False, (s.fact_id,))
    assert privacy_boundary_check("", f) == (True, ())
