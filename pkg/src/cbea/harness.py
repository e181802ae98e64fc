"""Matched runs over the nine comparison variants and three ablations."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import httpx

from cbea.backend import run_prompts
from cbea.candidates import (
    GATED_VARIANTS,
    AttemptOutcome,
    BackendConfig,
    ControlAct,
    build_prompt,
    generate_candidates_rule_based,
    outcome_for_act,
    realize_surface,
    serialize_commitment,
)
from cbea.contract import Compiled, RequiredCoverageSet
from cbea.fixtures import Fixture, Manifest, digest, extend_history, privacy_boundary_check
from cbea.lcv import GateContext, gate, lex_select, soft_score
from cbea.metrics import RunRecord, evaluate
from cbea.selector import Budget, SelectorWeights, greedy_select
from cbea.text import normalize, token_set, whitespace_tokens

VARIANTS = (
    "raw",
    "summarized",
    "rag",
    "long_context",
    "tool_agent",
    "validator_only",
    "runtime_no_cbea",
    "cbea_lcv",
    "oracle_evidence",
)
ABLATIONS = ("no_validator", "no_repair", "no_coverage_tail")
RAG_K = 8


@dataclass(frozen=True)
class RunConfig:
    manifest_path: str = ""
    variants: tuple[str, ...] = ("cbea_lcv",)
    ablations: tuple[str, ...] = ()
    seed: int = 0
    budget: int = 12
    weights: SelectorWeights = SelectorWeights()
    backend: BackendConfig | None = None
    parallelism: int = 1
    output_dir: str = "out"
    history_factor: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "ablations", tuple(self.ablations))
        bad = set(self.variants) - set(VARIANTS)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}")
        bad = set(self.ablations) - set(ABLATIONS)
        if bad:
            raise ValueError(f"unknown ablations {sorted(bad)}")
        if self.history_factor < 1:
            raise ValueError("history_factor must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = SelectorWeights(**d["weights"])
        if d.get("backend"):
            d["backend"] = BackendConfig(**d["backend"])
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict[str, Any]:
        return json.loads(json.dumps(asdict(self)))


# --- evidence access per variant ------------------------------------------------

def _describe(compiled: Compiled) -> dict[str, str]:
    out = {r.id: r.description for r in compiled.requirements if r.description}
    out.update({p.id: p.description for p in compiled.contract if p.description})
    return out


def visible_units(f: Fixture, compiled: Compiled, variant: str) -> tuple[str, ...]:
    """Evidence ids an ungated baseline can see."""
    pool = compiled.pool
    if variant in ("raw", "long_context"):
        text = " ".join(f.observations)
        return tuple(e.id for e in pool if e.content in text)
    if variant == "summarized":
        text = " ".join(digest(f.observations))
        return tuple(e.id for e in pool if e.content in text)
    query = frozenset(compiled.context.observation_tokens)
    ranked = sorted(pool, key=lambda e: (-len(token_set(e.content) & query), e.id))
    top = [e.id for e in ranked[:RAG_K]]
    if variant == "rag":
        return tuple(top)
    if variant == "tool_agent":
        store = [s for o in compiled.state.obligations for s in o.source_evidence_ids if s in pool]
        return tuple(dict.fromkeys(top + store))
    raise ValueError(f"{variant} is not an ungated baseline")


def history_view(f: Fixture, compiled: Compiled, variant: str, Z: Sequence[str]) -> list[str]:
    if variant in ("raw", "long_context"):
        return list(f.observations[:-1])
    if variant == "summarized":
        return digest(f.observations[:-1])
    return [compiled.pool.get(e).content for e in Z]


def echo(f: Fixture, compiled: Compiled, variant: str, Z: Sequence[str]) -> list[str]:
    """Context a baseline restates alongside its answer (recency-biased)."""
    history = list(f.observations[:-1])
    if variant == "raw":
        return history[len(history) - math.ceil(len(history) / 2):]
    if variant == "long_context":
        return history[len(history) - math.ceil(len(history) / 4):]
    if variant == "summarized":
        d = digest(history)
        return d[len(d) - math.ceil(len(d) / 2):]
    return [compiled.pool.get(e).content for e in Z]


def select_evidence(
    f: Fixture, compiled: Compiled, mode: str, cfg: RunConfig
) -> tuple[frozenset[str], RequiredCoverageSet, bool]:
    """Activated evidence, requirement set and coverage switch for gated modes."""
    pool, R, M, u, c = compiled.pool, compiled.requirements, compiled.matrix, compiled.state, compiled.context
    if mode in ("cbea_lcv", "no_validator", "no_repair"):
        res = greedy_select(pool, R, M, u, c, cfg.weights, Budget.for_pool(pool, cfg.budget))
        return res.selected, R, True
    if mode == "oracle_evidence":
        return frozenset(e for ids in f.oracle_witnesses.values() for e in ids), R, True
    if mode == "validator_only":
        chosen, spent = [], 0
        for e in pool:
            if spent + e.cost <= cfg.budget:
                chosen.append(e.id)
                spent += e.cost
        return frozenset(chosen), R, True
    if mode == "runtime_no_cbea":
        R2 = R.without_sources("tail_witness")
        w = replace(cfg.weights, tail=0.0, debt=0.0)
        res = greedy_select(pool, R2, M, u, c, w, Budget(cfg.budget, 0))
        return res.selected, R2, True
    if mode == "no_coverage_tail":
        res = greedy_select(pool, R, M, u, c, cfg.weights.without_coverage_terms(), Budget(cfg.budget, 0))
        return res.selected, R, False
    raise ValueError(f"unknown gated mode {mode!r}")


def _decide(mode: str, A, ctx: GateContext) -> ControlAct:
    if mode == "no_validator":
        best = max(A, key=lambda a: soft_score(a, ctx.state, ctx.Z, ctx.context, ctx.pool))
        return ControlAct.from_commitment(best)
    if mode == "no_repair":
        return ControlAct.from_commitment(lex_select(A, ctx)[0][0])
    if mode == "validator_only":
        hard_ctx = replace(ctx, check_coverage=False)
        return gate(A, hard_ctx).act
    return gate(A, ctx).act


def run_fixture(f: Fixture, mode: str, cfg: RunConfig) -> RunRecord:
    """One attempt on one fixture with the rule-based generator."""
    compiled = f.compile()
    describe = _describe(compiled)
    if mode in GATED_VARIANTS or mode in ABLATIONS:
        Z, R, check_cov = select_evidence(f, compiled, mode, cfg)
        A = [a for a in generate_candidates_rule_based(f, compiled, Z, "cbea_lcv", cfg.seed, R) if a.is_commitment]
        ctx = GateContext(compiled.contract, Z, R, compiled.matrix, compiled.state, compiled.context, compiled.pool, check_cov)
        act = _decide(mode, A, ctx)
        prompt = build_prompt(f, compiled, mode, Z)
        text = realize_surface(act, compiled.state, compiled.pool.subset(Z), compiled.context, describe)
        privacy = privacy_boundary_check(prompt, f)[0]
    else:
        Z = frozenset(visible_units(f, compiled, mode))
        A = generate_candidates_rule_based(f, compiled, Z, mode, cfg.seed)
        act = ControlAct.from_commitment(A[0])
        prompt = build_prompt(f, compiled, mode, Z, history_view(f, compiled, mode, sorted(Z)))
        text = realize_surface(act, compiled.state, compiled.pool.subset(Z), compiled.context, describe)
        text += " Keeping in mind: " + " ".join(echo(f, compiled, mode, sorted(Z)))
        privacy = None
    outcome = outcome_for_act(
        act,
        raw_text=serialize_commitment(act.commitment) if act.commitment else "",
        input_tokens=whitespace_tokens(prompt),
        output_tokens=whitespace_tokens(text),
    )
    return RunRecord(
        f.id, mode, outcome, evaluate(f, outcome), text, tuple(sorted(Z)), privacy, f.required_domain_count, f.domain
    )


def _run_chunk(args: tuple[list[dict], str, dict]) -> list[RunRecord]:
    fixtures, mode, cfg = args
    conf = RunConfig.from_dict(cfg)
    return [run_fixture(Fixture.from_dict(d), mode, conf) for d in fixtures]


def _prepare(manifest: Manifest, cfg: RunConfig) -> list[Fixture]:
    return [extend_history(f, cfg.history_factor) for f in manifest]


def run_variant(
    manifest: Manifest,
    cfg: RunConfig,
    variant: str,
    client_factory: Callable[[], httpx.Client] | None = None,
) -> list[RunRecord]:
    """Exactly one RunRecord per fixture, in manifest order."""
    if variant not in VARIANTS and variant not in ABLATIONS:
        raise ValueError(f"unknown variant {variant!r}")
    fixtures = _prepare(manifest, cfg)
    if cfg.backend is not None:
        return _run_backend(fixtures, cfg, variant, client_factory)
    if cfg.parallelism > 1 and len(fixtures) > 1:
        n = cfg.parallelism
        chunks = [[f.to_dict() for f in fixtures[i::n]] for i in range(n)]
        with ProcessPoolExecutor(n) as ex:
            parts = list(ex.map(_run_chunk, [(c, variant, cfg.to_dict()) for c in chunks]))
        rows = {r.fixture_id: r for part in parts for r in part}
        return [rows[f.id] for f in fixtures]
    return [run_fixture(f, variant, cfg) for f in fixtures]


def run_ablation(manifest: Manifest, cfg: RunConfig, ablation: str) -> list[RunRecord]:
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}")
    return run_variant(manifest, cfg, ablation)


def run_matrix(manifest: Manifest, cfg: RunConfig) -> list[RunRecord]:
    records: list[RunRecord] = []
    for v in (*cfg.variants, *cfg.ablations):
        records += run_variant(manifest, cfg, v)
    return sorted(records, key=lambda r: (r.variant, r.fixture_id))


def _run_backend(
    fixtures: Sequence[Fixture],
    cfg: RunConfig,
    variant: str,
    client_factory: Callable[[], httpx.Client] | None,
) -> list[RunRecord]:
    """Backend path: the model proposes one candidate; gated variants still pass it through the gate."""
    assert cfg.backend is not None
    prepared = []
    for f in fixtures:
        compiled = f.compile()
        if variant in GATED_VARIANTS or variant in ABLATIONS:
            Z, R, check_cov = select_evidence(f, compiled, variant, cfg)
            prompt = build_prompt(f, compiled, variant, Z)
        else:
            Z, R, check_cov = frozenset(visible_units(f, compiled, variant)), compiled.requirements, True
            prompt = build_prompt(f, compiled, variant, Z, history_view(f, compiled, variant, sorted(Z)))
        prepared.append((f, compiled, Z, R, check_cov, prompt))
    outcomes = run_prompts([p[-1] for p in prepared], cfg.backend, client_factory)

    records = []
    for (f, compiled, Z, R, check_cov, prompt), out in zip(prepared, outcomes):
        option_ids = {o["id"] for o in f.options}
        if out.act is not None and out.act.is_commitment:
            a = out.act.commitment
            if a.selected_option not in option_ids:
                out = replace(out, state="invalid", act=None, reason=f"unknown option {a.selected_option!r}")
            elif variant in GATED_VARIANTS or variant in ABLATIONS:
                ctx = GateContext(compiled.contract, Z, R, compiled.matrix, compiled.state, compiled.context, compiled.pool, check_cov)
                act = _decide(variant, [a], ctx)
                out = outcome_for_act(act, raw_text=out.raw_text, input_tokens=out.input_tokens, output_tokens=out.output_tokens, retries=out.retries)
        text = ""
        if out.act is not None:
            text = realize_surface(out.act, compiled.state, compiled.pool.subset(Z), compiled.context, _describe(compiled))
        privacy = privacy_boundary_check(prompt, f)[0] if variant in GATED_VARIANTS else None
        records.append(
            RunRecord(f.id, variant, out, evaluate(f, out), text, tuple(sorted(Z)), privacy, f.required_domain_count, f.domain)
        )
    return records


# --- diagnostics ----------------------------------------------------------------

def selector_diagnostic(manifest: Manifest, cfg: RunConfig) -> dict[str, dict[str, Any]]:
    """Control-evidence recall of the activation selector against MMR at the same budget."""
    from cbea.selector import mean_recall, mmr_select, selector_recall

    out: dict[str, dict[str, Any]] = {}
    sizes: dict[str, list[int]] = {"cbea": [], "mmr": []}
    reports: dict[str, list] = {"cbea": [], "mmr": []}
    for f in manifest:
        c = f.compile()
        z_cbea = greedy_select(c.pool, c.requirements, c.matrix, c.state, c.context, cfg.weights, Budget.for_pool(c.pool, cfg.budget)).selected
        z_mmr = mmr_select(c.pool, c.context.observation_tokens, cfg.budget)
        for name, Z in (("cbea", z_cbea), ("mmr", z_mmr)):
            sizes[name].append(len(Z))
            reports[name].append(selector_recall(Z, f.oracle_witnesses))
    for name in ("cbea", "mmr"):
        out[name] = {"avg_size": sum(sizes[name]) / max(len(sizes[name]), 1), **mean_recall(reports[name])}
    return out


GATE_GUARANTEED = ("validator_only", "runtime_no_cbea", "cbea_lcv", "oracle_evidence")


def check_invariants(records: Sequence[RunRecord], manifest: Manifest) -> list[str]:
    """Structural breaches; an empty list means every checked invariant holds."""
    from cbea.candidates import OUTCOME_STATES

    problems: list[str] = []
    ids = [f.id for f in manifest]
    by_var: dict[str, list[str]] = {}
    for r in records:
        by_var.setdefault(r.variant, []).append(r.fixture_id)
        if r.outcome.state not in OUTCOME_STATES:
            problems.append(f"{r.variant}/{r.fixture_id}: unknown state {r.outcome.state!r}")
        if r.variant in GATE_GUARANTEED:
            if r.outcome.state == "emitted" and r.oracle_eval.hard_violation:
                problems.append(f"{r.variant}/{r.fixture_id}: gated emission violates a hard predicate")
            if r.privacy_ok is False:
                problems.append(f"{r.variant}/{r.fixture_id}: uncompiled history reached the gated prompt")
    for v, got in by_var.items():
        if sorted(got) != sorted(ids):
            problems.append(f"{v}: rows do not match the manifest one-to-one ({len(got)} rows, {len(ids)} fixtures)")
    return problems
