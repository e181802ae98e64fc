import json

import pytest

from cbea.fixtures import Manifest
from cbea.harness import (
    ABLATIONS,
    VARIANTS,
    RunConfig,
    check_invariants,
    run_matrix,
    run_variant,
    select_evidence,
    selector_diagnostic,
)
from cbea.report import SUMMARY_COLUMNS, _align, reports_for, write_reports


@pytest.fixture(scope="module")
def small(manifest):
    return Manifest(manifest.fixtures[::30], manifest.seed)


def test_one_row_per_fixture_in_order(runs, manifest):
    ids = [f.id for f in manifest]
    for name, rows in runs.items():
        assert [r.fixture_id for r in rows] == ids, name


def test_runs_are_deterministic(small):
    cfg = RunConfig()
    for v in ("cbea_lcv", "raw", "no_coverage_tail"):
        assert run_variant(small, cfg, v) == run_variant(small, cfg, v)


def test_parallel_matches_serial(small):
    serial = run_variant(small, RunConfig(), "cbea_lcv")
    parallel = run_variant(small, RunConfig(parallelism=2), "cbea_lcv")
    assert serial == parallel


def test_matrix_is_sorted_and_complete(small):
    rows = run_matrix(small, RunConfig(variants=("raw", "cbea_lcv"), ablations=("no_repair",)))
    assert len(rows) == 3 * len(small)
    assert rows == sorted(rows, key=lambda r: (r.variant, r.fixture_id))


def test_invariants_hold_on_full_matrix(runs, manifest):
    assert check_invariants([r for rows in runs.values() for r in rows], manifest) == []


def test_invariant_checker_catches_missing_rows(runs, manifest):
    problems = check_invariants(runs["cbea_lcv"][:-1], manifest)
    assert problems and "one-to-one" in problems[0]


def test_oracle_evidence_uses_labelled_units(manifest):
    f = manifest.fixtures[3]
    Z, _, _ = select_evidence(f, f.compile(), "oracle_evidence", RunConfig())
    assert Z == {e for ids in f.oracle_witnesses.values() for e in ids}


def test_validator_only_stays_within_budget(manifest):
    for f in manifest.fixtures[:20]:
        c = f.compile()
        Z, _, _ = select_evidence(f, c, "validator_only", RunConfig())
        assert sum(c.pool.get(e).cost for e in Z) <= 12


def test_config_round_trip(tmp_path):
    cfg = RunConfig(variants=("raw",), ablations=("no_repair",), seed=4, history_factor=2.0)
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.from_file(tmp_path / "c.json") == cfg
    with pytest.raises(ValueError):
        RunConfig(variants=("nope",))
    with pytest.raises(ValueError):
        run_variant(Manifest((), 0), RunConfig(), "nope")


def test_selector_diagnostic_shape(small):
    d = selector_diagnostic(small, RunConfig())
    assert set(d) == {"cbea", "mmr"}
    assert d["mmr"]["avg_size"] <= 12


def test_summary_columns_and_footer(runs, manifest, tmp_path):
    rows = runs["cbea_lcv"] + runs["raw"]
    write_reports(rows, manifest, tmp_path)
    header = (tmp_path / "summary.csv").read_text().splitlines()[0].split(",")
    assert set(header[1:]) == set(SUMMARY_COLUMNS)
    assert "simulated" in (tmp_path / "summary.txt").read_text()
    for name in ("covered_detail", "states", "horizon", "shadow_overall", "shadow_domain"):
        assert (tmp_path / f"{name}.csv").exists()


def test_reports_are_deterministic(runs, manifest, tmp_path):
    rows = runs["cbea_lcv"] + runs["no_repair"]
    write_reports(rows, manifest, tmp_path / "a")
    write_reports(list(reversed(rows)), manifest, tmp_path / "b")
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_text() == (tmp_path / "b" / p.name).read_text()


def test_empty_report_is_header_only(tmp_path):
    write_reports([], None, tmp_path)
    assert (tmp_path / "summary.csv").read_text() == "Method," + ",".join(SUMMARY_COLUMNS) + "\n"
    assert reports_for([]) == []
    assert _align(["a", "bb"], []).splitlines() == ["a  bb", "-  --"]


def test_all_modes_listed():
    assert len(VARIANTS) == 9 and len(ABLATIONS) == 3


def test_long_history_payload(manifest):
    from cbea.metrics import payload_stats

    cfg = RunConfig(history_factor=4.0)
    p = payload_stats(run_variant(manifest, cfg, "raw") + run_variant(manifest, cfg, "cbea_lcv"))
    assert p["raw"]["median_input_tokens"] >= 3 * p["cbea_lcv"]["median_input_tokens"]
    assert p["cbea_lcv"]["reduction_vs_raw"] >= 0.5
