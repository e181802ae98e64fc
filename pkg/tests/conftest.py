import sys

import pytest
from hypothesis import settings

from cbea.fixtures import generate_manifest
from cbea.harness import ABLATIONS, VARIANTS, RunConfig, run_variant

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

MANIFEST_SEED = 7


@pytest.fixture(scope="session")
def manifest():
    return generate_manifest(MANIFEST_SEED)


@pytest.fixture(scope="session")
def runs(manifest):
    """Every variant and ablation on the shared manifest, keyed by name."""
    cfg = RunConfig(seed=MANIFEST_SEED)
    return {v: run_variant(manifest, cfg, v) for v in (*VARIANTS, *ABLATIONS)}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    missing = sorted(set(range(1, 10)) - set(results))
    for n in missing:
        terminalreporter.write_line(f"criterion {n}: NOT RUN")
