"""Acceptance gate: every criterion at its stated tolerance and budget.

The suite is computed once per session; each test asserts one criterion and
prints its pass/fail summary line.  The final test re-runs the whole suite
through the installed command-line entry point in a fresh process and
requires a byte-identical CSV artifact.
"""

import subprocess
import sys

import pytest

from simlearn import acceptance

SEED = acceptance.DEFAULT_SEED


@pytest.fixture(scope="session")
def suite():
    results = {}
    for num in sorted(acceptance.CRITERIA):
        results[num] = acceptance.CRITERIA[num](SEED)
    results[10] = acceptance.criterion_10(
        SEED, prior_results=[results[k] for k in sorted(results)])
    return results


def _assert_criterion(res):
    print()
    print(res.summary())
    for row in res.rows:
        print("   ", row.render())
    assert res.passed, res.details
    assert res.runtime_s <= res.budget_s, (
        f"runtime {res.runtime_s:.1f}s over budget {res.budget_s}s")


def test_criterion_01_distortion_sandwiches(suite):
    _assert_criterion(suite[1])


def test_criterion_02_link_duality(suite):
    _assert_criterion(suite[2])


def test_criterion_03_weak_learner(suite):
    _assert_criterion(suite[3])


def test_criterion_04_realizable_recovery(suite):
    _assert_criterion(suite[4])


def test_criterion_05_bilipschitz_transfer(suite):
    _assert_criterion(suite[5])


def test_criterion_06_sqrt_opt_suite(suite):
    res = suite[6]
    _assert_criterion(res)
    assert res.details["c_report"] <= acceptance.SIM_SUITE_C_GUARD


def test_criterion_07_simultaneity(suite):
    res = suite[7]
    _assert_criterion(res)
    assert res.details["max_eps_report"] <= acceptance.SIMULTANEITY_EPS


def test_criterion_08_pconcept(suite):
    _assert_criterion(suite[8])


def test_criterion_09_logistic_formulas(suite):
    res = suite[9]
    _assert_criterion(res)
    assert res.details["c_report_absolute"] <= 20.0


def test_seed_override_changes_draws_not_outcomes():
    # a different base seed permutes every Monte-Carlo draw; outcomes hold
    other = SEED + 9091
    for num in (3, 4, 8):
        res = acceptance.CRITERIA[num](other)
        assert res.passed, (num, res.details)


def test_criterion_10_determinism(suite, tmp_path):
    _assert_criterion(suite[10])
    # a fresh process over the CLI must reproduce the artifact byte for byte
    in_process = acceptance.results_csv([suite[k] for k in sorted(suite)])
    out = tmp_path / "verify.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "simlearn", "verify", "--seed", str(SEED),
         "--out", str(out)],
        capture_output=True, text=True, timeout=1800)
    print(proc.stdout)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert out.read_text() == in_process
