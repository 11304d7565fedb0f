"""Acceptance criteria 1 to 11, one test each, run through the verification suite.

Each test prints and records one line "[k] id PASS|FAIL measured target tol";
the collected lines are repeated in the pytest terminal summary.
"""
import pytest

from conftest import ACCEPTANCE_LINES
from tubebumps.verification import CHECKS, verify


@pytest.fixture(scope="module")
def report(cfg, tmp_path_factory):
    return verify(cfg, out_dir=tmp_path_factory.mktemp("verify"))


def _check(report, k):
    cid = CHECKS[k - 1]
    rec = report[cid]
    line = f"[{k}] {rec.line()}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert rec.passed, line


def test_every_criterion_has_one_record(report):
    assert [r.id for r in report.records] == list(CHECKS)
    assert len(set(CHECKS)) == 11


def test_criterion_01_strip_spectrum(report):
    _check(report, 1)


def test_criterion_02_decay_rate(report):
    _check(report, 2)


def test_criterion_03_nondegeneracy(report):
    _check(report, 3)


def test_criterion_04_geometric_oracles(report):
    _check(report, 4)


def test_criterion_05_splitting_inequalities(report):
    _check(report, 5)


def test_criterion_06_truncation_rate(report):
    _check(report, 6)


def test_criterion_07_projection_rate(report):
    _check(report, 7)


def test_criterion_08_interaction_scaling(report):
    _check(report, 8)


def test_criterion_09_alternating_sign(report):
    _check(report, 9)


def test_criterion_10_reduction(report):
    _check(report, 10)


def test_criterion_11_theorem_shape(report):
    _check(report, 11)
