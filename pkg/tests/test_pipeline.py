import csv
import math

import numpy as np
import pytest

from tubebumps.config import parse_config
from tubebumps.errors import PreconditionError
from tubebumps.pipeline import build_ansatz, run_pipeline, sweep_R
from tubebumps.reduction import energy_report

SEGMENT3 = """\
[curve]
kind = segment
start = 0, 0
end = 1, 0

[chain]
n = 3

[run]
R = 40
"""


@pytest.fixture(scope="module")
def circle_run(cfg, profiles, tmp_path_factory):
    out = tmp_path_factory.mktemp("circle")
    return run_pipeline(cfg, out_dir=out, profiles=profiles)


@pytest.fixture(scope="module")
def sweep(cfg, profiles, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    return sweep_R(cfg, (0.5, 20.0, 40.0, 80.0), out_dir=out, profiles=profiles)


def test_circle_pipeline_artifacts(circle_run):
    for key in ("trace", "energy_report", "chain", "phi", "v_u", "summary"):
        assert circle_run.files[key].exists(), key
    assert circle_run.signs == (1, -1)
    with open(circle_run.files["chain"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["sign"]) for r in rows] == [1, -1]
    assert circle_run.minimization.margin > 0
    assert circle_run.reduction.projected_grad_norm <= 1e-8


def test_circle_minimizer_is_antipodal(circle_run):
    t = circle_run.t
    assert abs((t[1] - t[0]) % 1.0 - 0.5) <= 5e-3


def test_segment_three_bumps(profiles, tmp_path):
    cfg = parse_config(SEGMENT3)
    art = run_pipeline(cfg, out_dir=tmp_path, profiles=profiles, write_fields=False)
    assert art.signs == (1, -1, 1)
    assert art.minimization.margin > 0
    assert 0 < art.t[0] < art.t[1] < art.t[2] < 1


def test_sweep_records_failures_and_continues(sweep):
    status = [r[-1] for r in sweep.rows]
    assert status[0].startswith("CurvatureTooLarge")
    assert status[1:] == ["ok", "ok", "ok"]
    text = sweep.path.read_text()
    assert text.startswith("R,n,E_n,J_phi,G_R,remainder,grad_norm")
    assert "# slope log(V_U_h1) vs log(R)" in text


def test_sweep_trends(sweep):
    v = sweep.column("V_U_h1")[1:]
    assert v[0] > v[1] > v[2]
    assert -0.8 <= sweep.slopes["V_U_h1"] <= -0.3
    eig = sweep.column("normal_min_eig")[1:]
    assert np.all(eig >= 0.5 * eig[0])
    assert math.isnan(sweep.column("G_R")[0])


def test_sweep_remainder_at_R80(cfg, profiles):
    # remainder measured against the leading interaction for the equispaced chain
    rep = energy_report(build_ansatz(cfg, 80.0, profiles), cfg.initial_t(), refine=False)
    assert abs(rep.remainder) <= 0.3 * rep.max_interaction, (
        f"remainder {rep.remainder:.3g} against max interaction {rep.max_interaction:.3g}")


def test_sweep_preconditions(cfg, profiles, tmp_path):
    with pytest.raises(PreconditionError):
        sweep_R(cfg, (40.0,), out_dir=tmp_path, profiles=profiles)
    with pytest.raises(PreconditionError):
        sweep_R(cfg, (20.0, 80.0, 40.0), out_dir=tmp_path, profiles=profiles)


def test_sweep_is_deterministic(cfg, profiles, sweep, tmp_path):
    again = sweep_R(cfg, (0.5, 20.0, 40.0, 80.0), out_dir=tmp_path, profiles=profiles)
    assert again.path.read_bytes() == sweep.path.read_bytes()
