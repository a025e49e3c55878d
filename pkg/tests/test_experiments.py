import csv
import io
import json
import math

import numpy as np
import pytest

from coalweb.errors import GuardError
from coalweb.experiments import (
    CSV_COLUMNS, KINDS, Cell, ExperimentConfig, merge, report_stem, run, run_partial, split, write_report,
)
from reduced import REDUCED, reduced_config


def test_every_kind_has_a_reduced_config():
    assert set(REDUCED) == set(KINDS)


def test_config_defaults_and_guards():
    c = ExperimentConfig("etahat", seed=1)
    assert c.law == "-2:1/4,-1:1/4,1:1/4,2:1/4"
    assert c.trials == 2000 and c.deltas == (0.1, 0.02) and c.ts == (1.0,)
    assert ExperimentConfig("density_scan").law == "-1:1/3,0:1/3,1:1/3"
    assert ExperimentConfig("interface_clt").time_kind == "continuous"
    with pytest.raises(GuardError):
        ExperimentConfig("nope")
    with pytest.raises(GuardError):
        ExperimentConfig("etahat", deltas=(1.5,))
    with pytest.raises(GuardError):
        ExperimentConfig("etahat", interval=(1.0, 0.0))
    with pytest.raises(GuardError):
        ExperimentConfig("etahat", time_kind="weekly")


def test_verdicts():
    two = Cell("a", {}, 1.04, 0.001, 1.0, "x", tolerance=0.05)
    assert two.verdict == "pass"
    assert Cell("a", {}, 1.06, 0.001, 1.0, "x", tolerance=0.05).verdict == "fail"
    # noise widens the threshold to 3 standard errors
    assert Cell("a", {}, 1.06, 0.03, 1.0, "x", tolerance=0.05).verdict == "pass"
    assert Cell("a", {}, 0.5, 0.0, 0.0, "x", sided="upper").verdict == "fail"
    assert Cell("a", {}, -0.5, 0.0, 0.0, "x", sided="upper").verdict == "pass"
    assert Cell("a", {}, -0.1, 0.0, 0.0, "x", sided="strict").verdict == "pass"
    assert Cell("a", {}, 0.0, 0.0, 0.0, "x", sided="strict").verdict == "fail"
    assert Cell("a", {}, math.inf, 0.0, 0.0, "x", sided="finite").verdict == "fail"
    assert Cell("a", {}, 123.0, 0.0, 0.0, "x", sided="info").verdict == "info"
    assert Cell("a", {}, 1.04, 0.001, 1.0, "x", tolerance=0.05, override=0.0).verdict == "fail"


def test_split_covers_trials():
    assert split(10, 3) == [(0, 3), (3, 6), (6, 10)]
    assert split(2, 8) == [(0, 1), (1, 2)]


def test_merge_identity_and_order():
    c = reduced_config("hitting_tail")
    whole = merge([run_partial(c, 0, c.trials)])
    parts = [run_partial(c, a, b) for a, b in split(c.trials, 4)]
    assert merge(parts).to_csv() == whole.to_csv()
    assert merge(parts[::-1]).to_csv() == whole.to_csv()
    assert merge([parts[2], parts[0], parts[3], parts[1]]).to_json() == whole.to_json()


def test_merge_rejects_gaps_and_overlaps():
    c = reduced_config("hitting_tail")
    a, b = run_partial(c, 0, 30), run_partial(c, 32, 64)
    with pytest.raises(GuardError):
        merge([a, b])
    with pytest.raises(GuardError):
        merge([a, run_partial(c, 20, 64)])
    with pytest.raises(GuardError):
        merge([a])
    with pytest.raises(GuardError):
        run_partial(c, 0, 65)


@pytest.mark.parametrize("kind", KINDS)
def test_worker_count_does_not_change_reports(kind):
    c = reduced_config(kind)
    a = run(c, 1)
    b = run(c, 2)
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()


def test_csv_and_json_layout(tmp_path):
    c = reduced_config("overshoot")
    rep = run(c)
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert all(r[0] == "overshoot" for r in rows[1:])
    doc = json.loads(rep.to_json())
    assert doc["config"]["seed"] == c.seed
    assert "generator" in doc and "merge_order" in doc
    assert "runtime" not in rep.to_json()
    paths = write_report(rep, tmp_path, "csv")
    names = sorted(p.rsplit("/", 1)[-1] for p in map(str, paths))
    assert names == [f"{report_stem(c)}.{e}" for e in ("csv", "dat", "json")]
    assert report_stem(c) == f"overshoot_seed{c.seed}"


def test_every_cell_has_provenance():
    for kind in ("density_scan", "negcorr_exact", "fg_convergence", "pointprocess"):
        rep = run(reduced_config(kind))
        assert all(cell.provenance for cell in rep.cells)


def test_negcorr_exact_example():
    rep = run(ExperimentConfig("negcorr_exact", seed=0))
    cov = [c for c in rep.cells if c.name.startswith("cov")]
    assert len(cov) == 10
    assert all(c.verdict == "pass" for c in cov)


def test_density_exact_oracle_cell():
    rep = run(ExperimentConfig("density_scan", seed=3, ts=(1.0,), width=5, trials=2000))
    (cell,) = rep.cells
    assert cell.reference == pytest.approx(19 / 27)
    assert cell.provenance == "oracle:enumerate_exact"
    assert cell.verdict == "pass"


def test_guard_violation_names_the_kind():
    with pytest.raises(GuardError, match="density_scan"):
        run(ExperimentConfig("density_scan", seed=1, ts=(2500.0,), width=100, trials=2))


def test_tolerance_override_applies_to_all_cells():
    rep = run(ExperimentConfig("hitting_tail", seed=1, ts=(10.0, 100.0), trials=64, tolerance=0.0))
    assert all(c.threshold == 0.0 for c in rep.cells)


def test_fg_refuses_continuous_time():
    with pytest.raises(GuardError):
        run(ExperimentConfig("fg_convergence", seed=1, trials=2, deltas=(0.2,), time_kind="continuous"))


def test_seed_changes_estimates():
    a = run(reduced_config("hitting_tail", seed=1))
    b = run(reduced_config("hitting_tail", seed=2))
    assert a.to_csv() != b.to_csv()
    assert np.isfinite([c.estimate for c in a.cells]).all()
