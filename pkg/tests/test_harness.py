import csv
import json

import numpy as np
import pytest

from cranbeam import harness
from cranbeam.cli import main as cli_main


def test_trial_records_deterministic():
    cfg = harness.small_scenario(trials=1, r_min=2.0, beliefs=("full_robust",),
                                 methods=("successive",))
    a = harness.run_trial(cfg, 0)
    b = harness.run_trial(cfg, 0)
    assert a[0].admitted_set == b[0].admitted_set
    assert a[0].power_mw == b[0].power_mw
    assert a[0].min_rate == b[0].min_rate


def test_trial_seeds_are_counter_split():
    s0 = harness.trial_seeds(42, 0)
    s1 = harness.trial_seeds(42, 1)
    assert s0 != s1
    assert s0 == harness.trial_seeds(42, 0)


def test_robust_run_meets_targets():
    cfg = harness.small_scenario(trials=1, r_min=2.0)
    rec = harness.run_trial(cfg, 3)[0]
    assert rec.ok
    if rec.admitted:
        assert rec.min_rate >= cfg.r_min - 1e-3


def test_all_beliefs_and_perfect_reference_run():
    cfg = harness.small_scenario(
        trials=1, r_min=1.0,
        beliefs=("full_robust", "quant_only", "estim_only", "cdi_only",
                 "non_robust", "perfect_csi"),
    )
    recs = harness.run_trial(cfg, 1)
    assert len(recs) == 6
    assert all(r.ok for r in recs)
    by_belief = {r.belief: r for r in recs}
    # the perfect reference admits at least as many as the robust design
    assert by_belief["perfect_csi"].admitted >= by_belief["full_robust"].admitted


def test_sweep_csv_schema(tmp_path):
    out = tmp_path / "sweep.csv"
    side = tmp_path / "sweep.json"
    cfg = harness.small_scenario(trials=2, sweep_axis="r_min", sweep_values=(1.0, 2.0),
                                 beliefs=("full_robust",), methods=("successive",))
    records, summary = harness.run_sweep(cfg, out_csv=str(out), out_json=str(side))
    assert len(records) == 2 * 2
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == harness.CSV_HEADER
    assert len(rows) == 1 + len(records)
    doc = json.loads(side.read_text())
    assert len(doc) == len(records)
    assert {s["sweep_value"] for s in summary} == {1.0, 2.0}
    agg = out.with_suffix("").as_posix() + ".agg.csv"
    with open(agg) as fh:
        assert "admitted_mean" in fh.readline()


def test_sweep_deterministic_across_workers():
    cfg = harness.small_scenario(trials=2, r_min=1.5, beliefs=("full_robust",),
                                 methods=("successive",))
    seq, _ = harness.run_sweep(cfg)
    par, _ = harness.run_sweep(cfg, workers=2)
    assert [(r.seed, r.admitted_set, r.power_mw) for r in seq] == \
        [(r.seed, r.admitted_set, r.power_mw) for r in par]


def test_b_pa_sweep_axis_handles_inf():
    cfg = harness.small_scenario(trials=1, sweep_axis="b_pa",
                                 sweep_values=(1.0, float("inf")),
                                 beliefs=("full_robust",), methods=("successive",))
    records, _ = harness.run_sweep(cfg)
    assert len(records) == 2
    assert all(r.ok for r in records)


def test_audit_separation_uses_full_robust():
    """Baseline designs are rated under full robust statistics, not their own."""
    cfg = harness.small_scenario(trials=1, r_min=2.0,
                                 beliefs=("full_robust", "non_robust"))
    recs = harness.run_trial(cfg, 2)
    by_belief = {r.belief: r for r in recs}
    nr = by_belief["non_robust"]
    # the non-robust design believes it meets the target exactly, so any gap
    # visible here comes from auditing under the true statistics
    assert nr.ok
    if nr.admitted:
        assert nr.min_rate < cfg.r_min + 0.5


def test_cli_topo_and_pilots(capsys):
    assert cli_main(["topo", "--seed", "1", "--rrh", "6", "--ue", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["rrh_pos"]) == 6
    assert cli_main(["pilots", "--seed", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["tau"] == 2 * doc["num_colors"]


def test_cli_solve_and_sweep(tmp_path, capsys):
    assert cli_main(["solve", "--seed", "0", "--r-min", "1.0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ok"]
    out = tmp_path / "s.csv"
    assert cli_main(["sweep", "--axis", "r_min", "--values", "1.0",
                     "--trials", "1", "--out", str(out)]) == 0
    capsys.readouterr()
    assert out.exists()


def test_cli_validate_stats_small(capsys):
    assert cli_main(["validate-stats", "--draws", "40000", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out.replace("FAIL (", "")
