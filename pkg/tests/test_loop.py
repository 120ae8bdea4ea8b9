"""Test experiment runs end to end on a small suite
"""
import os
import csv
import json
import numpy as np
import LABOToolkit
from LABOToolkit.loop import LABORunner, RunLog, read_theta, write_theta
from .utils import make_theta, small_suite, small_config

suite = small_suite()

class Interrupted(Exception):
    """Raised to stop a run part way."""

class InterruptedRunner(LABORunner):
    """Runner that stops before its ``stop_at``-th evaluation."""
    stop_at = 5

    def evaluate(self,theta,iteration,f=None):
        if self.n_evaluations == self.stop_at:
            raise Interrupted()
        return super().evaluate(theta,iteration,f)

def read_summary(out_dir):
    with open(os.path.join(out_dir,"summary.json"),'r') as stream:
        return json.load(stream)

def test_run_config():
    """Test the typed configuration view
    """
    config = LABOToolkit.RunConfig({"run" : {"optimizer" : "cmaes", "out_dir" : "somewhere"}})
    assert config.run.optimizer == "cmaes" and config.run.budget == 200
    assert config.surrogate_config().beta == 0.2
    assert config.grasp_config().n_directions == 8
    assert "out_dir" not in config.identity()["run"]
    assert config.snapshot()["run"]["out_dir"] == "somewhere"
    try:
        config.run.nothing
        assert False
    except AttributeError:
        pass
    try:
        LABOToolkit.RunConfig({"run" : {"budget" : "many"}})
        assert False
    except LABOToolkit.ConfigError:
        pass

def test_labo_run(tmp_path):
    """Test a full LABO run and its output files
    """
    out = str(tmp_path / "labo")
    log = LABOToolkit.run(small_config(out),suite=suite)
    assert log.records[0].record_type == "run_start"
    assert log.records[0].record_def["log_version"] == 1
    evaluations = log.evaluations()
    assert len(evaluations) == 6
    assert [e["index"] for e in evaluations] == list(range(6))
    assert [e["iteration"] for e in evaluations] == [1,1,2,2,3,3]
    assert all(len(e["f"]) == 4 for e in evaluations)
    best = np.maximum.accumulate([e["F"] for e in evaluations])
    assert np.allclose([e["best_F"] for e in evaluations],best)
    rates = [e["best_success_rate"] for e in evaluations]
    assert rates == sorted(rates)
    iterations = log.of_type("bo_iteration")
    assert [r.record_def["source"] for r in iterations] == ["init","acquisition","acquisition"]
    assert len(log.of_type("checkpoint")) == 4
    assert len(log.of_type("pretrain")) == 1
    assert len(log.of_type("final_report")) == 1

    summary = read_summary(out)
    assert summary["evaluations"] == 6 and summary["optimizer"] == "labo"
    assert summary["best_F"] == best[-1]
    assert summary["runlog_hash"] == log.content_hash()
    assert set(summary["final"]) == {"train","test"}
    assert summary["final"]["test"]["n_tasks"] == 1
    assert summary["task_types"]["train"] == ["power","pinch","lateral"]
    assert np.array_equal(read_theta(os.path.join(out,"best_theta.txt")),summary["best_theta"])
    with open(os.path.join(out,"curve.csv"),newline='') as stream:
        rows = list(csv.reader(stream))
    assert rows[0] == ["evaluation","iteration","F","best_F","best_success_rate"]
    assert len(rows) == 7
    assert float(rows[-1][3]) == best[-1]
    on_disk = RunLog.read(os.path.join(out,"runlog.jsonl"))
    assert len(on_disk) == len(log)
    for name in ("representation.npz","Q.jsonl","state.json"):
        assert os.path.isfile(os.path.join(out,"checkpoints",name))

def test_labo_determinism(tmp_path):
    """Test that a seed fixes the whole run log
    """
    first = LABOToolkit.run(small_config(tmp_path / "a"),suite=suite)
    second = LABOToolkit.run(small_config(tmp_path / "b"),suite=suite)
    assert first.content_hash() == second.content_hash()
    other = LABOToolkit.run(small_config(tmp_path / "c",run={"seed" : 1}),suite=suite)
    assert other.content_hash() != first.content_hash()

def test_labo_resume(tmp_path):
    """Test that a resumed run matches an uninterrupted one
    """
    full = LABOToolkit.run(small_config(tmp_path / "full"),suite=suite)
    config = small_config(tmp_path / "broken")
    try:
        InterruptedRunner(config,suite=suite).run()
        assert False
    except Interrupted:
        pass
    with open(str(tmp_path / "broken" / "checkpoints" / "state.json")) as stream:
        assert json.load(stream)["iteration"] == 2
    resumed = LABOToolkit.run(config,resume=True,suite=suite)
    assert len(resumed.evaluations()) == 6
    assert resumed.content_hash() == full.content_hash()

def test_resume_checks(tmp_path):
    """Test that a checkpoint only resumes the same configuration
    """
    out = tmp_path / "run"
    LABOToolkit.run(small_config(out,run={"budget" : 2}),suite=suite)
    try:
        LABOToolkit.run(small_config(out,run={"budget" : 4}),resume=True,suite=suite)
        assert False
    except LABOToolkit.ConfigError:
        pass

def test_zero_budget(tmp_path):
    """Test a LABO run without evaluations
    """
    out = str(tmp_path / "empty")
    log = LABOToolkit.run(small_config(out,run={"budget" : 0}),suite=suite)
    assert log.evaluations() == []
    assert len(log.of_type("pretrain")) == 1
    assert log.of_type("bo_iteration") == []
    summary = read_summary(out)
    assert summary["evaluations"] == 0
    assert summary["best_F"] is None and summary["final"] is None
    assert not os.path.isfile(os.path.join(out,"best_theta.txt"))

def test_baselines(tmp_path):
    """Test every reference optimizer through the run loop
    """
    for optimizer in ("uniform","cmaes","raw_bo"):
        out = str(tmp_path / optimizer)
        log = LABOToolkit.run(small_config(out,run={"optimizer" : optimizer}),suite=suite)
        evaluations = log.evaluations()
        assert len(evaluations) == 6
        assert all(e["optimizer"] == optimizer for e in evaluations)
        assert all(e["f"] is None for e in evaluations)
        trace = log.of_type("trace")[0].record_def
        assert trace["optimizer"] == optimizer and trace["evaluations"] == 6
        assert read_summary(out)["evaluations"] == 6
    assert len(log.of_type("bo_iteration")) == 2

def test_baseline_resume(tmp_path):
    """Test that a baseline run replays its logged evaluations
    """
    full = LABOToolkit.run(small_config(tmp_path / "full",run={"optimizer" : "uniform"}),suite=suite)
    config = small_config(tmp_path / "broken",run={"optimizer" : "uniform"})
    runner = InterruptedRunner(config,suite=suite)
    runner.stop_at = 4
    try:
        runner.run()
        assert False
    except Interrupted:
        pass
    resumed = LABOToolkit.run(config,resume=True,suite=suite)
    assert resumed.content_hash() == full.content_hash()

def test_fixed_fingers(tmp_path):
    """Test that a pinned finger count reaches every evaluated design
    """
    config = small_config(tmp_path,run={"optimizer" : "uniform", "budget" : 3},design={"fixed_fingers" : 3})
    log = LABOToolkit.run(config,suite=suite)
    assert all(e["theta"][2] == 0.3 for e in log.evaluations())
    assert read_summary(str(tmp_path))["fixed_fingers"] == 3

def test_rejected_design(tmp_path):
    """Test the floor score of a design with crowded fingers
    """
    theta = make_theta(3,mount_deg=[0.0,5.0,180.0])
    train, test = LABOToolkit.evaluate_design(theta,suite,small_config(tmp_path))
    assert train.F == -1.0 and test.F == -1.0
    assert train.rejected == "FingersTooClose"
    assert train.p.tolist() == [0,0,0] and train.cost == 0.0
    train, _ = LABOToolkit.evaluate_design(theta,suite,small_config(tmp_path,design={"score_floor" : -5.0}))
    assert train.F == -5.0

def test_theta_file(tmp_path):
    """Test the exact text form of design vectors
    """
    theta = np.random.default_rng(0).uniform(size=185)
    path = str(tmp_path / "theta.txt")
    write_theta(path,theta)
    assert np.array_equal(read_theta(path),theta)
    with open(path,'w') as stream:
        stream.write("0.5\nabc\n")
    try:
        read_theta(path)
        assert False
    except LABOToolkit.MalformedVector:
        pass
