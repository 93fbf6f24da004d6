"""End-to-end CLI behavior: configs, exit codes, files on disk."""
import pytest

from adl.cli import main

BASE = {
    "model": {"layers": "affine:2:8 tanh:8 affine:8:2",
              "loss": "softmax_ce"},
    "partition": {"k": "2", "strategy": "even"},
    "data": {"dataset": "two_spirals", "n": "64", "noise_std": "0.0",
             "seed": "4"},
    "optimizer": {"ga_steps": "2", "updates": "5", "batch_size": "8",
                  "schedule": "constant", "lr": "0.05"},
    "run": {"mode": "adl-clocked", "seed": "1"},
}


def write_cfg(tmp_path, name="run.ini", out="out", **overrides):
    cfg = {sec: dict(keys) for sec, keys in BASE.items()}
    cfg["run"]["out"] = str(tmp_path / out)
    for sec, keys in overrides.items():
        if keys is None:
            cfg.pop(sec, None)
            continue
        cfg.setdefault(sec, {})
        for key, val in keys.items():
            if val is None:
                cfg[sec].pop(key, None)
            else:
                cfg[sec][key] = str(val)
    lines = []
    for sec, keys in cfg.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in keys.items())
        lines.append("")
    path = tmp_path / name
    path.write_text("\n".join(lines))
    return path


def test_run_writes_trace_and_summary(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["run", str(cfg)]) == 0
    out = tmp_path / "out"
    assert (out / "trace.csv").exists()
    summary = (out / "summary.txt").read_text()
    assert "mode: adl-clocked" in summary
    assert "updates_completed: 5" in summary
    assert capsys.readouterr().out == summary


@pytest.mark.parametrize("bad,msg", [
    ({"run": {"mode": "warp"}}, "unknown mode"),
    ({"run": {"bogus": "1"}}, "unknown key"),
    ({"data": {"dataset": None}}, "missing required"),
    ({"data": None}, "missing config section"),
    ({"model": {"loss": "hinge"}}, "unknown loss"),
    ({"model": {"layers": "affine:2:8 tanh:9 affine:9:2"}}, "chain"),
    ({"optimizer": {"schedule": "linear"}}, "unknown schedule"),
    ({"partition": {"k": "9"}}, "cannot split"),
    ({"data": {"dataset": "linreg", "dim": "2"}}, "classification"),
    ({"optimizer": {"lr": "banana"}}, "bad value"),
    ({"optimizer": {"schedule": "step", "lr": "0.1",
                    "milestones": "2, x"}}, "bad value"),
    ({"partition": {"boundaries": "one"}}, "bad value"),
])
def test_bad_configs_exit_2(tmp_path, capsys, bad, msg):
    cfg = write_cfg(tmp_path, **bad)
    assert main(["run", str(cfg)]) == 2
    assert msg in capsys.readouterr().err


def test_missing_config_file_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.ini")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_divergence_exit_3_with_partial_trace(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        model={"layers": "affine:2:4 tanh:4 affine:4:1", "loss": "mse"},
        data={"dataset": "linreg", "dim": "2"},
        optimizer={"lr": "1e6", "updates": "50"})
    assert main(["run", str(cfg)]) == 3
    summary = (tmp_path / "out" / "summary.txt").read_text()
    assert "diverged: True" in summary
    assert (tmp_path / "out" / "trace.csv").exists()


def test_k1_sync_and_pipeline_traces_byte_identical(tmp_path):
    a = write_cfg(tmp_path, "a.ini", out="A", partition={"k": "1"})
    b = write_cfg(tmp_path, "b.ini", out="B", partition={"k": "1"},
                  run={"mode": "sync-ga"})
    assert main(["run", str(a)]) == 0
    assert main(["run", str(b)]) == 0
    ta = (tmp_path / "A" / "trace.csv").read_bytes()
    tb = (tmp_path / "B" / "trace.csv").read_bytes()
    assert ta == tb


def test_all_modes_run(tmp_path):
    for mode in ("adl-clocked", "adl-parallel", "sync-ga", "delayed-replay"):
        cfg = write_cfg(tmp_path, f"{mode}.ini", out=mode,
                        run={"mode": mode})
        assert main(["run", str(cfg)]) == 0
        assert (tmp_path / mode / "trace.csv").exists()


def test_out_dir_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("ADL_OUT_DIR", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    cfg = write_cfg(tmp_path, "envrun.ini", run={"out": None})
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "envout" / "envrun" / "trace.csv").exists()


def test_tick_trace_level(tmp_path):
    cfg = write_cfg(tmp_path, run={"trace_level": "ticks"})
    assert main(["run", str(cfg)]) == 0
    events = (tmp_path / "out" / "events.csv").read_text().splitlines()
    assert events[0] == "tick,module,event,index"
    assert len(events) > 10


def test_auto_lr_and_momentum_warning(tmp_path, capsys):
    cfg = write_cfg(tmp_path, optimizer={"lr": "auto", "momentum": "0.9"})
    assert main(["run", str(cfg)]) == 0
    err = capsys.readouterr().err
    assert "momentum" in err and "plain SGD" in err


def test_theorem3_schedule_and_precondition_warning(tmp_path, capsys):
    good = write_cfg(tmp_path, "t3.ini", out="t3", optimizer={
        "schedule": "theorem3", "lr": None, "gap": "1.0",
        "grad_bound": "1.0", "smoothness": "1.0", "epsilon": "0.5"})
    assert main(["run", str(good)]) == 0
    assert "precondition" not in capsys.readouterr().err
    loud = write_cfg(tmp_path, "t3b.ini", out="t3b", optimizer={
        "schedule": "theorem3", "lr": None, "gap": "10000.0",
        "grad_bound": "1.0", "smoothness": "1.0"})
    assert main(["run", str(loud)]) == 0
    assert "precondition violated" in capsys.readouterr().err


def test_harmonic_and_step_schedules(tmp_path):
    h = write_cfg(tmp_path, "h.ini", out="H", optimizer={
        "schedule": "harmonic", "lr": None, "harmonic_c": "0.3"})
    assert main(["run", str(h)]) == 0
    s = write_cfg(tmp_path, "s.ini", out="S", optimizer={
        "schedule": "step", "lr": "0.1", "warmup_epochs": "1",
        "milestones": "2, 4", "decay_factor": "0.5"})
    assert main(["run", str(s)]) == 0


def test_explicit_partition_boundaries(tmp_path):
    cfg = write_cfg(tmp_path, partition={"k": "2", "strategy": None,
                                         "boundaries": "1"})
    assert main(["run", str(cfg)]) == 0
    bad = write_cfg(tmp_path, "bad.ini", partition={"k": "3",
                                                    "boundaries": "1"})
    assert main(["run", str(bad)]) == 2


def test_staleness_table_values(capsys):
    assert main(["staleness-table", "--modules", "8",
                 "--ga-steps", "1,4"]) == 0
    out = capsys.readouterr().out
    rows = {line.split()[0]: line.split()[1:]
            for line in out.splitlines()
            if line and line.split()[0].isdigit()}
    assert rows["1"] == ["14", "7/2"]
    assert rows["8"] == ["0", "0"]
    assert rows["3"][0] == "10"  # 2*(K-k)


def test_staleness_table_k_alias(capsys):
    assert main(["staleness-table", "--K", "3", "--M", "4"]) == 0
    out = capsys.readouterr().out
    assert "1/2" in out  # module 2 of 3 at M=4


def test_bounds_reproduces_reference_numbers(capsys):
    assert main(["bounds", "--modules", "2", "--ga-steps", "2",
                 "--grad-bound", "1", "--smoothness", "1",
                 "--dbar-sum", "3", "--lr", "0.1",
                 "--grad-norm-sq", "4"]) == 0
    out = capsys.readouterr().out
    assert "theorem1_rhs: -0.1875 (descent)" in out
    assert main(["bounds", "--modules", "1", "--ga-steps", "1",
                 "--grad-bound", "1", "--smoothness", "1",
                 "--gap", "1", "--updates", "4"]) == 0
    out = capsys.readouterr().out
    assert "theorem3_lr: 0.5 (L*lr <= 1: True)" in out
    assert "theorem3_bound: 2.0" in out


def test_bounds_domain_error_exit_2(capsys):
    assert main(["bounds", "--modules", "1", "--ga-steps", "1",
                 "--grad-bound", "-1", "--smoothness", "1",
                 "--gap", "1"]) == 2
    assert "error:" in capsys.readouterr().err


def test_compare_exit_codes(tmp_path, capsys):
    a = write_cfg(tmp_path, "a.ini", out="A")
    b = write_cfg(tmp_path, "b.ini", out="B")
    c = write_cfg(tmp_path, "c.ini", out="C", run={"seed": "2"})
    for f in (a, b, c):
        assert main(["run", str(f)]) == 0
    ta = str(tmp_path / "A" / "trace.csv")
    tb = str(tmp_path / "B" / "trace.csv")
    tc = str(tmp_path / "C" / "trace.csv")
    assert main(["compare", ta, tb]) == 0
    assert "result: PASS" in capsys.readouterr().out
    assert main(["compare", ta, tc, "--tol", "1e-9"]) == 1
    out = capsys.readouterr().out
    assert "result: FAIL" in out and "first_divergence: 0" in out
    assert main(["compare", ta, str(tmp_path / "missing.csv")]) == 2
