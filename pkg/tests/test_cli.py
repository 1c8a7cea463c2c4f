import json

import pytest

from bmdqn import metrics
from bmdqn.cli import main

TINY = ["--meta-iterations", "2", "--n-test-tasks", "2", "--set", "horizon=10",
        "--set", "meta_batch_size=2", "--set", "hidden_sizes=4", "--set", "batch_size=4"]


def train(tmp_path, name="a", *extra):
    out = tmp_path / name
    rc = main(["meta-train", "--experiment", "nav2d", "--seed", "7", "--output-dir", str(out), *TINY, *extra])
    return rc, out


def test_meta_train_outputs(tmp_path):
    rc, out = train(tmp_path)
    assert rc == 0
    for name in ("checkpoint.json", "train_metrics.csv", "config.txt", "summary.json"):
        assert (out / name).exists()
    assert len(metrics.read_csv(out / "train_metrics.csv")) == 2
    summ = json.loads((out / "summary.json").read_text())
    assert summ["meta_iterations"] == 2 and summ["command"] == "meta-train"


def test_seed_twice_byte_identical(tmp_path):
    _, a = train(tmp_path, "a")
    _, b = train(tmp_path, "b")
    assert (a / "train_metrics.csv").read_bytes() == (b / "train_metrics.csv").read_bytes()
    assert (a / "checkpoint.json").read_bytes() == (b / "checkpoint.json").read_bytes()


def test_meta_test(tmp_path, capsys):
    _, out = train(tmp_path)
    rc = main(["meta-test", "--experiment", "nav2d", "--seed", "7", "--checkpoint", str(out / "checkpoint.json"),
               "--output-dir", str(tmp_path / "t"), *TINY])
    assert rc == 0
    rows = metrics.read_csv(tmp_path / "t" / "test_metrics.csv")
    assert sorted({r.adaptation_step for r in rows}) == [0, 1, 2, 3]
    summ = json.loads((tmp_path / "t" / "summary.json").read_text())["adaptation"]
    for s in summ:
        xs = [r.episode_return for r in rows if r.adaptation_step == s["adaptation_step"]]
        assert s["return_mean"] == pytest.approx(sum(xs) / len(xs), rel=1e-15)
    assert "step 3" in capsys.readouterr().out


def test_task_file(tmp_path):
    _, out = train(tmp_path)
    tf = tmp_path / "tasks.txt"
    tf.write_text("goal 0.1 0.2\ngoal -0.3 0.0\ngoal 0.4 0.4\n")
    rc = main(["meta-test", "--experiment", "nav2d", "--checkpoint", str(out / "checkpoint.json"),
               "--task-file", str(tf), "--output-dir", str(tmp_path / "t"), *TINY, "--n-test-tasks", "3"])
    assert rc == 0
    assert {r.task_id for r in metrics.read_csv(tmp_path / "t" / "test_metrics.csv")} == {0, 1, 2}


def test_spec_mismatch(tmp_path, capsys):
    _, out = train(tmp_path)
    rc = main(["meta-test", "--experiment", "nav2d", "--checkpoint", str(out / "checkpoint.json"),
               "--output-dir", str(tmp_path / "t"), *TINY, "--set", "hidden_sizes=5"])
    err = capsys.readouterr().err
    assert rc == 1
    import bmdqn.config as C
    h_ckpt = C.parse_config(overrides={"hidden_sizes": "4"}).net_spec().spec_hash
    h_cfg = C.parse_config(overrides={"hidden_sizes": "5"}).net_spec().spec_hash
    assert h_ckpt in err and h_cfg in err


def test_unknown_key_usage_error(tmp_path, capsys):
    rc = main(["meta-train", "--set", "alhpa=0.1", "--output-dir", str(tmp_path / "x")])
    assert rc == 2 and "alhpa" in capsys.readouterr().err


def test_bad_set_syntax(tmp_path):
    assert main(["meta-train", "--set", "alpha", "--output-dir", str(tmp_path / "x")]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    rc, _ = train(tmp_path, "file/sub")
    assert rc == 1


def test_meta_test_needs_checkpoint(tmp_path):
    assert main(["meta-test", "--output-dir", str(tmp_path / "x")]) == 2


def test_baseline_random_init(tmp_path):
    rc = main(["baseline", "--variant", "random_init", "--output-dir", str(tmp_path / "b"), *TINY])
    assert rc == 0


def test_baseline_fixed_time(tmp_path):
    rc = main(["baseline", "--experiment", "traffic", "--variant", "fixed_time", "--n-test-tasks", "2",
               "--set", "horizon=30", "--output-dir", str(tmp_path / "f")])
    assert rc == 0
    rows = metrics.read_csv(tmp_path / "f" / "test_metrics.csv")
    assert len(rows) == 2 and all(r.avg_queue is not None for r in rows)


def test_fixed_time_needs_traffic(tmp_path):
    assert main(["baseline", "--variant", "fixed_time", "--output-dir", str(tmp_path / "f")]) == 2


def test_verify_small(tmp_path, capsys):
    rc = main(["verify", "--instances", "3", "--json", str(tmp_path / "v.json")])
    assert rc == 0
    rep = json.loads((tmp_path / "v.json").read_text())
    assert rep["passed"] and len(rep["checks"]) == 8
    assert "PASS" in capsys.readouterr().out


@pytest.mark.parametrize("op", ["kl_grad_wrt_q", "kl_diff_grad_wrt_prior", "backward", "td_loss"])
def test_grad_check(op, capsys):
    assert main(["grad-check", "--op", op, "--dim", "12"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_argparse_rejects_bad_choice():
    with pytest.raises(SystemExit) as e:
        main(["grad-check", "--op", "nope"])
    assert e.value.code == 2
