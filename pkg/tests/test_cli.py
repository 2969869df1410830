import csv

import pytest
import yaml

from conftest import FIXTURE
from ranmaze.cli import cost_ratio, main


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    doc = yaml.safe_load(FIXTURE.read_text())
    doc["codec"] = {"n_states": 150, "max_epochs": 2}
    doc["agent"] = {"warmup": 20, "batch_size": 8, "hidden": [16, 16], "mask_invalid": True}
    path = tmp_path_factory.mktemp("cfg") / "small.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, small_config):
    out = tmp_path_factory.mktemp("run")
    assert main(["--config", str(small_config), "--out", str(out), "train-codec"]) == 0
    assert main(["--config", str(small_config), "--out", str(out), "--episodes", "12",
                 "train", "--mode", "both", "--per-subnet-episodes", "6"]) == 0
    return out


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_train_codec_outputs(trained):
    for i in range(3):
        assert (trained / f"codec_subnet{i}.npz").is_file()
        rows = read_csv(trained / f"codec_loss_subnet{i}.csv")
        assert list(rows[0]) == ["epoch", "train_loss", "val_loss"]


def test_train_outputs_and_cost_ratio(trained):
    assert (trained / "agent_unified.npz").is_file()
    for i in range(3):
        assert (trained / f"agent_subnet{i}.npz").is_file()
    log = read_csv(trained / "train_unified.csv")
    assert len(log) == 12
    assert list(log[0]) == ["episode", "subnet_id", "t", "episode_power_kw", "smoothed_reward",
                            "epsilon", "wall_ms", "env_steps"]
    ratio = read_csv(trained / "cost_ratio.csv")[0]
    assert int(ratio["per_subnet_total_steps"]) > 0


def test_evaluate_rows_and_provenance(trained, small_config):
    assert main(["--config", str(small_config), "--out", str(trained), "--episodes", "4",
                 "evaluate"]) == 0
    text = (trained / "metrics.csv").read_text()
    assert "# seed: 7" in text and "# config_sha256:" in text and '"agent"' in text
    rows = read_csv(trained / "metrics.csv")
    assert list(rows[0]) == ["strategy", "subnet_id", "episodes", "t_mean", "t_ci_low",
                             "t_ci_high", "power_mean_kw", "power_std_kw",
                             "power_saving_vs_random_pct", "notes"]
    assert {r["strategy"] for r in rows} == {"agent", "random", "greedy", "oracle"}
    assert len(rows) == 4 * 4   # three sub-networks plus the pooled row
    for r in rows:
        if r["strategy"] == "random" and r["power_mean_kw"] not in ("", "nan"):
            assert float(r["power_saving_vs_random_pct"]) == 0


def test_evaluate_is_byte_identical(trained, small_config, tmp_path):
    args = ["--config", str(small_config), "--episodes", "3", "evaluate",
            "--agent", str(trained / "agent_unified.npz")]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == \
        (tmp_path / "b" / "metrics.csv").read_bytes()


def test_resume_continues_run(trained, small_config):
    assert main(["--config", str(small_config), "--out", str(trained), "--episodes", "15",
                 "train", "--resume"]) == 0
    assert len(read_csv(trained / "train_unified.csv")) == 15


def test_splits_presets(trained, small_config):
    for preset in ("option7_2", "option6"):
        assert main(["--config", str(small_config), "--out", str(trained), "--episodes", "3",
                     "splits", "--preset", preset, "--strategies", "greedy,random"]) == 0
        assert f"# preset: {preset}" in (trained / f"splits_{preset}.csv").read_text()


def test_unknown_preset_is_usage_error(small_config, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["--config", str(small_config), "--out", str(tmp_path), "splits",
              "--preset", "option8"])
    assert exc.value.code != 0


def test_missing_config_is_usage_error(tmp_path):
    assert main(["--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path),
                 "train-codec"]) == 2
    assert main(["--out", str(tmp_path), "oracle"]) == 2


def test_unknown_strategy_is_usage_error(small_config, tmp_path):
    assert main(["--config", str(small_config), "--out", str(tmp_path), "evaluate",
                 "--strategies", "greedy,bogus"]) == 2


def test_missing_codecs_is_usage_error(small_config, tmp_path):
    assert main(["--config", str(small_config), "--out", str(tmp_path), "train"]) == 2


def test_oracle_guard_recorded(tmp_path):
    doc = yaml.safe_load(FIXTURE.read_text())
    net = doc["subnetworks"][2]
    # seven nodes trips the size guard
    net["nodes"].append({"id": "c6", "cores": 80, "du_capable": False})
    net["links"].append({"from": "c5", "to": "c6", "km": 4, "gbps": 30})
    path = tmp_path / "big.yaml"
    path.write_text(yaml.safe_dump(doc))
    assert main(["--config", str(path), "--out", str(tmp_path), "--episodes", "3",
                 "evaluate", "--strategies", "greedy,oracle"]) == 0
    rows = {(r["strategy"], r["subnet_id"]): r for r in read_csv(tmp_path / "metrics.csv")}
    assert "size guard" in rows[("oracle", "2")]["notes"]
    assert main(["--config", str(path), "--out", str(tmp_path), "--episodes", "2", "oracle"]) == 0
    notes = [r["notes"] for r in read_csv(tmp_path / "oracle.csv") if r["subnet_id"] == "2"]
    assert all("size guard" in n for n in notes)


def test_cost_ratio_arithmetic():
    def log(rewards, step):
        return [(i, 0, 1.0, 0.0, r, 0.0, None, step * (i + 1)) for i, r in enumerate(rewards)]
    per = {0: log([0, 1, 1, 1, 1], 10), 1: log([0, 1, 1, 1, 1], 10)}
    uni = log([0, 0.5, 1, 1, 1], 4)
    res = cost_ratio(uni, per)
    assert res["target_reward"] == 1.0
    assert res["unified_steps_to_target"] == 12
    assert res["ratio"] == pytest.approx(12 / 100)
