import json

import pytest
from click.testing import CliRunner

from lda_fas.cli import main


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("gen-data", "--spec", "fig1", "--n", 400, "--seed", 1, "--out", out).exit_code == 0
    cfg = out / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 3, "lda": {"k_init": 3}}))
    r = run("train", "--config", cfg, "--data", out / "train.csv", "--dev", out / "dev.csv", "--out", out)
    assert r.exit_code == 0, r.output
    return out


class TestPipeline:
    def test_gen_data_files(self, run_dir):
        for name in ("train.csv", "dev.csv", "test.csv", "spec.json"):
            assert (run_dir / name).exists()

    def test_train_manifest_has_resolved_config(self, run_dir):
        m = json.loads((run_dir / "manifest.json").read_text())
        assert m["config"]["epochs"] == 3 and m["config"]["lda"]["k_init"] == 3
        assert m["config"]["lda"]["s"] == 64.0  # defaults resolved
        assert m["seed"] == 0 and len(m["inputs"]["data"]["sha256"]) == 64
        for name in ("model.json", "bank.csv", "history.csv"):
            assert (run_dir / name).exists()

    def test_rerun_from_manifest_is_bitwise(self, run_dir, tmp_path):
        r = run("train", "--config", run_dir / "manifest.json", "--data", run_dir / "train.csv",
                "--dev", run_dir / "dev.csv", "--out", tmp_path)
        assert r.exit_code == 0
        for name in ("bank.csv", "history.csv", "model.json"):
            assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes()

    def test_flags_override_config(self, run_dir, tmp_path):
        r = run("train", "--config", run_dir / "cfg.json", "--data", run_dir / "train.csv", "--k-init", 2,
                "--seed", 5, "--no-pc-inter", "--aux", "--fpr-targets", "0.1,0.05", "--out", tmp_path)
        assert r.exit_code == 0, r.output
        c = json.loads((tmp_path / "manifest.json").read_text())["config"]
        assert (c["lda"]["k_init"], c["seed"], c["use_pc_inter"], c["use_aux"]) == (2, 5, False, True)
        assert c["fpr_targets"] == [0.1, 0.05]

    def test_eval(self, run_dir, tmp_path):
        r = run("eval", "--run", run_dir, "--dev", run_dir / "dev.csv", "--test", run_dir / "test.csv",
                "--out", tmp_path)
        assert r.exit_code == 0
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == "metric,split,threshold,value"
        assert any(line.startswith("tpr@fpr=0.001") for line in lines)

    def test_aps_and_adapt(self, run_dir, tmp_path):
        assert run("aps", "--run", run_dir, "--data", run_dir / "train.csv", "--out", tmp_path).exit_code == 0
        log = json.loads((tmp_path / "aps_log.json").read_text())
        assert log["steps"][0]["step"] == 0
        run("gen-data", "--n", 30, "--n-dev", 0, "--n-test", 0, "--shift", "4,0", "--prefix", "target_",
            "--out", tmp_path)
        r = run("adapt", "--model", run_dir / "model.json", "--bank", tmp_path / "bank_aps.csv",
                "--data", tmp_path / "target_train.csv", "--out", tmp_path)
        assert r.exit_code == 0, r.output
        assert (tmp_path / "bank_adapted.csv").exists()

    def test_gradcheck(self, tmp_path):
        r = run("gradcheck", "--n-trials", 2, "--out", tmp_path)
        assert r.exit_code == 0
        assert json.loads((tmp_path / "gradcheck.json").read_text())["passed"] is True

    def test_writes_only_under_out(self, run_dir, tmp_path):
        before = sorted(p.name for p in run_dir.iterdir())
        out = tmp_path / "only"
        run("eval", "--run", run_dir, "--dev", run_dir / "dev.csv", "--test", run_dir / "test.csv", "--out", out)
        assert sorted(p.name for p in run_dir.iterdir()) == before
        assert sorted(p.name for p in out.iterdir()) == ["metrics.csv", "metrics.json"]


class TestErrors:
    def error(self, result):
        return json.loads(result.stderr.strip().splitlines()[-1])

    def test_unknown_flag_is_usage_error(self, tmp_path):
        r = run("train", "--bogus", "--out", tmp_path)
        assert r.exit_code == 2 and self.error(r)["exit_code"] == 2

    def test_missing_input_is_usage_error(self, tmp_path):
        r = run("train", "--data", tmp_path / "missing.csv", "--out", tmp_path)
        assert r.exit_code == 2 and self.error(r)["error"] == "ConfigurationError"

    def test_malformed_config_is_usage_error(self, run_dir, tmp_path):
        (tmp_path / "bad.json").write_text('{"epochs": 0}')
        r = run("train", "--config", tmp_path / "bad.json", "--data", run_dir / "train.csv", "--out", tmp_path)
        assert r.exit_code == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_runtime_failure_is_exit_1(self, run_dir, tmp_path):
        # a non-finite sample makes training diverge, which is a runtime failure
        text = (run_dir / "train.csv").read_text().splitlines()
        first = text[1].split(",")
        first[0] = "nan"
        (tmp_path / "nan.csv").write_text("\n".join([text[0], ",".join(first)] + text[2:]) + "\n")
        r = run("train", "--data", tmp_path / "nan.csv", "--epochs", 1, "--out", tmp_path)
        assert r.exit_code == 1
        assert self.error(r)["error"] == "TrainingDivergedError"

    def test_unknown_repro_criterion(self, tmp_path):
        assert run("repro", "--only", "42", "--out", tmp_path).exit_code == 2
