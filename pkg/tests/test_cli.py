import json

import numpy as np
import pytest

from mmdcop.cli import main, read_csv_pairs, InputError
from mmdcop.copulas import CopulaModel


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    x = CopulaModel.from_tau("gaussian", 0.5).sample(1000, 42).data
    np.savetxt(d / "gauss.csv", x, delimiter=",", header="x,y", comments="")
    # strictly increasing marginal maps of the same data
    np.savetxt(d / "moved.csv", np.column_stack([np.log(x[:, 0]), x[:, 1] ** 3]), delimiter=",")
    np.savetxt(d / "one.csv", x[:, :1], delimiter=",")
    np.savetxt(d / "short.csv", x[:5], delimiter=",")
    (d / "bad.csv").write_text("a,b\n1,2\n3,x\n" + "4,5\n" * 10)
    return d


def run_json(args, path):
    code = main(args + ["--output", str(path)])
    return code, json.loads(path.read_text()) if path.exists() else None


class TestIngestion:
    def test_header_detected(self, data_dir):
        assert read_csv_pairs(data_dir / "gauss.csv").shape == (1000, 2)
        assert read_csv_pairs(data_dir / "moved.csv").shape == (1000, 2)

    @pytest.mark.parametrize("name", ["one.csv", "short.csv", "bad.csv", "missing.csv"])
    def test_malformed(self, data_dir, name):
        with pytest.raises(InputError):
            read_csv_pairs(data_dir / name)


class TestEstimate:
    def test_mmd_end_to_end(self, data_dir, tmp_path):
        code, doc = run_json(
            ["estimate", str(data_dir / "gauss.csv"), "--family", "gaussian", "--method", "mmd",
             "--transform", "probit", "--gamma", "0.95", "--niter", "300", "--batch", "100", "--seed", "1"],
            tmp_path / "o.json",
        )
        assert code == 0
        assert abs(doc["tau_hat"] - 0.5) < 0.1
        assert set(doc) >= {"family", "method", "kernel", "gamma", "param_hat", "tau_hat", "n", "seed", "n_iter_used", "provenance"}
        assert set(doc["provenance"]) == {"seed", "config_hash", "version"}

    @pytest.mark.parametrize("method", ["itau", "cml", "mmd-closed"])
    def test_rank_invariance(self, data_dir, tmp_path, method):
        a = run_json(["estimate", str(data_dir / "gauss.csv"), "--method", method], tmp_path / "a.json")
        b = run_json(["estimate", str(data_dir / "moved.csv"), "--method", method], tmp_path / "b.json")
        assert a == b

    def test_one_column(self, data_dir, capsys):
        assert main(["estimate", str(data_dir / "one.csv")]) == 2
        assert "column" in capsys.readouterr().err

    def test_zero_gamma(self, data_dir, capsys):
        assert main(["estimate", str(data_dir / "gauss.csv"), "--gamma", "0"]) == 2
        assert "gamma" in capsys.readouterr().err

    def test_bad_config_value(self, data_dir, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"gamma": -1}))
        assert main(["estimate", str(data_dir / "gauss.csv"), "--config", str(cfg)]) == 2
        cfg.write_text(json.dumps({"colour": "red"}))
        assert main(["estimate", str(data_dir / "gauss.csv"), "--config", str(cfg)]) == 2

    def test_config_file_and_flag_precedence(self, data_dir, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"method": "itau", "family": "clayton"}))
        code, doc = run_json(["estimate", str(data_dir / "gauss.csv"), "--config", str(cfg), "--family", "frank"], tmp_path / "o.json")
        assert code == 0 and doc["method"] == "itau" and doc["family"] == "frank"

    def test_unsupported_combination(self, data_dir):
        assert main(["estimate", str(data_dir / "gauss.csv"), "--family", "clayton", "--method", "mmd-closed"]) == 2

    def test_non_convergence(self, data_dir, tmp_path, monkeypatch):
        monkeypatch.setattr(CopulaModel, "score", lambda self, u, atoms=None: np.full(len(u), np.nan))
        code, doc = run_json(["estimate", str(data_dir / "gauss.csv"), "--niter", "5", "--batch", "10"], tmp_path / "o.json")
        assert code == 3
        assert "error" in doc and doc["trajectory"]


class TestBootstrap:
    def test_interval(self, data_dir, tmp_path):
        code, doc = run_json(
            ["bootstrap", str(data_dir / "gauss.csv"), "--method", "itau", "--resamples", "200", "--seed", "3"],
            tmp_path / "b.json",
        )
        assert code == 0
        assert doc["lower"] <= doc["tau_hat"] <= doc["upper"]
        assert doc["level"] == 0.95 and doc["n_resamples"] == 200

    def test_one_resample(self, data_dir):
        assert main(["bootstrap", str(data_dir / "gauss.csv"), "--resamples", "1"]) == 2

    def test_byte_identical(self, data_dir, tmp_path):
        args = ["bootstrap", str(data_dir / "gauss.csv"), "--method", "itau", "--resamples", "50", "--seed", "8"]
        main(args + ["--output", str(tmp_path / "1.json")])
        main(args + ["--output", str(tmp_path / "2.json")])
        assert (tmp_path / "1.json").read_bytes() == (tmp_path / "2.json").read_bytes()


class TestBenchmark:
    def grid(self, tmp_path, **extra):
        cfg = {"families": ["gaussian"], "estimators": ["itau"], "epsilons": [0, 0.05], "reps": 5, "ns": [200], **extra}
        p = tmp_path / "grid.json"
        p.write_text(json.dumps(cfg))
        return p

    def test_minimal_grid(self, tmp_path):
        out = tmp_path / "r.csv"
        assert main(["benchmark", "--config", str(self.grid(tmp_path)), "--seed", "1", "--output", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 11
        agg = json.loads(out.with_suffix(".json").read_text())
        assert len(agg["cells"]) == 2 and agg["provenance"]["seed"] == 1

    def test_rerun_identical(self, tmp_path):
        cfg = self.grid(tmp_path)
        for name in ("a.csv", "b.csv"):
            main(["benchmark", "--config", str(cfg), "--seed", "9", "--output", str(tmp_path / name)])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_marshall_olkin_qmc_note(self, tmp_path):
        cfg = self.grid(tmp_path, families=["mo"], estimators=["mmd"], epsilons=[0], reps=1, sgd={"n_iter": 5, "batch_size": 10})
        out = tmp_path / "m.csv"
        assert main(["benchmark", "--config", str(cfg), "--seed", "1", "--output", str(out)]) == 0
        notes = json.loads(out.with_suffix(".json").read_text())["notes"]
        assert any("quasi-Monte Carlo disabled" in n for n in notes)

    def test_seed_required(self, tmp_path):
        assert main(["benchmark", "--config", str(self.grid(tmp_path)), "--output", str(tmp_path / "x.csv")]) == 2

    def test_bad_grid(self, tmp_path):
        p = tmp_path / "g.json"
        p.write_text("{not json")
        assert main(["benchmark", "--config", str(p), "--seed", "1", "--output", str(tmp_path / "x.csv")]) == 2
        p.write_text(json.dumps({"epsilons": [0.9]}))
        assert main(["benchmark", "--config", str(p), "--seed", "1", "--output", str(tmp_path / "x.csv")]) == 2

    def test_sweep(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"gammas": [0.5, 1.0], "transforms": ["id"], "reps": 2, "n": 100}))
        out = tmp_path / "s.csv"
        assert main(["sweep", "--config", str(p), "--seed", "2", "--niter", "10", "--batch", "10", "--output", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 5
