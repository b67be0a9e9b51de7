import numpy as np
import pytest

from hpr.cli import experiment_from_mapping, main, parse_config
from hpr.imageio import read_raw_image


CONFIG = """
# tiny sweep
n = 8
alphas = 0.02
sigmas = 1.0
seeds = 0
spectral_iters = 10
warm_iters = 3
solver.pg-wf.algorithm = wf
solver.pg-wf.likelihood = pg
solver.pg-wf.iters = 3
solver.pois-wf.algorithm = wf
solver.pois-wf.likelihood = poisson
solver.pois-wf.iters = 3
"""


class TestConfigParsing:
    def test_flat_key_value_with_comments(self):
        mapping = parse_config("a = 1   # trailing\n# full line\n\nb=2\n")
        assert mapping == {"a": "1", "b": "2"}

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_config("not a key value\n")

    def test_experiment_mapping(self):
        config = experiment_from_mapping(parse_config(CONFIG))
        assert config.n == 8
        assert config.alphas == (0.02,)
        assert set(config.solvers) == {"pg-wf", "pois-wf"}
        assert config.solvers["pg-wf"]["likelihood"] == "pg"


def test_simulate_then_reconstruct(tmp_path, capsys):
    prefix = str(tmp_path / "sim")
    assert main(["simulate", "--n", "8", "--alpha", "0.03", "--sigma", "0.5",
                 "--seed", "3", "--image", "synthetic:blobs", "--out", prefix]) == 0
    out = capsys.readouterr().out
    assert "wrote" in out
    xhat_path = str(tmp_path / "xhat.f32")
    assert main(["reconstruct", "--meas", prefix + ".hpm", "--ref", prefix + "_ref.f32",
                 "--algorithm", "wf", "--likelihood", "pg", "--iters", "3",
                 "--spectral-iters", "10", "--warm-iters", "3",
                 "--truth", prefix + "_truth.f32", "--out", xhat_path]) == 0
    out = capsys.readouterr().out
    assert "NRMSE" in out
    x = read_raw_image(xhat_path)
    assert x.shape == (8, 8)
    assert np.all(np.isfinite(x))


def test_sweep_deterministic_csv(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(CONFIG)
    outs = []
    for sub in ("a", "b"):
        outdir = tmp_path / sub
        assert main(["sweep", "--config", str(cfg), "--outdir", str(outdir)]) == 0
        capsys.readouterr()
        outs.append((outdir / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]


def test_sweep_to_stdout(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(CONFIG)
    assert main(["sweep", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("hpr_csv_v1,")
    assert len(out.splitlines()) == 3


def test_compare_table(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(CONFIG)
    assert main(["compare", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "likelihood" in out
    assert "pois-wf" in out


def test_selftest_fast(capsys):
    assert main(["selftest", "--fast"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    assert "FAIL" not in out.replace("FAILED", "")
