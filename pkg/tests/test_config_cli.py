import json
import sys

import numpy as np
import pytest

from gpsobol.cli import DEMO_TANK, main
from gpsobol.config import ConfigError, RunConfig, load_config

SMALL = {
    "seed": 7,
    "functions": [{"builtin": "ishigami"}],
    "design": {"sizes": [20], "lhs_iterations": 20},
    "analysis": {"subsets": [[1], [2, 3]], "m": 200, "n_paths": 5, "n_boot": 4, "test_size": 50,
                 "first_approach": True},
}

ADAPTER = [sys.executable, "-m", "gpsobol.functions", "ishigami"]


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def with_(base, **changes):
    data = json.loads(json.dumps(base))
    for dotted, value in changes.items():
        node = data
        *head, last = dotted.split("__")
        for key in head:
            node = node[key]
        node[last] = value
    return data


def read_dir(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


class TestValidation:
    def test_defaults(self):
        cfg = RunConfig.from_dict(SMALL)
        assert cfg.inputs.dim == 3
        assert cfg.analysis.subsets == ((1,), (2, 3))
        assert cfg.analysis.estimator == "janon" and cfg.models[0].trend == "constant"
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("changes, field", [
        ({"seed": -1}, "config.seed"),
        ({"analysis__subsets": [[1], [4]]}, "config.analysis.subsets[1][0]"),
        ({"analysis__subsets": [[]]}, "config.analysis.subsets[0]"),
        ({"analysis__estimator": "other"}, "config.analysis.estimator"),
        ({"analysis__m": 1}, "config.analysis.m"),
        ({"design__sizes": [20, 10]}, "config.design.sizes"),
        ({"analysis__extra": 1}, "config.analysis.extra"),
        ({"functions": [{"builtin": "ishigami", "command": "x"}]}, "config.functions[0]"),
        ({"functions": [{"builtin": "nope"}]}, "config.functions[0].builtin"),
        ({"models": [{"length_scales": [1.0]}]}, "config.models[0].length_scales"),
        ({"analysis__balance": {"growth": 1.0}}, "config.analysis.balance.growth"),
    ])
    def test_field_paths(self, changes, field):
        with pytest.raises(ConfigError) as info:
            RunConfig.from_dict(with_(SMALL, **changes))
        assert str(info.value).startswith(field + ":")

    def test_command_needs_inputs(self):
        with pytest.raises(ConfigError, match="config.inputs"):
            RunConfig.from_dict(with_(SMALL, functions=[{"command": ADAPTER}]))

    def test_json_syntax_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "seed": 1,\n  "functions": [}\n')
        with pytest.raises(ConfigError, match="line 3, column"):
            load_config(str(p))

    def test_digest_ignores_output(self):
        a = RunConfig.from_dict(SMALL)
        b = RunConfig.from_dict(with_(SMALL, output="elsewhere"))
        c = RunConfig.from_dict(with_(SMALL, seed=8))
        assert a.digest() == b.digest() != c.digest()


class TestCommandLine:
    def test_exit_code_for_bad_config(self, tmp_path, capsys):
        assert main(["sobol", "--config", str(tmp_path / "missing.json")]) == 2
        assert "configuration error" in capsys.readouterr().err
        cfg = write(tmp_path, with_(SMALL, functions=[{"builtin": "tank_cheap"}, {"builtin": "tank_cheap"}],
                                    design={"sizes": [20, 10]}))
        assert main(["sobol", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_exit_code_for_aborted_analysis(self, tmp_path):
        flat = [sys.executable, "-c", "import sys\nfor _ in sys.stdin: print(1.0)"]
        cfg = write(tmp_path, with_(SMALL, functions=[{"command": flat}],
                                    inputs={"lower": [0, 0, 0], "upper": [1, 1, 1]}))
        assert main(["sobol", "--config", cfg, "--out", str(tmp_path / "o")]) == 3

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert main(["sobol", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
        assert main(["sobol", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
        a, b = read_dir(tmp_path / "a"), read_dir(tmp_path / "b")
        assert a == b
        assert {"design_level1.csv", "model.json", "index_u1.csv", "index_u2-3.csv",
                "summary.json", "manifest.json"} <= set(a)

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        main(["fit", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["fit", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "8"])
        manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert manifest["seeds"]["master"] == 8
        assert (tmp_path / "a" / "model.json").read_bytes() != (tmp_path / "b" / "model.json").read_bytes()

    def test_command_adapter_matches_builtin(self, tmp_path):
        """A built-in wrapped as an external command reproduces the built-in run exactly."""
        main(["sobol", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "a")])
        wrapped = with_(SMALL, functions=[{"command": ADAPTER}],
                        inputs={"lower": [-np.pi] * 3, "upper": [np.pi] * 3, "names": ["x1", "x2", "x3"]})
        main(["sobol", "--config", write(tmp_path, wrapped, "w.json"), "--out", str(tmp_path / "b")])
        a, b = read_dir(tmp_path / "a"), read_dir(tmp_path / "b")
        for name in a:
            if name != "manifest.json":
                assert a[name] == b[name], name

    def test_balance_and_summary(self, tmp_path, capsys):
        data = with_(SMALL, analysis={"subsets": [[2]], "balance": {"m0": 50, "m_max": 100, "n_paths": 3,
                                                                      "n_boot": 3}})
        assert main(["balance", "--config", write(tmp_path, data), "--out", str(tmp_path / "o")]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["balance"][0]["m"] in (50, 100)
        assert (tmp_path / "o" / "budget_u2.csv").exists()
        assert "u=[2]: m=" in capsys.readouterr().out

    def test_mf_sobol(self, tmp_path):
        data = with_(DEMO_TANK, design={"sizes": [30, 10], "lhs_iterations": 10},
                     analysis={"subsets": [[4]], "m": 200, "n_paths": 4, "n_boot": 3, "test_size": 50,
                               "first_approach": True})
        assert main(["mf-sobol", "--config", write(tmp_path, data), "--out", str(tmp_path / "o")]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert [lvl["level"] for lvl in summary["indices"][0]["levels"]] == [1, 2]
        assert "rho" in summary["fit"]["levels"][1]
        assert (tmp_path / "o" / "index_level2_u4.csv").exists()


@pytest.mark.slow
class TestDemos:
    @pytest.mark.parametrize("name", ["demo-ishigami", "demo-tank"])
    def test_demo_runs(self, name, tmp_path):
        assert main([name, "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["fit"]["test_efficiency"] > 0.9
