import copy
import csv
import io
import json
from importlib import resources

import numpy as np
import pytest

from qmeaudit import cli
from qmeaudit.config import load_config, parse_config
from qmeaudit.errors import ConfigError
from qmeaudit.experiments import run_sweep

CONFIGS = resources.files("qmeaudit") / "configs"


def _tree(name):
    return json.loads((CONFIGS / f"{name}.json").read_text())


def _write(tmp_path, tree, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(tree))
    return str(path)


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _rows(text):
    body = "".join(line for line in text.splitlines(keepends=True) if not line.startswith("# "))
    return list(csv.DictReader(io.StringIO(body)))


class TestConfig:
    def test_shipped_configs_parse(self):
        names = [p.name[:-5] for p in CONFIGS.iterdir() if p.name.endswith(".json")]
        assert len(names) == 14
        for name in names:
            cfg = parse_config(_tree(name))
            assert cfg.n_sites == len(cfg.fields)

    def test_missing_beta_names_path(self):
        tree = _tree("conditions")
        del tree["baths"][0]["beta"]
        with pytest.raises(ConfigError) as info:
            parse_config(tree)
        assert "baths[0].beta" in str(info.value)

    @pytest.mark.parametrize("mutate, path", [
        (lambda t: t["baths"][1].update(mu=0.2), "baths[1].mu"),
        (lambda t: t.update(qme=["RE", "XYZ"]), "qme"),
        (lambda t: t["system"].update(fields=[1, 1]), "system.fields"),
        (lambda t: t.update(epsilon=-0.1), "epsilon"),
    ])
    def test_invalid_values(self, mutate, path):
        tree = _tree("conditions")
        mutate(tree)
        with pytest.raises(ConfigError) as info:
            parse_config(tree)
        assert path in str(info.value)

    def test_grid_spec(self):
        cfg = parse_config(_tree("graded_eq_current_eps"))
        assert cfg.sweep.variable == "epsilon"
        np.testing.assert_allclose(cfg.sweep.grid, np.geomspace(0.01, 0.1, 8))
        cfg = parse_config(_tree("uniform_eq_thermal_g"))
        np.testing.assert_allclose(cfg.sweep.grid, np.linspace(0.05, 1.0, 20))

    def test_hash_and_overrides(self, tmp_path):
        tree = _tree("conditions")
        a = load_config(_write(tmp_path, tree))
        b = load_config(_write(tmp_path, tree, "other.json"), {"qme": ["re", "ule"], "seed": None})
        assert a.config_hash() == parse_config(copy.deepcopy(tree)).config_hash()
        assert list(b.qme) == ["RE", "ULE"]
        assert a.config_hash() != b.config_hash()

    def test_weak_coupling_flag(self):
        tree = _tree("conditions")
        assert not parse_config(tree).weak_coupling_warning
        tree["epsilon"] = 0.5
        assert parse_config(tree).weak_coupling_warning


class TestCli:
    def test_missing_beta_exit_code(self, tmp_path, capsys):
        tree = _tree("conditions")
        del tree["baths"][0]["beta"]
        code, _, err = _run(["ness", "--config", _write(tmp_path, tree)], capsys)
        assert code == 2
        assert "baths[0].beta" in err

    def test_qubit_ness(self, capsys):
        code, out, _ = _run(["ness", "--config", str(CONFIGS / "qubit.json")], capsys)
        assert code == 0
        rows = _rows(out)
        assert [r["qme"] for r in rows] == ["RE", "LLE", "ELE", "ULE"]
        for r in rows:
            assert float(r["p_1"]) / float(r["p_0"]) == pytest.approx(np.exp(-1.5), rel=1e-8)

    def test_equilibrium_ele_thermalizes(self, tmp_path, capsys):
        tree = _tree("uniform_eq_thermal_g")
        del tree["sweep"]
        tree["qme"] = ["ELE"]
        code, out, _ = _run(["ness", "--config", _write(tmp_path, tree)], capsys)
        assert code == 0
        assert float(_rows(out)[0]["thermal_distance"]) < 1e-8

    @pytest.mark.parametrize("name", ["conditions", "qubit"])
    def test_check_matches_pattern(self, name, capsys):
        code, out, err = _run(["check", "--config", str(CONFIGS / f"{name}.json")], capsys)
        assert code == 0
        assert err.rstrip().endswith("OK")
        assert all(r["match"] == "1" for r in _rows(out))

    def test_check_reports_mismatch(self, tmp_path, capsys):
        tree = _tree("conditions")
        tree["expected"] = {"RE": {"complete_positivity": "pass"}}
        code, _, err = _run(["check", "--config", _write(tmp_path, tree)], capsys)
        assert code == 1
        assert "MISMATCH" in err

    def test_weak_coupling_warning(self, tmp_path, capsys, caplog):
        tree = _tree("qubit")
        tree["epsilon"] = 0.5
        tree["qme"] = ["RE"]
        code, _, _ = _run(["ness", "--config", _write(tmp_path, tree)], capsys)
        assert code == 0
        assert "weak-coupling regime questionable" in caplog.text

    def test_sweep_requires_block(self, capsys):
        code, _, err = _run(["sweep", "--config", str(CONFIGS / "qubit.json")], capsys)
        assert code == 2
        assert "sweep" in err

    def test_validate_round_trip(self, tmp_path, capsys):
        out = tmp_path / "ness.csv"
        assert cli.main(["ness", "--config", str(CONFIGS / "qubit.json"), "--out", str(out)]) == 0
        capsys.readouterr()
        assert cli.main(["validate", str(out)]) == 0
        stripped = tmp_path / "stripped.csv"
        stripped.write_text("".join(l for l in out.read_text().splitlines(keepends=True) if not l.startswith("#")))
        code, _, err = _run(["validate", str(stripped)], capsys)
        assert code == 1
        assert "missing provenance field" in err
        edited = tmp_path / "edited.csv"
        edited.write_text(out.read_text().replace("RE,", "XX,", 1))
        code, _, err = _run(["validate", str(edited)], capsys)
        assert code == 1 and "hash" in err


class TestSweepOutput:
    @pytest.fixture
    def small_g_sweep(self, tmp_path):
        tree = _tree("uniform_neq_current_g")
        tree["qme"] = ["RE", "ULE"]
        tree["sweep"]["grid"] = [0.2, 0.4, 0.6]
        return _write(tmp_path, tree)

    def test_columns(self, small_g_sweep, capsys):
        code, out, _ = _run(["sweep", "--config", small_g_sweep], capsys)
        assert code == 0
        rows = _rows(out)
        assert len(rows) == 6
        assert {"row_type", "g", "I_1", "I_2", "IB_L", "IB_R", "sz_1", "sz_3"} <= set(rows[0])
        assert [float(r["g"]) for r in rows if r["qme"] == "RE"] == [0.2, 0.4, 0.6]
        for r in rows:
            if r["qme"] == "RE":
                assert float(r["I_1"]) == pytest.approx(float(r["IB_R"]), rel=1e-8)

    def test_byte_identical_and_worker_independent(self, small_g_sweep, tmp_path, monkeypatch):
        paths = []
        for workers, name in (("1", "a.csv"), ("1", "b.csv"), ("2", "c.csv")):
            monkeypatch.setenv("QMEAUDIT_WORKERS", workers)
            path = tmp_path / name
            assert cli.main(["sweep", "--config", small_g_sweep, "--out", str(path)]) == 0
            paths.append(path.read_bytes())
        assert paths[0] == paths[1] == paths[2]

    def test_eps_sweep_slope_rows(self, tmp_path, capsys):
        tree = _tree("uniform_neq_mismatch_eps")
        tree["qme"] = ["RE"]
        code, out, _ = _run(["sweep", "--config", _write(tmp_path, tree)], capsys)
        assert code == 0
        rows = _rows(out)
        slope = next(r for r in rows if r["row_type"] == "slope")
        assert float(slope["I_1"]) == pytest.approx(2.0, abs=0.05)
        assert sum(r["row_type"] == "point" for r in rows) == 8


class TestEvolveCli:
    def test_trace_column(self, tmp_path, capsys):
        tree = _tree("conditions")
        tree["qme"] = ["ULE"]
        tree["evolve"] = {"initial": "superposition", "t_grid": [0, 5, 10, 20]}
        code, out, _ = _run(["evolve", "--config", _write(tmp_path, tree)], capsys)
        assert code == 0
        rows = _rows(out)
        assert len(rows) == 4
        for r in rows:
            assert float(r["trace"]) == pytest.approx(1.0, abs=1e-10)
            assert float(r["min_eigenvalue"]) > -1e-10


def test_g_sweep_redfield_bond_current_matches_ule_boundary_current():
    cfg = load_config(CONFIGS / "uniform_neq_current_g.json", {"qme": ["RE", "ULE"]})
    rows = run_sweep(cfg).as_dicts()
    re_rows = {r["g"]: r for r in rows if r["qme"] == "RE"}
    devs = [abs(abs(re_rows[r["g"]]["I_1"]) - abs(r["IB_L"])) / abs(re_rows[r["g"]]["I_1"])
            for r in rows if r["qme"] == "ULE"]
    print(f"max relative deviation |I_1^RE| vs |IB_L^ULE| over the g grid: {max(devs):.3e}")
    assert max(devs) < 1e-6
