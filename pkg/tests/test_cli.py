import json
import math
import subprocess
import sys
import textwrap

import pytest

from chemolab import cli
from chemolab.config import ConfigError, load_scenario, load_sweep, parse_scenario


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


WRIGHT = """
    [model]
    family = "wright"
    [model.dimensionless]
    rho = 1.0
    [history]
    constant = 0.5
    [run]
    horizon = 200.0
"""

DECAY = """
    [model]
    family = "linear"
    [model.dimensionless]
    p = -1.0
    q = 0.0
    r = 1.0
    [history]
    constant = 1.0
    [run]
    horizon = 2.0
    stride = 0.01
    [output]
    csv = "out/decay.csv"
"""

CHEMOSTAT = """
    [model]
    family = "chemostat"
    [model.dimensional]
    C = 2.0
    D = 0.5
    A = 1.0
    B = 0.25
    M = 3.0
    R = 2.0
    [history]
    polynomial = [[0.5, 0.4], [0.1, -0.05]]
    [run]
    horizon = 20.0
"""


class TestConfig:
    def test_dimensional_block_is_derived(self, tmp_path):
        cfg = load_scenario(write(tmp_path, "c.toml", CHEMOSTAT))
        assert cfg.dimensionless == {"a": 4.0, "b": 0.5, "m": 3.0, "r": 1.0}
        assert cfg.model().delay == 1.0

    def test_both_blocks_rejected(self):
        doc = {"model": {"family": "hutchinson", "dimensionless": {"a": 1, "m": 2, "r": 1},
                         "dimensional": {}},
               "history": {"constant": 1.0}, "run": {"horizon": 1.0}}
        with pytest.raises(ConfigError, match="exactly one"):
            parse_scenario(doc)

    def test_missing_parameter_named(self):
        doc = {"model": {"family": "hutchinson", "dimensionless": {"a": 1, "r": 1}},
               "history": {"constant": 1.0}, "run": {"horizon": 1.0}}
        with pytest.raises(ConfigError) as info:
            parse_scenario(doc)
        assert info.value.where == "model.dimensionless.m"

    def test_history_shape(self):
        doc = {"model": {"family": "chemostat",
                         "dimensionless": {"a": 3, "b": 0.5, "m": 2, "r": 0.5}},
               "history": {"constant": 1.0}, "run": {"horizon": 1.0}}
        with pytest.raises(ConfigError, match="history.constant"):
            parse_scenario(doc)

    def test_unknown_key(self):
        doc = {"model": {"family": "wright", "dimensionless": {"rho": 1.0}},
               "history": {"constant": 0.5}, "run": {"horizon": 1.0, "horizn": 2.0}}
        with pytest.raises(ConfigError, match="horizn"):
            parse_scenario(doc)

    def test_toml_syntax_reports_line(self, tmp_path):
        path = write(tmp_path, "bad.toml", "[model]\nfamily = \n")
        with pytest.raises(ConfigError, match="line 2"):
            load_scenario(path)

    def test_sweep_needs_two_points(self, tmp_path):
        path = write(tmp_path, "s.toml", WRIGHT + """
            [sweep]
            parameter = "rho"
            values = [1.0]
        """)
        with pytest.raises(ConfigError, match="at least 2"):
            load_sweep(path)

    def test_sweep_parameter_must_exist(self, tmp_path):
        path = write(tmp_path, "s.toml", WRIGHT + """
            [sweep]
            parameter = "a"
            values = [1.0, 2.0]
        """)
        with pytest.raises(ConfigError, match="sweep.parameter"):
            load_sweep(path)

    def test_sweep_grid(self, tmp_path):
        path = write(tmp_path, "s.toml", WRIGHT + """
            [sweep]
            parameter = "rho"
            min = 1.0
            max = 2.2
            count = 13
        """)
        sw = load_sweep(path)
        assert sw.values[4] == 1.4 and len(sw.values) == 13


class TestSimulate:
    def test_wright_converges(self, tmp_path):
        path = write(tmp_path, "w.toml", WRIGHT)
        assert cli.main(["simulate", str(path)]) == 0
        header, rows = read_csv(tmp_path / "w.csv")
        assert header == ["t", "x"]
        assert float(rows[-1][0]) == 200.0
        assert abs(float(rows[-1][1])) < 1e-4
        assert len(rows) == 1001
        summary = json.loads((tmp_path / "w.summary.json").read_text())
        assert summary["rows"] == 1001

    def test_decay_row_at_one(self, tmp_path):
        path = write(tmp_path, "d.toml", DECAY)
        assert cli.main(["simulate", str(path)]) == 0
        _, rows = read_csv(tmp_path / "out" / "decay.csv")
        row = {r[0]: float(r[1]) for r in rows}
        assert row["1.0"] == pytest.approx(0.3678794, abs=1e-7)

    def test_floats_round_trip(self, tmp_path):
        path = write(tmp_path, "d.toml", DECAY)
        cli.main(["simulate", str(path)])
        _, rows = read_csv(tmp_path / "out" / "decay.csv")
        for t, x in rows:
            assert repr(float(x)) == x and repr(float(t)) == t

    def test_breakpoints_forced(self, tmp_path):
        path = write(tmp_path, "h.toml", """
            [model]
            family = "hutchinson"
            [model.dimensionless]
            a = 1.0
            m = 2.0
            r = 0.7
            [history]
            constant = 0.5
            [run]
            horizon = 5.0
            stride = 0.3
        """)
        assert cli.main(["simulate", str(path)]) == 0
        _, rows = read_csv(tmp_path / "h.csv")
        times = [float(r[0]) for r in rows]
        for k in range(8):
            assert any(abs(t - 0.7 * k) < 1e-12 for t in times)
        assert times == sorted(times)

    def test_chemostat_summary(self, tmp_path):
        path = write(tmp_path, "c.toml", CHEMOSTAT)
        assert cli.main(["simulate", str(path)]) == 0
        header, _ = read_csv(tmp_path / "c.csv")
        assert header == ["t", "s", "x"]
        summary = json.loads((tmp_path / "c.summary.json").read_text())
        lyap = summary["lyapunov"]
        assert lyap["decay_rate"] == pytest.approx(-1.0, abs=1e-3)
        assert abs(lyap["V_horizon"]) < abs(lyap["V0"])
        assert summary["scenario"]["dimensionless"] == {"a": 4.0, "b": 0.5, "m": 3.0, "r": 1.0}
        assert summary["scenario"]["dimensional"]["C"] == 2.0

    def test_deterministic(self, tmp_path):
        path = write(tmp_path, "c.toml", CHEMOSTAT)
        cli.main(["simulate", str(path)])
        first = (tmp_path / "c.csv").read_bytes()
        cli.main(["simulate", str(path)])
        assert (tmp_path / "c.csv").read_bytes() == first

    def test_divergence_exit_and_no_csv(self, tmp_path, capsys):
        path = write(tmp_path, "x.toml", DECAY.replace("p = -1.0", "p = 800.0")
                     .replace("horizon = 2.0", "horizon = 10.0"))
        assert cli.main(["simulate", str(path)]) == 3
        assert "diverged" in capsys.readouterr().err
        out = tmp_path / "out"
        assert not out.exists() or list(out.iterdir()) == []

    def test_malformed_config(self, tmp_path, capsys):
        path = write(tmp_path, "x.toml", WRIGHT.replace("rho = 1.0", "rho = -1.0"))
        assert cli.main(["simulate", str(path)]) == 2
        assert "model.dimensionless.rho" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["simulate", str(tmp_path / "none.toml")]) == 2


class TestAnalyze:
    def run(self, tmp_path, capsys, text):
        path = write(tmp_path, "a.toml", text)
        assert cli.main(["analyze", str(path)]) == 0
        return json.loads(capsys.readouterr().out)

    def test_hutchinson_case_c(self, tmp_path, capsys):
        rep = self.run(tmp_path, capsys, """
            [model]
            family = "hutchinson"
            [model.dimensionless]
            a = 1.0
            m = 2.0
            r = 1.0
            [history]
            constant = 0.5
            [run]
            horizon = 10.0
        """)
        surv = rep["equilibria"][1]
        assert surv["kind"] == "survival" and surv["case"] == "C"
        assert surv["critical_delay"] == pytest.approx(math.pi / 2, abs=1e-12)
        assert surv["behaviour"] == "locally stable"
        assert surv["leading_root"]["re"] < 0

    def test_hyperbolic_washout_unique(self, tmp_path, capsys):
        rep = self.run(tmp_path, capsys, """
            [model]
            family = "hyperbolic"
            [model.dimensionless]
            a = 1.0
            b = 0.5
            m = 1.0
            r = 0.5
            [history]
            constant = 0.1
            [run]
            horizon = 10.0
        """)
        assert rep["prediction"] == "washout unique, locally stable"

    def test_chemo_logistic_no_delay(self, tmp_path, capsys):
        rep = self.run(tmp_path, capsys, """
            [model]
            family = "chemo_logistic"
            [model.dimensionless]
            a = 2.0
            m = 2.0
            r = 0.0
            [history]
            constant = 0.1
            [run]
            horizon = 10.0
        """)
        surv = rep["equilibria"][1]
        assert surv["state"] == [1.5]
        lin = surv["linearization"]
        assert surv["leading_root"]["re"] == pytest.approx(lin["a_lin"] + lin["b_lin"])
        assert surv["leading_root"]["re"] < 0

    def test_chemostat_via_hyperbolic(self, tmp_path, capsys):
        rep = self.run(tmp_path, capsys, CHEMOSTAT)
        assert rep["analysed_as"] == "hyperbolic"
        assert len(rep["equilibria"][0]["state"]) == 2


class TestSweep:
    def test_wright_flip(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CHEMOLAB_THREADS", "2")
        path = write(tmp_path, "s.toml", WRIGHT + """
            [sweep]
            parameter = "rho"
            min = 1.0
            max = 2.2
            count = 13
        """)
        assert cli.main(["sweep", str(path)]) == 0
        header, rows = read_csv(tmp_path / "s.csv")
        assert header == ["rho", "verdict", "amplitude", "period", "leading_root_re"]
        rhos = [float(r[0]) for r in rows]
        assert rhos == sorted(rhos) and len(rows) == 13
        verdicts = [r[1] for r in rows]
        flip = verdicts.index("periodic")
        assert set(verdicts[:flip]) == {"survival"} and set(verdicts[flip:]) == {"periodic"}
        assert rhos[flip - 1] < math.pi / 2 < rhos[flip]

    def test_hutchinson_root_crossing(self, tmp_path):
        path = write(tmp_path, "s.toml", """
            [model]
            family = "hutchinson"
            [model.dimensionless]
            a = 1.0
            m = 3.0
            r = 0.5
            [history]
            constant = 1.0
            [run]
            horizon = 10.0
            [sweep]
            parameter = "r"
            min = 0.5
            max = 1.1
            count = 7
            verdict = false
        """)
        assert cli.main(["sweep", str(path)]) == 0
        _, rows = read_csv(tmp_path / "s.csv")
        pts = [(float(r[0]), float(r[4])) for r in rows]
        for (r0, re0), (r1, re1) in zip(pts, pts[1:]):
            if re0 < 0 <= re1:
                assert r0 < math.pi / 4 <= r1
                break
        else:
            pytest.fail("no sign change of the leading root")

    def test_two_points_serial_equals_parallel(self, tmp_path, monkeypatch):
        path = write(tmp_path, "s.toml", WRIGHT + """
            [sweep]
            parameter = "rho"
            values = [0.5, 2.0]
        """)
        monkeypatch.setenv("CHEMOLAB_THREADS", "1")
        assert cli.main(["sweep", str(path)]) == 0
        serial = (tmp_path / "s.csv").read_bytes()
        monkeypatch.setenv("CHEMOLAB_THREADS", "2")
        assert cli.main(["sweep", str(path)]) == 0
        assert (tmp_path / "s.csv").read_bytes() == serial
        assert len(serial.decode().splitlines()) == 3

    def test_divergence_recorded_in_row(self, tmp_path):
        path = write(tmp_path, "s.toml", DECAY + """
            [sweep]
            parameter = "p"
            values = [-1.0, 800.0]
        """)
        assert cli.main(["sweep", str(path)]) == 0
        _, rows = read_csv(tmp_path / "out" / "decay.csv")
        assert rows[0][1] == "washout" and rows[1][1] == "diverged"

    def test_bad_thread_count(self, tmp_path, monkeypatch):
        path = write(tmp_path, "s.toml", WRIGHT + """
            [sweep]
            parameter = "rho"
            values = [0.5, 1.0]
        """)
        monkeypatch.setenv("CHEMOLAB_THREADS", "zero")
        assert cli.main(["sweep", str(path)]) == 2


class TestVerify:
    def test_unknown_suite(self, capsys):
        assert cli.main(["verify", "nope"]) == 2
        assert "unknown suite" in capsys.readouterr().err

    def test_lyapunov(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        assert cli.main(["verify", "lyapunov", "--seed", "1", "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert out.read_text() == printed
        report = json.loads(printed)
        (prop,) = report["properties"]
        assert (prop["n_pass"], prop["n_total"]) == (50, 50)
        assert report["seed"] == 1

    def test_monotone(self, capsys):
        assert cli.main(["verify", "monotone", "--seed", "1"]) == 0
        props = {p["name"]: p for p in json.loads(capsys.readouterr().out)["properties"]}
        assert props["order_preserved_hyperbolic"]["n_pass"] == 100
        assert props["order_violated_hutchinson"]["passed"]

    def test_wright(self, capsys):
        assert cli.main(["verify", "wright", "--seed", "1"]) == 0
        props = {p["name"]: p for p in json.loads(capsys.readouterr().out)["properties"]}
        assert set(props["wright_survival"]["detail"].values()) == {"survival"}
        assert {v["state"] for v in props["wright_periodic"]["detail"].values()} == {"periodic"}

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "chemolab", "verify", "nope"],
                              capture_output=True, text=True)
        assert proc.returncode == 2
