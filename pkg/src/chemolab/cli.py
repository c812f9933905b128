"""``chemolab`` command-line interface.

Commands
--------
``chemolab simulate CFG``
    Integrate one scenario and write a trajectory CSV plus a JSON summary.
``chemolab analyze CFG``
    Print a JSON stability report for the scenario's equilibria.
``chemolab sweep CFG``
    Evaluate a parameter grid and write one CSV row per point.
``chemolab verify SUITE [--seed N] [--out PATH]``
    Run a seeded property suite and print a JSON report.

Exit codes: 0 success, 1 a verification property failed, 2 malformed
configuration or unknown suite, 3 solver divergence.  Relative output paths
are resolved against the directory of the configuration file; a missing
``csv`` path defaults to the configuration file name with a ``.csv`` suffix.
``CHEMOLAB_THREADS`` caps the number of worker processes used by ``sweep``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import EquilibriumKind, classify, equilibria, linearize
from .config import ConfigError, load_scenario, load_sweep
from .dde import integrate
from .errors import ChemolabError, RootFindingError
from .models import Family, reduce_to_hyperbolic
from .suites import SUITES, run_suite
from .verification import asymptotic_state, lyapunov_V

__all__ = ["main", "stability_report", "sweep_rows", "trajectory_rows"]

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _fmt(v):
    """Shortest round-trip decimal form; empty for missing values."""
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else str(v).lower()


def _atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _resolve(cfg_path, value, suffix):
    base = Path(cfg_path).parent
    if value is None:
        return Path(cfg_path).with_suffix(suffix)
    p = Path(value)
    return p if p.is_absolute() else base / p


def _scenario_block(cfg):
    out = {"family": cfg.family.value, "dimensionless": dict(cfg.dimensionless)}
    if cfg.dimensional is not None:
        out["dimensional"] = dict(cfg.dimensional)
    return out


# -- simulate ----------------------------------------------------------------------

def output_times(traj, horizon, stride=None):
    """Stride grid on ``[0, horizon]`` merged with every breakpoint."""
    stride = horizon / 1000.0 if stride is None else stride
    n = max(int(math.ceil(horizon / stride - 1e-9)), 1)
    grid = [i * stride for i in range(n)] + [horizon]
    bps = [b for b in traj.breakpoints if 0.0 <= b <= horizon]
    return np.unique(np.array(grid + bps, dtype=float))


def trajectory_rows(traj, times):
    header = "t,x" if traj.dim == 1 else "t,s,x"
    values = traj(times)
    lines = [header]
    for t, row in zip(times, values):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def lyapunov_summary(traj, p):
    """``V`` at both ends and the least-squares slope of ``log |V|`` over ``t >= r``.

    Points where ``|V|`` has fallen below ``1e-6 |V(r)|`` are left out of the
    fit because they sit at the integration noise floor.
    """
    T = traj.t_end
    v0, vT = (float(v) for v in lyapunov_V(traj, p, np.array([0.0, T])))
    rate = None
    if p.r < T:
        ts = np.linspace(p.r, T, 1001)
        vs = np.abs(lyapunov_V(traj, p, ts))
        keep = vs >= max(1e-6 * vs[0], 1e-12)
        if np.count_nonzero(keep) >= 10:
            rate = float(np.polyfit(ts[keep], np.log(vs[keep]), 1)[0])
    return {"V0": v0, "V_horizon": vT, "decay_rate": rate}


def cmd_simulate(path):
    cfg = load_scenario(path)
    model = cfg.model()
    phi = cfg.initial_history(model)
    traj = integrate(model, phi, cfg.horizon, cfg.options)
    times = output_times(traj, cfg.horizon, cfg.stride)
    csv_path = _resolve(path, cfg.csv, ".csv")
    summary_path = _resolve(path, cfg.summary, ".summary.json")
    summary = {
        "scenario": _scenario_block(cfg),
        "horizon": cfg.horizon,
        "rows": int(times.size),
        "steps_accepted": traj.n_accepted,
        "steps_rejected": traj.n_rejected,
        "final_state": [float(v) for v in traj(cfg.horizon)],
        "csv": csv_path.name,
    }
    if model.family is Family.CHEMOSTAT:
        summary["lyapunov"] = lyapunov_summary(traj, model.params)
    _atomic_write(csv_path, trajectory_rows(traj, times))
    _atomic_write(summary_path, _dumps(summary))
    return EXIT_OK


# -- analyze -----------------------------------------------------------------------

def _describe(report):
    stable = report.stable
    if stable is None:
        return "critical (case D), linearisation inconclusive"
    return "locally stable" if stable else "locally unstable"


def stability_report(model):
    """Equilibria with their linearisation, case, critical delay and leading root.

    The chemostat is analysed through its hyperbolic factor.
    """
    target = reduce_to_hyperbolic(model.params) if model.family is Family.CHEMOSTAT else model
    full = {eq.kind: eq for eq in equilibria(model)}
    entries = []
    phrases = []
    for eq in equilibria(target):
        lin = linearize(target, eq)
        rep = classify(lin)
        behaviour = _describe(rep)
        root = rep.leading_root
        entries.append({
            "kind": eq.kind.value,
            "state": [float(v) for v in full[eq.kind].value],
            "linearization": {"a_lin": lin.a_lin, "b_lin": lin.b_lin, "delay": lin.delay_r},
            "case": rep.case.value,
            "critical_delay": rep.critical_delay,
            "omega": rep.omega,
            "leading_root": {"re": root.real, "im": root.imag},
            "behaviour": behaviour,
        })
        phrases.append(f"{eq.kind.value} {behaviour}")
    if len(entries) == 1:
        phrases = [f"{entries[0]['kind']} unique, {entries[0]['behaviour']}"]
    out = {
        "delay": model.delay,
        "equilibria": entries,
        "prediction": "; ".join(phrases),
    }
    if model.family is Family.CHEMOSTAT:
        out["analysed_as"] = Family.HYPERBOLIC.value
    return out


def cmd_analyze(path):
    cfg = load_scenario(path)
    report = {"scenario": _scenario_block(cfg)}
    report.update(stability_report(cfg.model()))
    sys.stdout.write(_dumps(report))
    return EXIT_OK


# -- sweep -------------------------------------------------------------------------

def _leading_re(model):
    target = reduce_to_hyperbolic(model.params) if model.family is Family.CHEMOSTAT else model
    eqs = {eq.kind: eq for eq in equilibria(target)}
    eq = eqs.get(EquilibriumKind.SURVIVAL, eqs.get(EquilibriumKind.WASHOUT))
    return classify(linearize(target, eq)).leading_root.real


def _sweep_point(job):
    sweep, value = job
    cfg = sweep.base.with_parameter(sweep.parameter, value)
    model = cfg.model()
    row = {"value": value, "verdict": "", "amplitude": None, "period": None, "re": None}
    try:
        row["re"] = _leading_re(model)
    except RootFindingError:
        pass
    if sweep.verdict:
        kwargs = {"opts": cfg.solver}
        if sweep.horizon is not None:
            kwargs["horizon"] = sweep.horizon
        if sweep.max_horizon is not None:
            kwargs["max_horizon"] = sweep.max_horizon
        try:
            v = asymptotic_state(model, cfg.initial_history(model), **kwargs)
        except ArithmeticError:
            row["verdict"] = "diverged"
        except ValueError as exc:
            row["verdict"] = "error: " + str(exc).replace(",", ";")
        else:
            row.update(verdict=v.state.value, amplitude=v.amplitude, period=v.period)
    return row


def sweep_rows(sweep, workers=1):
    jobs = [(sweep, v) for v in sweep.values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    lines = [f"{sweep.parameter},verdict,amplitude,period,leading_root_re"]
    for r in rows:
        lines.append(",".join([_fmt(r["value"]), r["verdict"], _fmt(r["amplitude"]),
                               _fmt(r["period"]), _fmt(r["re"])]))
    return "\n".join(lines) + "\n"


def _threads():
    raw = os.environ.get("CHEMOLAB_THREADS", "1").strip()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("CHEMOLAB_THREADS", f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("CHEMOLAB_THREADS", f"expected a positive integer, got {raw!r}")
    return n


def cmd_sweep(path):
    sweep = load_sweep(path)
    workers = _threads()
    text = sweep_rows(sweep, workers)
    _atomic_write(_resolve(path, sweep.base.csv, ".csv"), text)
    return EXIT_OK


# -- verify ------------------------------------------------------------------------

def cmd_verify(suite, seed, out=None):
    if suite not in SUITES + ("all",):
        raise ConfigError("suite", f"unknown suite {suite!r}; choose from "
                          + ", ".join(SUITES + ("all",)))
    report = run_suite(suite, seed)
    text = _dumps(report.to_dict())
    if out is not None:
        _atomic_write(out, text)
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_FAILED


# -- entry point -------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="chemolab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "integrate a scenario to CSV"),
                       ("analyze", "print a stability report"),
                       ("sweep", "run a parameter sweep to CSV")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="TOML configuration file")
    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", help="one of " + ", ".join(SUITES + ("all",)))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the JSON report here")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.seed, args.out)
        return {"simulate": cmd_simulate, "analyze": cmd_analyze,
                "sweep": cmd_sweep}[args.command](args.config)
    except ConfigError as exc:
        print(f"chemolab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"chemolab: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ChemolabError as exc:
        print(f"chemolab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
