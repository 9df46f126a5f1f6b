"""
Command line front end: ``robustmimo {sweep,solve,duality-check}``.

Configuration files are YAML with two optional sections::

    system:
      N: 4
      K: 2
      M: [2, 2]
      S: [2, 2]
      P_max: 10
      tau: [1, 1]
      eta: [0.3, 0.3]
      rho_b: 0.25
      rho_m: 0.0
      sigma_e2: [0.0101, 0.0204]
    sweep:
      snr_db: [0, 5, 10, 15, 20, 25]
      trials: 100
      designs: [robust, naive, perfect]
      problem: wsum
      symbols_per_trial: 40000
      master_seed: 0

Missing keys take the defaults shown. Numbers may use scientific notation
(``1e-3``).
"""

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from typing import List

import numpy as np
import yaml

from . import __version__
from .bench import DESIGNS, PROBLEMS, SweepPlan, aggregate, run_sweep
from .errors import ConfigError, RobustMimoError
from .model import SystemConfig, sample_instance

__all__ = ["parse_config", "render_config", "emit_results", "RunManifest", "main"]

_SYSTEM_KEYS = {
    "N": "int", "K": "int", "M": "intlist", "S": "intlist", "P_max": "float",
    "tau": "floatlist", "eta": "floatlist", "rho_b": "float", "rho_m": "float",
    "sigma_e2": "floatlist",
}
_SWEEP_KEYS = {
    "snr_db": "floatlist", "trials": "int", "designs": "strlist", "problem": "str",
    "symbols_per_trial": "int", "master_seed": "int", "tol": "float", "max_iter": "int",
}
_SECTIONS = {"system": _SYSTEM_KEYS, "sweep": _SWEEP_KEYS}


@dataclass
class RunManifest:
    config_path: str
    output_dir: str
    emitted_files: List[str] = field(default_factory=list)
    wall_time: float = 0.0
    tool_version: str = __version__
    master_seed: int = 0


def _num(value, kind, where):
    try:
        if isinstance(value, bool):
            raise ValueError
        if kind == "int":
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {kind}, got {value!r}") from None


def _convert(value, kind, where):
    if kind in ("int", "float"):
        return _num(value, kind, where)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    base = kind[:-4]
    if not isinstance(value, list):
        value = [value] if base != "str" else [v.strip() for v in str(value).split(",")]
    if base == "str":
        return [str(v) for v in value]
    return [_num(v, base, f"{where}[{i}]") for i, v in enumerate(value)]


def parse_config(text):
    """Parse YAML config text into ``(SystemConfig, SweepPlan)``.

    Raises
    ------
    ConfigError
        For syntax errors, unknown keys, wrong types or violated invariants;
        the message names the key path and its line.
    """
    try:
        root = yaml.compose(text or "")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    values = {"system": {}, "sweep": {}}
    lines = {}
    if root is not None:
        if not isinstance(root, yaml.MappingNode):
            raise ConfigError(f"line {root.start_mark.line + 1}: top level must be a mapping")
        data = yaml.safe_load(text)
        for knode, vnode in root.value:
            sec = knode.value
            line = knode.start_mark.line + 1
            if sec not in _SECTIONS:
                raise ConfigError(f"{sec} (line {line}): unknown key")
            if not isinstance(vnode, yaml.MappingNode):
                if isinstance(vnode, yaml.ScalarNode) and vnode.value in ("", "~", "null"):
                    continue
                raise ConfigError(f"{sec} (line {line}): expected a mapping")
            for kn, _ in vnode.value:
                key = kn.value
                kline = kn.start_mark.line + 1
                path = f"{sec}.{key}"
                if key not in _SECTIONS[sec]:
                    raise ConfigError(f"{path} (line {kline}): unknown key")
                lines[path] = kline
                values[sec][key] = _convert(data[sec][key], _SECTIONS[sec][key],
                                            f"{path} (line {kline})")

    sysv = dict(values["system"])
    K = sysv.get("K", 2)
    for key, default in (("M", 2), ("S", 2)):
        sysv.setdefault(key, [default] * K)
    if "K" in sysv:
        for key, default in (("tau", 1.0), ("eta", 0.3)):
            sysv.setdefault(key, [default] * K)
        if "sigma_e2" not in sysv and K != 2:
            raise ConfigError("system.sigma_e2: required when K != 2")
    try:
        cfg = SystemConfig(**sysv)
    except (ValueError, TypeError) as exc:
        raise ConfigError(_locate(str(exc), "system", lines)) from None
    try:
        plan = SweepPlan(**values["sweep"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(_locate(str(exc), "sweep", lines)) from None
    return cfg, plan


def _locate(msg, section, lines):
    for path, line in lines.items():
        sec, key = path.split(".")
        if sec == section and key in msg:
            return f"{path} (line {line}): {msg}"
    return f"{section}: {msg}"


def render_config(cfg, plan):
    """YAML text that `parse_config` maps back to ``(cfg, plan)``."""
    system = {
        "N": cfg.N, "K": cfg.K, "M": list(cfg.M), "S": list(cfg.S), "P_max": cfg.P_max,
        "tau": list(cfg.tau), "eta": list(cfg.eta), "rho_b": cfg.rho_b, "rho_m": cfg.rho_m,
        "sigma_e2": list(cfg.sigma_e2),
    }
    sweep = {
        "snr_db": list(plan.snr_db), "trials": int(plan.trials), "designs": list(plan.designs),
        "problem": plan.problem, "symbols_per_trial": int(plan.symbols_per_trial),
        "master_seed": int(plan.master_seed), "tol": plan.tol, "max_iter": int(plan.max_iter),
    }
    return yaml.safe_dump({"system": system, "sweep": sweep}, sort_keys=False)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def records_csv(records):
    """CSV text of the per-trial records."""
    K = max(len(r.per_user_amse) for r in records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "snr_db", "design", "problem", "sum_amse", "max_weighted_amse",
                "aser", "iterations", "converged"] + [f"user_amse_{k + 1}" for k in range(K)])
    for r in records:
        w.writerow([r.trial_id, _fmt(r.snr_db), r.design, r.problem, _fmt(r.sum_amse),
                    _fmt(r.max_weighted_amse), _fmt(r.aser), r.iterations,
                    _fmt(r.converged)] + [_fmt(v) for v in r.per_user_amse])
    return buf.getvalue()


def _as_written(r):
    # aggregate exactly the values that appear in the CSV
    def rnd(x):
        return float(_fmt(x))
    return replace(r, sum_amse=rnd(r.sum_amse), max_weighted_amse=rnd(r.max_weighted_amse),
                   aser=rnd(r.aser), per_user_amse=[rnd(v) for v in r.per_user_amse])


def summary(records):
    """Mean and standard error per ``(metric, snr, design)`` of the CSV values."""
    records = [_as_written(r) for r in records]
    out = []
    for metric in ("sum_amse", "max_weighted_amse", "aser"):
        for (snr, design), st in aggregate(records, metric).items():
            out.append({"metric": metric, "snr_db": snr, "design": design, **st})
    return out


PLOT_SCRIPT = '''"""Plot sum AMSE and ASER against SNR from results.csv."""
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "results.csv")
data = defaultdict(lambda: defaultdict(list))
with open(path, newline="") as fh:
    for row in csv.DictReader(fh):
        for metric in ("sum_amse", "aser"):
            v = float(row[metric])
            if v == v:
                data[(metric, row["design"])][float(row["snr_db"])].append(v)

labels = {"robust": "Ro", "naive": "Na", "perfect": "Pe"}
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, metric, ylabel in zip(axes, ("sum_amse", "aser"), ("sum AMSE", "ASER")):
    for (m, design), series in sorted(data.items()):
        if m != metric:
            continue
        snr = sorted(series)
        ax.semilogy(snr, [sum(series[s]) / len(series[s]) for s in snr], marker="o",
                    label=labels.get(design, design))
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "results.png"), dpi=120)
'''


def emit_results(records, output_dir, config_path="", master_seed=0, started=None):
    """Write ``results.csv``, ``summary.json``, ``plot_results.py`` and,
    last, ``manifest.json`` into `output_dir`."""
    if not records:
        raise ValueError("no records to emit")
    os.makedirs(output_dir, exist_ok=True)
    if not os.access(output_dir, os.W_OK):
        raise OSError(f"output directory {output_dir!r} is not writable")
    emitted = []

    def write(name, text):
        path = os.path.join(output_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        emitted.append(name)

    write("results.csv", records_csv(records))
    write("summary.json", json.dumps(summary(records), indent=2, allow_nan=True) + "\n")
    write("plot_results.py", PLOT_SCRIPT)
    man = RunManifest(config_path or "", os.path.abspath(output_dir), list(emitted),
                      0.0 if started is None else time.time() - started,
                      __version__, int(master_seed))
    man.emitted_files.append("manifest.json")
    write("manifest.json", json.dumps(asdict(man), indent=2) + "\n")
    return man


def _load(args):
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    cfg, plan = parse_config(text)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "problem", None):
        changes["problem"] = args.problem
    if getattr(args, "designs", None):
        changes["designs"] = [d.strip() for d in args.designs.split(",") if d.strip()]
    if changes:
        try:
            plan = SweepPlan(**{**asdict(plan), **changes})
        except ValueError as exc:
            raise ConfigError(f"command line: {exc}") from None
    return cfg, plan


def _cmd_sweep(args):
    started = time.time()
    cfg, plan = _load(args)
    records = run_sweep(cfg, plan, jobs=args.jobs)
    if all(r.error for r in records):
        print("error: every trial failed", file=sys.stderr)
        return 3
    man = emit_results(records, args.out, args.config or "", plan.master_seed, started)
    for (snr, design), st in aggregate(records).items():
        print(f"snr={snr:6.1f} dB  {design:8s} sum AMSE {st['mean']:.6f} +- {st['stderr']:.6f}")
    print(f"wrote {', '.join(man.emitted_files)} to {man.output_dir}")
    return 0


def _cmd_solve(args):
    from .solvers import naive_design, perfect_design, solve
    cfg, plan = _load(args)
    snr = args.snr if args.snr is not None else plan.snr_db[-1]
    cfg = cfg.with_snr(snr)
    from .model import stream
    inst = sample_instance(cfg, stream(plan.master_seed, 0, "channel"))
    design = plan.designs[0]
    fn = {"robust": solve, "naive": naive_design, "perfect": perfect_design}[design]
    tr = fn(inst, cfg, plan.problem, plan.tol, plan.max_iter)
    rep = tr.final_report
    print(f"problem={plan.problem} design={design} snr={snr} dB")
    print(f"iterations={tr.iterations} converged={tr.converged}")
    print("objective history: " + " ".join(f"{v:.10g}" for v in tr.objective_history[:: 4]))
    print(f"per-user AMSE: {' '.join(f'{v:.10g}' for v in rep.per_user_trace)}")
    print(f"sum AMSE: {rep.sum:.10g}  max weighted AMSE: {rep.max_weighted:.10g}")
    print(f"total downlink power: {tr.final.total_power():.10g}")
    return 0


def _cmd_duality(args):
    from .duality import duality_check
    worst = duality_check(args.trials, args.seed or 0)
    for name, value in worst.items():
        print(f"{name}: {value:.3e}")
    ok = worst["amse_rel_err"] <= 1e-9 and worst["power_rel_err"] <= 1e-10 and worst["min_beta"] > 0
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="robustmimo", description=__doc__.split("\n")[1])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML configuration file")
        sp.add_argument("--seed", type=int, help="master seed override")
        sp.add_argument("--problem", choices=PROBLEMS)
        sp.add_argument("--designs", help=f"comma separated subset of {','.join(DESIGNS)}")

    sw = sub.add_parser("sweep", help="run a Monte Carlo SNR sweep")
    common(sw)
    sw.add_argument("--out", default="results", help="output directory")
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=_cmd_sweep)

    so = sub.add_parser("solve", help="solve one random instance and print the trace")
    common(so)
    so.add_argument("--snr", type=float, help="SNR in dB (default: last of the sweep grid)")
    so.set_defaults(func=_cmd_solve)

    dc = sub.add_parser("duality-check", help="check power transfers on random instances")
    dc.add_argument("--trials", type=int, default=1000)
    dc.add_argument("--seed", type=int, default=0)
    dc.set_defaults(func=_cmd_duality)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RobustMimoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
