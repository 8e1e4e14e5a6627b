"""Command-line front end.

Subcommands
-----------
fit, sobol, balance
    Single-fidelity kriging: fit only; fit then sample index distributions;
    fit then search the balanced Monte-Carlo size ``m`` per input group.
mf-fit, mf-sobol
    The same for a multi-fidelity co-kriging model (levels listed coarse to fine).
demo-ishigami, demo-tank
    Built-in configurations (Ishigami kriging study; tank two-level study).

Every run writes into ``--out`` (or ``output`` from the config): designs, the
fitted model as JSON, index-sample CSVs (``k,l,value``), a ``summary.json``
with means, variance budgets and quantiles, and ``manifest.json`` with the
config hash, derived seeds, library versions and output checksums.  The same
config and seed give byte-identical files.

Exit status: 0 on success, 2 for invalid configuration or arguments, 3 when
the analysis aborts (for example too many degenerate index estimates).
"""
import argparse
import dataclasses
import hashlib
import json
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .design import InputDistribution, nested_union, optimize_lhs, pick_freeze, save_csv
from .errors import GPSobolError
from .kriging import efficiency, fit, loo_efficiency, nash_sutcliffe
from .kriging_sobol import (
    algorithm1,
    balance_m,
    budget,
    first_approach_estimate,
    plugin_estimate,
    quantiles,
    seed_streams,
)
from .multifidelity import mf_algorithm1, mf_first_approach, mf_fit

DEMO_ISHIGAMI = {
    "seed": 20240611,
    "functions": [{"builtin": "ishigami"}],
    "design": {"sizes": [200], "lhs_iterations": 1000},
    "models": [{"trend": "constant", "kernel": "matern52"}],
    "analysis": {"subsets": [[1], [2], [3]], "m": 10000, "n_paths": 300, "n_boot": 200,
                 "estimator": "janon", "test_size": 10000},
    "output": "out/demo-ishigami",
}

DEMO_TANK = {
    "seed": 20240612,
    "functions": [{"builtin": "tank_cheap"}, {"builtin": "tank_expensive_stub"}],
    "design": {"sizes": [100, 25], "lhs_iterations": 1000},
    "models": [{"trend": "constant"}, {"trend": "constant"}],
    "analysis": {"subsets": [[i] for i in range(1, 9)], "m": 2000, "n_paths": 100, "n_boot": 100,
                 "estimator": "janon", "test_size": 1000},
    "output": "out/demo-tank",
}


def _seed_int(seq):
    return int(seq.generate_state(1, dtype=np.uint64)[0])


class Run:
    """State of one CLI invocation: config, derived seeds, written files."""

    def __init__(self, config, command, out, threads):
        self.config = config
        self.command = command
        self.out = out
        self.threads = threads
        master = np.random.SeedSequence(config.seed)
        design_seq, fit_seq, analysis_seq, test_seq = master.spawn(4)
        self.seeds = {
            "master": config.seed,
            "design": [_seed_int(s) for s in design_seq.spawn(config.levels)],
            "fit": _seed_int(fit_seq),
            "analysis": [_seed_int(s) for s in analysis_seq.spawn(len(config.analysis.subsets))],
            "test": _seed_int(test_seq),
        }
        self.files = []
        os.makedirs(out, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def write_json(self, name, data):
        with open(self.path(name), "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    # ------------------------------------------------------------------

    def designs(self):
        """Nested optimized-LHS designs in ``[0,1]^d``, coarse to fine."""
        cfg = self.config
        d = cfg.inputs.dim
        sizes = cfg.design.sizes
        it = cfg.design.lhs_iterations
        fine = optimize_lhs(sizes[-1], d, self.seeds["design"][-1], it)
        designs = [fine]
        for t in range(cfg.levels - 2, -1, -1):
            candidate = optimize_lhs(sizes[t], d, self.seeds["design"][t], it)
            designs.insert(0, nested_union(candidate, designs[0])[0])
        return designs

    def evaluate(self, t, X):
        return np.asarray(self.config.functions[t].callable()(self.config.inputs.to_physical(X)), dtype=float)

    def fit_models(self, multi):
        cfg = self.config
        designs = self.designs()
        observations = [self.evaluate(t, D) for t, D in enumerate(designs)]
        names = list(cfg.inputs.names)
        for t, (D, z) in enumerate(zip(designs, observations), start=1):
            save_csv(self.path(f"design_level{t}.csv"),
                     np.column_stack([cfg.inputs.to_physical(D), z]), names + ["output"])
        specs = cfg.models
        if multi:
            model = mf_fit(designs, observations, [s.trend for s in specs], [s.kernel for s in specs],
                           specs[0].nugget, specs[0].optimizer_budget, self.seeds["fit"],
                           [s.length_scales for s in specs])
        else:
            s = specs[0]
            model = fit(designs[0], observations[0], s.trend, s.kernel, s.nugget, s.optimizer_budget,
                        self.seeds["fit"], s.length_scales)
        self.write_json("model.json", model.to_dict())
        return model, self.fit_summary(model, multi)

    def fit_summary(self, model, multi):
        cfg = self.config
        levels = model.levels if multi else [model]
        out = {"levels": []}
        for t, lvl in enumerate(levels):
            entry = {"n": lvl.n, "length_scales": lvl.theta.tolist(), "sigma2": lvl.sigma2,
                     "coefficients": lvl.coef.tolist(), "nugget": lvl.nugget}
            if multi and t > 0:
                entry["rho"] = model.rho(t)
            out["levels"].append(entry)
        if not multi and model.n >= 3:
            out["loo_efficiency"] = loo_efficiency(model)
        if cfg.analysis.test_size > 0:
            rng = np.random.default_rng(self.seeds["test"])
            X = rng.random((cfg.analysis.test_size, cfg.inputs.dim))
            z = self.evaluate(cfg.levels - 1, X)
            out["test_efficiency"] = (efficiency(model, X, z) if not multi
                                      else nash_sutcliffe(model.predict_mean(X), z))
        return out

    # ------------------------------------------------------------------

    def index_summary(self, s, u):
        a = self.config.analysis
        entry = {"u": list(u), "mean": float(np.nanmean(s.values)),
                 "degenerate_cells": s.meta["degenerate_cells"]}
        if s.n_paths >= 2 and s.n_boot >= 2:
            entry.update(budget(s).to_dict())
        entry["quantiles_full"] = _qdict(a.quantile_levels, quantiles(s, a.quantile_levels, "full"))
        entry["quantiles_metamodel"] = _qdict(a.quantile_levels, quantiles(s, a.quantile_levels, "metamodel"))
        return entry

    def sobol(self, model, multi):
        a = self.config.analysis
        results = []
        for u, seed in zip(a.subsets, self.seeds["analysis"]):
            u0 = [i - 1 for i in u]
            tag = "-".join(str(i) for i in u)
            if multi:
                mats = mf_algorithm1(model, None, u0, a.m, a.n_paths, a.n_boot, a.estimator, seed,
                                     a.method, threads=self.threads)
                levels = []
                for t, s in enumerate(mats, start=1):
                    s.to_csv(self.path(f"index_level{t}_u{tag}.csv"))
                    levels.append(dict(self.index_summary(s, u), level=t))
                entry = {"u": list(u), "levels": levels}
                if a.first_approach:
                    entry["first_approach"] = mf_first_approach(model, self._pf(u0, seed))
            else:
                s = algorithm1(model, None, u0, a.m, a.n_paths, a.n_boot, a.estimator, seed,
                               a.method, threads=self.threads)
                s.to_csv(self.path(f"index_u{tag}.csv"))
                entry = self.index_summary(s, u)
                pf = self._pf(u0, seed)
                entry["plugin"] = plugin_estimate(model, pf)
                if a.first_approach:
                    entry["first_approach"] = first_approach_estimate(model, pf)
            results.append(entry)
        return results

    def _pf(self, u0, seed):
        pf_seed = seed_streams(seed)[0]
        return pick_freeze(InputDistribution.unit(self.config.inputs.dim), u0, self.config.analysis.m,
                           np.random.default_rng(pf_seed))

    def balance(self, model):
        a, b = self.config.analysis, self.config.analysis.balance
        results = []
        for u, seed in zip(a.subsets, self.seeds["analysis"]):
            res = balance_m(model, None, [i - 1 for i in u], b.m0, b.growth, b.n_paths, b.n_boot,
                            a.estimator, seed, b.m_max, a.method, threads=self.threads)
            res.to_csv(self.path(f"budget_u{'-'.join(str(i) for i in u)}.csv"))
            results.append({"u": list(u), "m": res.m, "balanced": res.balanced,
                            "trace": [dict(b.to_dict(), m=m) for m, b in res.trace]})
        return results

    def manifest(self):
        files = {}
        for name in sorted(set(self.files)):
            with open(os.path.join(self.out, name), "rb") as fh:
                files[name] = hashlib.sha256(fh.read()).hexdigest()
        data = {
            "command": self.command,
            "config": self.config.to_dict(),
            "config_sha256": self.config.digest(),
            "seeds": self.seeds,
            "versions": {"gpsobol": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "files": files,
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _qdict(levels, values):
    return {f"{q:g}": float(v) for q, v in zip(levels, values)}


def execute(config, command, out=None, threads=1):
    """Run one subcommand on a validated config; returns the summary dict."""
    multi = command in ("mf-fit", "mf-sobol", "demo-tank")
    if not multi and config.levels != 1:
        raise ConfigError(f"config.functions: '{command}' needs exactly one level; use mf-{command}")
    run = Run(config, command, out or config.output, threads)
    model, fit_info = run.fit_models(multi)
    summary = {"command": command, "fit": fit_info}
    if command in ("sobol", "mf-sobol", "demo-ishigami", "demo-tank"):
        summary["indices"] = run.sobol(model, multi)
    elif command == "balance":
        summary["balance"] = run.balance(model)
    run.write_json("summary.json", summary)
    run.manifest()
    return summary


def build_parser():
    p = argparse.ArgumentParser(prog="gpsobol", description="Sobol indices of kriging surrogates with uncertainty.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, needs_config in [("fit", True), ("sobol", True), ("balance", True), ("mf-fit", True),
                               ("mf-sobol", True), ("demo-ishigami", False), ("demo-tank", False)]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=needs_config, help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the master seed (unsigned 64-bit)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for path sampling")
        sp.add_argument("--out", help="output directory (overrides the config)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            config = load_config(args.config)
        else:
            config = RunConfig.from_dict(DEMO_TANK if args.command == "demo-tank" else DEMO_ISHIGAMI)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed: expected an unsigned 64-bit integer")
            config = dataclasses.replace(config, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads: expected a positive integer")
        summary = execute(config, args.command, args.out, args.threads)
    except ConfigError as exc:
        print(f"gpsobol: configuration error: {exc}", file=sys.stderr)
        return 2
    except GPSobolError as exc:
        print(f"gpsobol: analysis aborted: {exc}", file=sys.stderr)
        return 3
    for entry in summary.get("indices", []):
        for lvl in entry.get("levels", [entry]):
            tag = f" level {lvl['level']}" if "level" in lvl else ""
            q = lvl["quantiles_full"]
            print(f"u={entry['u']}{tag}: mean {lvl['mean']:.4f}  95% [{q.get('0.025', float('nan')):.4f}, "
                  f"{q.get('0.975', float('nan')):.4f}]")
    for entry in summary.get("balance", []):
        print(f"u={entry['u']}: m={entry['m']} balanced={entry['balanced']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
