"""Command-line entry point: ``localbs <subcommand> [options]``.

Options can come from a JSON file (``--config``) whose keys are the option
names with dashes replaced by underscores; flags given on the command line
override the file.  Every random quantity is drawn from a stream addressed by
(seed, subcommand, chunk index), so output depends only on (config, seed),
never on ``--jobs``.

Exit codes: 0 success, 1 input error, 2 statistical test failure,
3 internal error.  Errors are reported on stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import avalanche, coupling, dynamics, stationary
from .distributions import solve_bc
from .errors import InputError, InsufficientDataError, InternalError, StatisticalTestFailure
from .graph import parse_graph_spec
from .rng import stream

OUTPUT_DIR_ENV = "LOCALBS_OUTPUT_DIR"
SAMPLE_CHUNK = 10_000
EXIT_OK, EXIT_INPUT, EXIT_STAT, EXIT_INTERNAL = 0, 1, 2, 3

# per-command defaults, used when neither a flag nor the config sets a key
DEFAULTS = {
    "seed": 0,
    "jobs": None,
    "output": None,
    "graph": None,
    "steps": 10_000,
    "replicas": 1,
    "init": "iid-exp",
    "trajectory": None,
    "samples": 100_000,
    "method": "hitting",
    "level": 1e-3,
    "thresholds": [0.5, 1.0, 2.0],
    "vertex": 0,
    "t_max": 6.0,
    "bins": 48,
    "horizon": None,
    "n": 8,
    "alpha": None,
    "b": None,
    "d": None,
}


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class _Table:
    def __init__(self, command: str, columns, comments=()):
        self.buf = io.StringIO()
        self.buf.write(f"# schema: localbs.{command}/v1\n")
        for c in comments:
            self.buf.write(f"# {c}\n")
        self.writer = csv.writer(self.buf, lineterminator="\n")
        self.writer.writerow(columns)

    def row(self, *values):
        self.writer.writerow([_fmt(v) for v in values])

    def text(self) -> str:
        return self.buf.getvalue()


def _resolve_output(path):
    if path is None:
        return None
    p = Path(path)
    if not p.is_absolute() and os.environ.get(OUTPUT_DIR_ENV):
        p = Path(os.environ[OUTPUT_DIR_ENV]) / p
    return p


def _emit(text: str, path):
    p = _resolve_output(path)
    if p is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)


def _map(fn, tasks, jobs):
    """Ordered map, optionally over a process pool; results merge by index."""
    tasks = list(tasks)
    if not jobs or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _chunks(total: int, size: int):
    return [(i, min(size, total - i * size)) for i in range(-(-total // size))]


def _positive(name, value):
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise InputError(f"--{name.replace('_', '-')} must be a positive integer, got {value}")
    return int(value)


def _floats(value, name):
    if value is None:
        raise InputError(f"--{name} is required")
    if isinstance(value, (int, float)):
        return [float(value)]
    out = []
    try:
        for item in value:
            if isinstance(item, str):
                out.extend(float(x) for x in item.split(",") if x.strip())
            else:
                out.append(float(item))
    except (TypeError, ValueError) as exc:
        raise InputError(f"--{name}: {exc}") from exc
    return out


def _graph(spec):
    if not spec:
        raise InputError("--graph is required")
    return parse_graph_spec(spec)


# ------------------------------------------------------------------ simulate


def _simulate_task(task):
    spec, seed, r, steps, init, trajectory = task
    g = parse_graph_spec(spec)
    rng = stream(seed, "simulate", r)
    s0 = dynamics.initial_state(g, init, rng)
    if trajectory is not None:
        visits = np.zeros(g.n, dtype=np.int64)

        def count(record):
            visits[record.new_active] += 1

        with open(trajectory, "w") as fh:
            final = dynamics.run(g, s0, steps, rng, [dynamics.CsvTrajectoryWriter(fh), count])
    else:
        final, visits = dynamics.run_with_visits(g, s0, steps, rng)
    stat, p = dynamics.occupancy_test(g, visits)
    return r, final.active, float(final.fitness.mean()), float(final.fitness.min()), stat, p


def cmd_simulate(o):
    g = _graph(o["graph"])
    steps = _positive("steps", o["steps"])
    replicas = _positive("replicas", o["replicas"])
    traj = _resolve_output(o["trajectory"])
    tasks = [(o["graph"], o["seed"], r, steps, o["init"], str(traj) if (traj and r == 0) else None)
             for r in range(replicas)]
    dynamics.initial_state(g, o["init"], np.random.default_rng(0))  # validate kind early
    table = _Table("simulate", ["replica", "steps", "final_active", "fitness_mean", "fitness_min",
                                "occupancy_chi2", "occupancy_p"])
    for r, x, mean, low, stat, p in _map(_simulate_task, tasks, o["jobs"]):
        table.row(r, steps, x, mean, low, stat, p)
    return table.text()


# ---------------------------------------------------------- sample-stationary


def _stationary_chunk(task):
    spec, seed, label, index, size, method = task
    g = parse_graph_spec(spec)
    rng = stream(seed, label, index)
    if method == "regular":
        return stationary.sample_stationary_regular_batch(g, size, rng)
    return stationary.sample_stationary_batch(g, size, rng)


def _stationary_samples(o, label):
    g = _graph(o["graph"])
    if o["method"] not in ("hitting", "regular"):
        raise InputError(f"--method must be 'hitting' or 'regular', got {o['method']!r}")
    if o["method"] == "regular":
        stationary._require_regular(g)
    samples = _positive("samples", o["samples"])
    tasks = [(o["graph"], o["seed"], label, i, size, o["method"]) for i, size in _chunks(samples, SAMPLE_CHUNK)]
    parts = _map(_stationary_chunk, tasks, o["jobs"])
    return g, np.concatenate([a for a, _ in parts]), np.vstack([f for _, f in parts])


def cmd_sample_stationary(o):
    g, actives, fitness = _stationary_samples(o, "sample-stationary")
    table = _Table("sample-stationary", ["sample", "X0"] + [f"v{v}" for v in range(g.n)])
    for i in range(actives.size):
        table.row(i, int(actives[i]), *fitness[i])
    return table.text()


# -------------------------------------------------------- verify-stationarity


def cmd_verify_stationarity(o):
    g = _graph(o["graph"])
    samples = _positive("samples", o["samples"])
    report = stationary.verify_stationarity(g, samples, stream(o["seed"], "verify-stationarity"),
                                            float(o["level"]), _floats(o["thresholds"], "thresholds"))
    table = _Table("verify-stationarity", ["test", "target", "statistic", "p_value", "pass"],
                   [f"per-test level: {report.per_test_level!r}"])
    for test, target, stat, p in report.rows:
        table.row(test, target, stat, p, int(p > report.per_test_level))
    if not report.passed:
        raise StatisticalTestFailure("stationarity check failed", report.failing, output=table.text())
    return table.text()


# ------------------------------------------------------------------- density


def cmd_density(o):
    g, _, fitness = _stationary_samples(o, "density")
    v = g.check_vertex(o["vertex"])
    mix = stationary.stationary_marginal(g, v)
    bins = _positive("bins", o["bins"])
    t_max = float(o["t_max"])
    if not t_max > 0:
        raise InputError("--t-max must be positive")
    edges = np.linspace(0.0, t_max, bins + 1)
    counts, _ = np.histogram(fitness[:, v], bins=edges)
    width = edges[1] - edges[0]
    mids = 0.5 * (edges[:-1] + edges[1:])
    table = _Table("density", ["t", "closed_form", "empirical"], [f"mixture: {mix.label}", f"vertex: {v}"])
    for t, c in zip(mids, counts):
        table.row(float(t), float(mix.pdf(t)), c / (fitness.shape[0] * width))
    return table.text()


# ------------------------------------------------------------------ coupling


def cmd_coupling(o):
    g = _graph(o["graph"])
    replicas = _positive("replicas", o["replicas"])
    horizon = _positive("horizon", o["horizon"] if o["horizon"] is not None else 50)
    lower, upper = coupling.bounds_general(g, horizon, replicas, stream(o["seed"], "coupling"))
    table = _Table("coupling", ["t", "lower", "lower_se", "upper", "upper_se", "censored_fraction"])
    censored = max(lower.censored, upper.censored)
    for t in range(horizon + 1):
        table.row(t, lower.tail[t], lower.se[t], upper.tail[t], upper.se[t], censored)
    return table.text()


# -------------------------------------------------------------- cycle-bounds


def _cycle_chunk(task):
    n, seed, index, size = task
    return coupling.cycle_bound_times(n, size, stream(seed, "cycle-bounds", index)).samples


def cmd_cycle_bounds(o):
    n = _positive("n", o["n"])
    if n % 4:
        raise InputError(f"--n must be a multiple of 4, got {n}")
    replicas = _positive("replicas", o["replicas"])
    parts = _map(_cycle_chunk, [(n, o["seed"], i, size) for i, size in _chunks(replicas, SAMPLE_CHUNK)], o["jobs"])
    t1, t2, t3 = (np.concatenate([p[k] for p in parts]) for k in range(3))
    cb = coupling.cycle_bounds_from_samples(t1, t2, t3, o["horizon"])
    table = _Table("cycle-bounds", ["t", "tau1_tail", "tau2_tail", "tau3_tail",
                                    "lower", "lower_se", "upper", "upper_se"])
    for t in range(cb.upper.horizon + 1):
        table.row(t, cb.tau1.at(t), cb.tau2.at(t), cb.tau3.at(t),
                  cb.lower.tail[t], cb.lower.se[t], cb.upper.tail[t], cb.upper.se[t])
    return table.text()


# ----------------------------------------------------------------- avalanche


def _avalanche_task(task):
    spec, seed, index, pairs, steps = task
    g = parse_graph_spec(spec)
    rng = stream(seed, "avalanche", index)
    s0 = dynamics.initial_state(g, "iid-exp", rng)
    records, _ = avalanche.track_avalanche_grid(g, s0, pairs, steps, rng)
    out = []
    for rec in records:
        try:
            est, se = avalanche.estimate_D(rec)
        except InsufficientDataError:
            est, se = math.inf, math.nan
        out.append((est, se))
    return g.n, g.regular_degree(), out


def cmd_avalanche(o):
    specs = o["graph"] if isinstance(o["graph"], list) else [o["graph"]]
    for spec in specs:
        _graph(spec)
    alphas = _floats(o["alpha"], "alpha")
    bs = _floats(o["b"], "b")
    steps = _positive("steps", o["steps"])
    pairs = [(a, b) for a in alphas for b in bs]
    for a, b in pairs:
        avalanche._check_pair(a, b)
    tasks = [(spec, o["seed"], i, pairs, steps) for i, spec in enumerate(specs)]
    table = _Table("avalanche", ["n", "alpha", "b", "D_estimate", "D_se",
                                 "sandwich_lower", "sandwich_upper", "regime"])
    for n, d, results in _map(_avalanche_task, tasks, o["jobs"]):
        for (a, b), (est, se) in zip(pairs, results):
            lo = up = regime = ""
            if d is not None and d >= 2 and n > d + 1:
                lo, up = avalanche.binomial_sandwich(n, d, a, b)
                if a < 1:
                    regime = avalanche.classify_regime(d, a, b)
            table.row(n, a, b, est, se, lo, up, regime)
    return table.text()


# ------------------------------------------------------------------------ bc


def cmd_bc(o):
    ds = [int(x) for x in _floats(o["d"], "d")]
    alphas = _floats(o["alpha"], "alpha")
    table = _Table("bc", ["d", "alpha", "b_c"])
    for d in ds:
        for a in alphas:
            table.row(d, a, solve_bc(d, a))
    return table.text()


COMMANDS = {
    "simulate": cmd_simulate,
    "sample-stationary": cmd_sample_stationary,
    "verify-stationarity": cmd_verify_stationarity,
    "density": cmd_density,
    "coupling": cmd_coupling,
    "cycle-bounds": cmd_cycle_bounds,
    "avalanche": cmd_avalanche,
    "bc": cmd_bc,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="localbs", description="Local Bak-Sneppen simulation and verification tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, graph=True):
        p.add_argument("--config", help="JSON file of option values; flags override it")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
        p.add_argument("--output", "-o", default=None, help=f"output file (relative paths honour ${OUTPUT_DIR_ENV})")
        if graph:
            p.add_argument("--graph", default=None,
                           help="cycle:N, path:N, complete:N, star:K, regular:N:D:SEED or file:PATH")

    p = sub.add_parser("simulate", help="run the chain and summarise each replica")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--init", choices=["iid-exp", "all-equal-perturbed"], default=None)
    p.add_argument("--trajectory", default=None, help="CSV dump of replica 0's step records")

    for name, helptext in [("sample-stationary", "exact stationary fitness samples"),
                           ("density", "closed-form vs empirical marginal density")]:
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--method", choices=["hitting", "regular"], default=None)
        if name == "density":
            p.add_argument("--vertex", type=int, default=None)
            p.add_argument("--t-max", type=float, default=None)
            p.add_argument("--bins", type=int, default=None)

    p = sub.add_parser("verify-stationarity", help="one-step invariance test of the exact sampler")
    common(p)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--level", type=float, default=None, help="family-wise significance (Bonferroni)")
    p.add_argument("--thresholds", nargs="+", default=None)

    p = sub.add_parser("coupling", help="general-graph bounds on the distance to stationarity")
    common(p)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)

    p = sub.add_parser("cycle-bounds", help="two-sided bound on the N-cycle")
    common(p, graph=False)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)

    p = sub.add_parser("avalanche", help="D(alpha, b) scan with binomial sandwich and regime")
    common(p, graph=False)
    p.add_argument("--graph", action="append", default=None, help="repeatable")
    p.add_argument("--alpha", nargs="+", default=None)
    p.add_argument("--b", nargs="+", default=None)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("bc", help="critical thresholds over a (d, alpha) grid")
    common(p, graph=False)
    p.add_argument("--d", nargs="+", default=None)
    p.add_argument("--alpha", nargs="+", default=None)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if args.command == "cycle-bounds":
        opts["replicas"] = 100_000
    elif args.command == "coupling":
        opts["replicas"] = 1_000
    elif args.command == "avalanche":
        opts["steps"] = 1_000_000
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise InputError("config must be a JSON object")
        opts.update(config)
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command"):
            opts[key] = value
    if opts["jobs"] is None:
        opts["jobs"] = os.cpu_count() or 1
    opts["seed"] = int(opts["seed"])
    if not 0 <= opts["seed"] < 2**64:
        raise InputError("--seed must be a 64-bit nonnegative integer")
    return opts


def _error(kind: str, message: str, **extra):
    record = {"error": kind, "message": message, **extra}
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        opts = resolve_options(args)
        _emit(COMMANDS[args.command](opts), opts["output"])
        return EXIT_OK
    except StatisticalTestFailure as exc:
        if exc.output is not None:
            _emit(exc.output, opts["output"])
        _error("statistical", str(exc), failing=[list(f) for f in exc.failing])
        return EXIT_STAT
    except InsufficientDataError as exc:
        _error("input", str(exc), horizon=exc.horizon)
        return EXIT_INPUT
    except InputError as exc:
        _error("input", str(exc))
        return EXIT_INPUT
    except InternalError as exc:
        _error("internal", str(exc))
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - anything unexpected is an internal error
        _error("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
