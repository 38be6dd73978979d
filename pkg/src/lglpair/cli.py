"""Command-line interface: pair solves, network solves, simulation runs
and side-by-side comparisons, emitted as CSV plus a JSON run manifest.

Every command writes <name>.csv (or <name>_rates.csv / <name>_pairs.csv
for network commands) and <name>.manifest.json into the output directory
(--out, env LGLPAIR_OUTDIR, default ./lglpair-out).  The manifest echoes
the exact argument vector, so `lglpair replay manifest.json --out DIR`
reproduces byte-identical CSV output.  Neuron ids in files are 1-based.

Exit codes: 0 ok, 2 configuration error, 3 a solver failed to converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .errors import LglError, NotConverged, ValidationError
from .model import (
    DriveTriple,
    NeuronParams,
    PairProblem,
    network_from_json,
    network_to_json,
    partition_from_json,
    partition_to_json,
)
from .pairsolve import pair_exact, solve_pair
from .rmf import solve_all_pair, solve_first_order, solve_pair_partition
from .simulate import ReplicaMode, SimConfig, generate_ring, generate_tree, simulate

CSV_SCHEMAS = {
    "pair-exact": "lglpair.pair-exact/v1",
    "pair-solve": "lglpair.pair-solve/v1",
    "simulate": "lglpair.simulate/v1",
    "rmf": "lglpair.rmf/v1",
    "compare": "lglpair.compare/v1",
}


# ----------------------------------------------------------------------
# Output plumbing
# ----------------------------------------------------------------------


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except Exception:
        pass
    return "unknown"


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(outdir, name, command, argv, seeds, outputs, wall_clock):
    manifest = {
        "schema": "lglpair-manifest/v1",
        "command": command,
        "argv": list(argv),
        "package_version": __version__,
        "git_describe": _git_describe(),
        "csv_schema": CSV_SCHEMAS[command],
        "seeds": seeds,
        "wall_clock_s": wall_clock,
        "outputs": outputs,
    }
    path = os.path.join(outdir, f"{name}.manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _outdir(args) -> str:
    out = args.out or os.environ.get("LGLPAIR_OUTDIR") or "lglpair-out"
    os.makedirs(out, exist_ok=True)
    return out


def _pool_map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------------
# Topology / problem construction helpers
# ----------------------------------------------------------------------


def _load_network(args):
    """Build (spec, partition-or-None, label) from the topology flags."""
    chosen = [
        name
        for name, val in (
            ("--network", args.network),
            ("--tree", args.tree),
            ("--ring", args.ring),
        )
        if val is not None
    ]
    if len(chosen) != 1:
        raise ValidationError("choose exactly one of --network, --tree, --ring")
    if args.network is not None:
        with open(args.network) as fh:
            spec = network_from_json(fh.read())
        partition = None
        if args.partition:
            with open(args.partition) as fh:
                partition = partition_from_json(fh.read())
        return spec, partition, os.path.basename(args.network)
    if args.tree is not None:
        spec, partition = generate_tree(args.tree, seed=args.tree_seed)
        return spec, partition, f"tree{args.tree}"
    spec = generate_ring(args.ring, mu=args.mu, r=args.reset)
    return spec, None, f"ring{args.ring}"


def _parse_drive(texts):
    drive = []
    for text in texts or ():
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(
                f"drive spec {text!r} is not RATE:WEIGHT1:WEIGHT2"
            )
        rate, w1, w2 = (float(p) for p in parts)
        drive.append(DriveTriple(rate, w1, w2))
    return tuple(drive)


def _parse_mode(text, partition):
    if text == "original":
        return ReplicaMode.original()
    kind, _, m = text.partition(":")
    if not m.isdigit():
        raise ValidationError(f"mode {text!r} is not original|first:M|pairs:M|allpair:M")
    M = int(m)
    if kind == "first":
        return ReplicaMode.first_order(M)
    if kind == "pairs":
        if partition is None:
            raise ValidationError("pairs:M mode needs a partition (--partition or --tree)")
        return ReplicaMode.pair_partition(M, partition)
    if kind == "allpair":
        return ReplicaMode.all_pair(M)
    raise ValidationError(f"unknown mode {text!r}")


# ----------------------------------------------------------------------
# pair-exact
# ----------------------------------------------------------------------

PAIR_COLUMNS = [
    "mu_12",
    "mu_21",
    "beta_1",
    "beta_2",
    "second_moment_1",
    "second_moment_2",
    "cross_moment",
    "correlation",
]


def _exact_point(point):
    r1, r2, b1, b2, mu12, mu21 = point
    problem = PairProblem(
        NeuronParams(b=b1, r=r1), NeuronParams(b=b2, r=r2), mu12, mu21
    )
    sol = pair_exact(problem)
    return [
        mu12,
        mu21,
        sol.beta_i,
        sol.beta_j,
        sol.second_moment_i,
        sol.second_moment_j,
        sol.cross_moment,
        sol.correlation,
    ]


def cmd_pair_exact(args, argv):
    outdir = _outdir(args)
    name = args.name or "pair-exact"
    t0 = time.monotonic()
    if args.fig2:
        args.sweep = args.sweep or 40
        args.r1 = args.r2 = args.b1 = args.b2 = 1.0
    if args.sweep:
        grid = np.linspace(args.mu_max / args.sweep, args.mu_max, args.sweep)
        points = [
            (args.r1, args.r2, args.b1, args.b2, float(m12), float(m21))
            for m12 in grid
            for m21 in grid
        ]
    else:
        points = [(args.r1, args.r2, args.b1, args.b2, args.mu12, args.mu21)]
    rows = _pool_map(_exact_point, points, args.jobs)
    csv_path = os.path.join(outdir, f"{name}.csv")
    _write_csv(csv_path, PAIR_COLUMNS, rows)
    _write_manifest(
        outdir, name, "pair-exact", argv, [], {"csv": [f"{name}.csv"]},
        time.monotonic() - t0,
    )
    return 0


# ----------------------------------------------------------------------
# pair-solve
# ----------------------------------------------------------------------

SOLVE_COLUMNS = [
    "private_rate",
    "shared_rate",
    "beta_1",
    "beta_2",
    "second_moment_1",
    "second_moment_2",
    "cross_moment",
    "correlation",
    "normalization_residual",
    "iterations",
    "converged",
]

FIG3_COUPLINGS = {"fig3a": (0.0, 0.0), "fig3b": (0.0, 1.0), "fig3c": (1.0, 1.0)}


def _solve_point(point):
    r1, r2, b1, b2, mu12, mu21, drive, tolerance, max_iter = point
    problem = PairProblem(
        NeuronParams(b=b1, r=r1),
        NeuronParams(b=b2, r=r2),
        mu12,
        mu21,
        drive=tuple(DriveTriple(*t) for t in drive),
    )
    sol = solve_pair(problem, tolerance=tolerance, max_iter=max_iter)
    return sol


def cmd_pair_solve(args, argv):
    outdir = _outdir(args)
    name = args.name or "pair-solve"
    t0 = time.monotonic()
    preset = next((p for p in FIG3_COUPLINGS if getattr(args, p)), None)
    base = (args.r1, args.r2, args.b1, args.b2)
    points = []
    labels = []
    if preset:
        mu12, mu21 = FIG3_COUPLINGS[preset]
        n = args.sweep or 3
        grid = np.linspace(args.rate_max / n, args.rate_max, n)
        for private in grid:
            for shared in grid:
                drive = (
                    (float(private), 1.0, 0.0),
                    (float(private), 0.0, 1.0),
                    (float(shared), 1.0, 1.0),
                )
                points.append(
                    base + (mu12, mu21, drive, args.tolerance, args.max_iter)
                )
                labels.append((float(private), float(shared)))
    else:
        drive = tuple((t.rate, t.weight_i, t.weight_j) for t in _parse_drive(args.drive))
        points.append(
            base + (args.mu12, args.mu21, drive, args.tolerance, args.max_iter)
        )
        labels.append((math.nan, math.nan))
    solutions = _pool_map(_solve_point, points, args.jobs)
    rows = []
    all_converged = True
    for (private, shared), sol in zip(labels, solutions):
        all_converged &= sol.report.converged
        rows.append(
            [
                private,
                shared,
                sol.beta_i,
                sol.beta_j,
                sol.second_moment_i,
                sol.second_moment_j,
                sol.cross_moment,
                sol.correlation,
                sol.normalization_residual,
                sol.report.iterations,
                int(sol.report.converged),
            ]
        )
    csv_path = os.path.join(outdir, f"{name}.csv")
    _write_csv(csv_path, SOLVE_COLUMNS, rows)
    _write_manifest(
        outdir, name, "pair-solve", argv, [], {"csv": [f"{name}.csv"]},
        time.monotonic() - t0,
    )
    return 0 if all_converged else 3


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------


def _merge_inverse_variance(values, ses):
    """Combine independent estimates weighting each by 1/se^2."""
    values = np.asarray(values, dtype=float)
    ses = np.asarray(ses, dtype=float)
    weights = np.where(ses > 0, 1.0 / np.maximum(ses, 1e-300) ** 2, 1e300)
    total = weights.sum(axis=0)
    merged = (weights * values).sum(axis=0) / total
    return merged, 1.0 / np.sqrt(total)


def _one_sim_run(payload):
    spec_json, partition_json, mode_text, seed, t_measure, t_warmup = payload
    spec = network_from_json(spec_json)
    partition = partition_from_json(partition_json) if partition_json else None
    mode = _parse_mode(mode_text, partition)
    config = SimConfig(seed=seed, t_measure=t_measure, t_warmup=t_warmup)
    est = simulate(spec, mode, config)
    return est.rates, est.rate_se, est.cov_pairs, est.covariances, est.covariance_se


def cmd_simulate(args, argv):
    outdir = _outdir(args)
    name = args.name or "simulate"
    t0 = time.monotonic()
    spec, partition, _ = _load_network(args)
    _parse_mode(args.mode, partition)  # fail fast on a bad mode string
    seeds = [args.seed + k for k in range(args.runs)]
    payloads = [
        (
            network_to_json(spec),
            partition_to_json(partition) if partition else None,
            args.mode,
            seed,
            args.t_measure,
            args.t_warmup,
        )
        for seed in seeds
    ]
    results = _pool_map(_one_sim_run, payloads, args.jobs)
    rates, rate_se = _merge_inverse_variance(
        [r[0] for r in results], [r[1] for r in results]
    )
    cov_pairs = results[0][2]
    if len(cov_pairs):
        covs, cov_se = _merge_inverse_variance(
            [r[3] for r in results], [r[4] for r in results]
        )
    else:
        covs = cov_se = np.zeros(0)
    header = ["seed", "K", "mode", "t_measure"]
    row = [args.seed, spec.K, args.mode, args.t_measure * args.runs]
    for k in range(spec.K):
        header += [f"beta_{k + 1}", f"beta_se_{k + 1}"]
        row += [rates[k], rate_se[k]]
    for p, (i, j) in enumerate(cov_pairs):
        header += [f"cov_{i + 1}_{j + 1}", f"cov_se_{i + 1}_{j + 1}"]
        row += [covs[p], cov_se[p]]
    csv_path = os.path.join(outdir, f"{name}.csv")
    _write_csv(csv_path, header, [row])
    _write_manifest(
        outdir, name, "simulate", argv, seeds, {"csv": [f"{name}.csv"]},
        time.monotonic() - t0,
    )
    return 0


# ----------------------------------------------------------------------
# rmf / compare
# ----------------------------------------------------------------------


def _run_method(method, spec, partition, args):
    if method == "first":
        return solve_first_order(spec, tolerance=args.tolerance, damping=args.damping)
    if method == "pairs":
        if partition is None:
            raise ValidationError("pairs method needs a partition (--partition or --tree)")
        return solve_pair_partition(
            spec, partition, tolerance=args.tolerance, damping=args.damping
        )
    if method == "allpair":
        return solve_all_pair(spec, tolerance=args.tolerance, damping=args.damping)
    raise ValidationError(f"unknown method {method!r}")


def cmd_rmf(args, argv):
    outdir = _outdir(args)
    name = args.name or "rmf"
    t0 = time.monotonic()
    spec, partition, _ = _load_network(args)
    solution = _run_method(args.mode, spec, partition, args)
    beta = solution.beta
    rate_rows = [[k + 1, beta[k]] for k in range(spec.K)]
    pair_rows = [
        [s.i + 1, s.j + 1, s.beta_i, s.beta_j, s.covariance, s.correlation]
        for s in solution.pair_stats
    ]
    rates_csv = os.path.join(outdir, f"{name}_rates.csv")
    pairs_csv = os.path.join(outdir, f"{name}_pairs.csv")
    _write_csv(rates_csv, ["neuron", "beta"], rate_rows)
    _write_csv(
        pairs_csv,
        ["i", "j", "beta_i", "beta_j", "covariance", "correlation"],
        pair_rows,
    )
    _write_manifest(
        outdir,
        name,
        "rmf",
        argv,
        [],
        {"csv": [f"{name}_rates.csv", f"{name}_pairs.csv"]},
        time.monotonic() - t0,
    )
    return 0


def cmd_compare(args, argv):
    outdir = _outdir(args)
    name = args.name or "compare"
    t0 = time.monotonic()
    spec, partition, _ = _load_network(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        methods = ["first", "pairs"] if partition is not None else ["first", "allpair"]
    cov_pairs = list(partition.pairs) if partition is not None else spec.connected_pairs()
    config = SimConfig(
        seed=args.seed, t_measure=args.t_measure, t_warmup=args.t_warmup
    )
    est = simulate(spec, ReplicaMode.original(), config, cov_pairs=cov_pairs)
    solutions = {m: _run_method(m, spec, partition, args) for m in methods}
    rate_header = ["neuron", "sim_beta", "sim_beta_se"]
    for m in methods:
        rate_header += [f"{m}_beta", f"{m}_abs_err"]
    rate_rows = []
    for k in range(spec.K):
        row = [k + 1, est.rates[k], est.rate_se[k]]
        for m in methods:
            bk = solutions[m].beta[k]
            row += [bk, abs(bk - est.rates[k])]
        rate_rows.append(row)
    pair_header = ["i", "j", "sim_cov", "sim_cov_se"]
    for m in methods:
        pair_header += [f"{m}_cov", f"{m}_corr"]
    pair_rows = []
    for p, (i, j) in enumerate(est.cov_pairs):
        row = [i + 1, j + 1, est.covariances[p], est.covariance_se[p]]
        for m in methods:
            stats = {(s.i, s.j): s for s in solutions[m].pair_stats}
            s = stats.get((i, j)) or stats.get((j, i))
            row += [s.covariance if s else 0.0, s.correlation if s else 0.0]
        pair_rows.append(row)
    rates_csv = os.path.join(outdir, f"{name}_rates.csv")
    pairs_csv = os.path.join(outdir, f"{name}_pairs.csv")
    _write_csv(rates_csv, rate_header, rate_rows)
    _write_csv(pairs_csv, pair_header, pair_rows)
    _write_manifest(
        outdir,
        name,
        "compare",
        argv,
        [args.seed],
        {"csv": [f"{name}_rates.csv", f"{name}_pairs.csv"]},
        time.monotonic() - t0,
    )
    return 0


def cmd_replay(args, argv):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    replay_argv = list(manifest["argv"])
    if args.out:
        if "--out" in replay_argv:
            idx = replay_argv.index("--out")
            replay_argv[idx + 1] = args.out
        else:
            replay_argv += ["--out", args.out]
    return main(replay_argv)


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--name", default=None, help="basename for output files")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")


def _add_topology(p):
    p.add_argument("--network", default=None, help="network JSON file")
    p.add_argument("--partition", default=None, help="partition JSON file")
    p.add_argument("--tree", type=int, default=None, help="tree pair levels")
    p.add_argument("--tree-seed", type=int, default=0, help="tree weight seed")
    p.add_argument("--ring", type=int, default=None, help="ring size K")
    p.add_argument("--mu", type=float, default=1.0, help="ring coupling weight")
    p.add_argument("--reset", type=float, default=1.0, help="ring reset value")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lglpair",
        description="stationary rates and pair correlations of LGL spiking networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pair-exact", help="closed-form isolated pair")
    _add_common(p)
    p.add_argument("--r1", type=float, default=1.0)
    p.add_argument("--r2", type=float, default=1.0)
    p.add_argument("--b1", type=float, default=1.0)
    p.add_argument("--b2", type=float, default=1.0)
    p.add_argument("--mu12", type=float, default=1.0)
    p.add_argument("--mu21", type=float, default=1.0)
    p.add_argument("--sweep", type=int, default=None, help="grid size per axis")
    p.add_argument("--mu-max", type=float, default=10.0)
    p.add_argument("--fig2", action="store_true", help="40x40 unit-rate weight sweep")
    p.set_defaults(func=cmd_pair_exact)

    p = sub.add_parser("pair-solve", help="driven pair via the integral system")
    _add_common(p)
    p.add_argument("--r1", type=float, default=1.0)
    p.add_argument("--r2", type=float, default=1.0)
    p.add_argument("--b1", type=float, default=1.0)
    p.add_argument("--b2", type=float, default=1.0)
    p.add_argument("--mu12", type=float, default=0.0)
    p.add_argument("--mu21", type=float, default=0.0)
    p.add_argument(
        "--drive",
        action="append",
        help="upstream stream RATE:WEIGHT1:WEIGHT2 (repeatable)",
    )
    p.add_argument("--sweep", type=int, default=None, help="grid size per axis")
    p.add_argument("--rate-max", type=float, default=10.0)
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10000)
    for preset in FIG3_COUPLINGS:
        p.add_argument(
            f"--{preset}",
            action="store_true",
            help="two private + one shared unit-weight streams, "
            + {"fig3a": "no", "fig3b": "one-way", "fig3c": "mutual"}[preset]
            + " coupling",
        )
    p.set_defaults(func=cmd_pair_solve)

    p = sub.add_parser("simulate", help="exact event-driven simulation")
    _add_common(p)
    _add_topology(p)
    p.add_argument("--mode", default="original", help="original|first:M|pairs:M|allpair:M")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument(
        "--runs", type=int, default=1,
        help="independent runs at seeds seed..seed+runs-1, merged by inverse variance",
    )
    p.add_argument("--t-measure", type=float, default=1e4)
    p.add_argument("--t-warmup", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rmf", help="network self-consistency solve")
    _add_common(p)
    _add_topology(p)
    p.add_argument("--mode", default="first", help="first|pairs|allpair")
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--damping", type=float, default=0.5)
    p.set_defaults(func=cmd_rmf)

    p = sub.add_parser("compare", help="simulation vs consistency solvers")
    _add_common(p)
    _add_topology(p)
    p.add_argument("--methods", default="", help="comma list: first,pairs,allpair")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--t-measure", type=float, default=1e4)
    p.add_argument("--t-warmup", type=float, default=None)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--damping", type=float, default=0.5)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="re-run a manifest byte-identically")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="override output directory")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (LglError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
