"""Command-line interface: ``switchcert {certify,simulate,couple,wasserstein,example}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from switchcert.certify import certify_all, curvatures
from switchcert.coupling import (
    coupled_batch,
    couple_constant,
    couple_uniformized,
    dominating_batch,
    wasserstein_decay_curve,
)
from switchcert.examples import EXAMPLES, build_example
from switchcert.model import ConstantRates, SpecError, SwitchingSpec, dump_spec, load_spec, validate_spec
from switchcert.sim.engine import run_chunked
from switchcert.sim.paths import StartState, ThinningKernel, check_rate, simulate_path
from switchcert.transport import TransportCost, ot_exact, read_samples_csv

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_BAD_SPEC = 0, 1, 2


class _SpecProblem(Exception):
    pass


def _parse_vec(text: str | None, dim: int, default) -> np.ndarray:
    if text is None:
        return np.asarray(default, dtype=np.float64)
    v = np.array([float(t) for t in text.split(",")])
    if v.shape != (dim,):
        raise _SpecProblem(f"expected {dim} comma-separated values, got {text!r}")
    return v


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, end, steps = text.split(":")
        grid = np.linspace(float(start), float(end), int(steps) + 1)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be start:end:steps, got {text!r}") from None
    if int(steps) < 1 or float(end) <= float(start) or float(start) < 0:
        raise argparse.ArgumentTypeError("grid needs 0 <= start < end and steps >= 1")
    return grid


def _override_rates(spec: SwitchingSpec, args) -> SwitchingSpec:
    a1, am1, rate = getattr(args, "a1", None), getattr(args, "am1", None), getattr(args, "rate", None)
    if a1 is None and am1 is None and rate is None:
        return spec
    if not isinstance(spec.rates, ConstantRates):
        raise _SpecProblem("--a1/--am1/--rate only apply to constant-rate specs")
    c = np.array(spec.rates.c)
    if rate is not None:
        c = np.where(c > 0, float(rate), 0.0) if np.any(c > 0) else float(rate) * (1 - np.eye(len(c)))
    if a1 is not None or am1 is not None:
        labels = list(spec.labels or ())
        if spec.n_regimes != 2 or labels != ["-1", "1"]:
            raise _SpecProblem("--a1/--am1 need a two-regime spec labelled -1 and 1")
        if a1 is not None:
            c[1, 0] = float(a1)
        if am1 is not None:
            c[0, 1] = float(am1)
    return spec.replace(rates=ConstantRates(c))


def _load(args) -> SwitchingSpec:
    try:
        if getattr(args, "example", None):
            spec = build_example(args.example)
        elif getattr(args, "spec", None):
            spec = load_spec(args.spec)
        else:
            raise _SpecProblem("give a spec file or --example")
        spec = _override_rates(spec, args)
        validate_spec(spec)
        return spec
    except (SpecError, OSError, json.JSONDecodeError, ValueError) as err:
        raise _SpecProblem(str(err)) from err


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _start_points(spec: SwitchingSpec, args):
    e1 = np.zeros(spec.dim)
    e1[0] = 1.0
    x = _parse_vec(args.x0, spec.dim, spec.metric.x0 + e1)
    i = spec.n_regimes - 1 if args.i0 is None else args.i0
    return x, i


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_certify(args) -> int:
    spec = _load(args)
    partition = json.loads(args.partition) if args.partition else None
    report = validate_spec(spec)
    certs = certify_all(spec, partition)
    doc = {
        "spec": spec.name,
        "validation": report.to_dict(),
        "curvatures": curvatures(spec).to_dict(),
        "certificates": [c.to_dict() for c in certs],
        "any_pass": any(c.verdict for c in certs),
    }
    if args.format == "json":
        text = json.dumps(doc, indent=2) + "\n"
    else:
        lines = [f"spec: {spec.name}", f"a_bar = {report.a_bar:.10g}, kappa = {report.kappa:.10g}, irreducible = {report.irreducible}"]
        lines += [c.to_text() for c in certs]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK if doc["any_pass"] else EXIT_FAIL


def cmd_simulate(args) -> int:
    spec = _load(args)
    x, i = _start_points(spec, args)
    if args.paths == 1:
        traj = simulate_path(spec, x, i, args.T, args.seed, r=args.r, n_out=args.n_out)
        _emit(traj.to_csv(), args.out)
        sys.stderr.write(f"switches={traj.switch_count} first_exit={traj.first_exit} blown={traj.blown}\n")
        return EXIT_OK
    r = check_rate(spec, args.r)
    res = run_chunked(spec, ThinningKernel(spec, r), StartState(x, int(i)), args.paths, np.array([args.T]), args.seed, args.jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "t", "i"] + [f"x_{k + 1}" for k in range(spec.dim)])
    for p in range(res.n_paths):
        w.writerow([p, repr(float(args.T)), int(res.I[0, p])] + [repr(float(v)) for v in res.X[0, p]])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_couple(args) -> int:
    spec = _load(args)
    x, i = _start_points(spec, args)
    y = _parse_vec(args.y0, spec.dim, spec.metric.x0)
    j = 0 if args.j0 is None else args.j0
    grid = args.grid
    if args.mode == "dominating":
        res = dominating_batch(spec, None, x, i, grid, args.paths, args.seed, args.r, jobs=args.jobs)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mean_l", "mean_block", "frac_coincided"])
        block = np.zeros(spec.n_regimes, dtype=np.int64)
        for n, blk in enumerate(spec.partition):
            block[list(blk)] = n
        for g, t in enumerate(grid):
            coin = float(np.mean(res.t_coincide <= t))
            w.writerow([repr(float(t)), repr(float(res.L[g].mean())), repr(float(block[res.I[g]].mean())), repr(coin)])
        _emit(buf.getvalue(), args.out)
        sys.stderr.write(json.dumps({"dominance_violations": int(res.dominance_violations.sum())}) + "\n")
        return EXIT_OK
    if args.paths == 1:
        T = float(grid[-1])
        n_out = len(grid) - 1
        if args.mode == "constant":
            run = couple_constant(spec, x, y, i, j, T, args.seed, r=args.r, n_out=n_out)
        else:
            run = couple_uniformized(spec, x, y, i, j, T, args.r, args.seed, n_out=n_out)
        _emit(run.to_csv(spec), args.out)
        return EXIT_OK
    curve = wasserstein_decay_curve(
        spec, x, y, i, j, grid, args.paths, args.q, args.seed, mode=args.mode, r=args.r, delta=args.delta, jobs=args.jobs
    )
    _emit(curve.to_csv(), args.out)
    sys.stderr.write(json.dumps(curve.summary()) + "\n")
    return EXIT_OK


_COSTS = {"power": "power", "trunc-d": "trunc", "tilde": "tilde"}


def cmd_wasserstein(args) -> int:
    mu, nu = read_samples_csv(args.a), read_samples_csv(args.b)
    cost = TransportCost(_COSTS[args.cost], q=args.q, delta=args.delta)
    value, plan = ot_exact(mu, nu, cost)
    doc = {"cost": args.cost, "q": args.q, "value": value, "n_a": mu.size, "n_b": nu.size}
    if args.plan:
        rows, cols = np.nonzero(plan)
        with open(args.plan, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "mass"])
            for r, c in zip(rows, cols):
                w.writerow([int(r), int(c), repr(float(plan[r, c]))])
    _emit(json.dumps(doc) + "\n", args.out)
    return EXIT_OK


def cmd_example(args) -> int:
    spec = _override_rates(build_example(args.tag), args)
    validate_spec(spec)
    _emit(dump_spec(spec) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _spec_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("spec", nargs="?", help="JSON spec file")
    p.add_argument("--example", choices=sorted(EXAMPLES), help="use a built-in example instead of a file")
    _rate_args(p)


def _rate_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a1", type=float, help="rate out of regime '1' (two-regime specs labelled -1, 1)")
    p.add_argument("--am1", type=float, help="rate out of regime '-1'")
    p.add_argument("--rate", type=float, help="common value for every non-zero constant rate")


def _mc_args(p: argparse.ArgumentParser, paths: int) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--r", type=float, default=None, help="uniformization clock rate")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for Monte-Carlo batches")
    p.add_argument("--x0", help="initial state, comma separated")
    p.add_argument("--i0", type=int, help="initial regime index")
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="switchcert", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="validate a spec and evaluate every criterion")
    _spec_args(p)
    p.add_argument("--partition", help="JSON list of regime blocks, e.g. '[[1],[0]]'")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("simulate", help="simulate one path (CSV on a grid) or a sample cloud at time T")
    _spec_args(p)
    _mc_args(p, paths=1)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--n-out", type=int, default=200)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("couple", help="coupled runs and Wasserstein decay curves")
    _spec_args(p)
    _mc_args(p, paths=2000)
    p.add_argument("--mode", choices=("constant", "uniformized", "dominating"), default="constant")
    p.add_argument("--grid", type=_parse_grid, default=_parse_grid("0:20:40"))
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--y0", help="second initial state, comma separated")
    p.add_argument("--j0", type=int, help="second initial regime index")
    p.set_defaults(fn=cmd_couple)

    p = sub.add_parser("wasserstein", help="exact transport cost between two sample CSVs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--cost", choices=sorted(_COSTS), default="trunc-d")
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--plan", help="write the optimal plan to this CSV")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_wasserstein)

    p = sub.add_parser("example", help="write a built-in example spec as JSON")
    p.add_argument("tag", choices=sorted(EXAMPLES))
    _rate_args(p)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_example)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _SpecProblem as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_BAD_SPEC


if __name__ == "__main__":
    sys.exit(main())
