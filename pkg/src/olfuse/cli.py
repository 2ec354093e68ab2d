"""Command-line front end: ``plan``, ``cycles``, ``simulate`` and ``roofline``.

Exit status: 0 success, 1 usage or input error, 2 planning failure,
3 simulation contract violation. Reports go to ``--out`` when given, else
into ``$OLFUSE_REPORT_DIR`` when set, else to stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from .cost import CycleParams, cycles_for, dram_traffic, fused_ops, operational_intensity
from .errors import ContractError, NetworkError, OlfuseError, PlanningError, SimulationError
from .network import NetworkSpec, load_network
from .planner import FusionPlan, all_plans, plan_network, validate_plan
from .rasters import read_inputs, read_weights
from .simulator import random_images, random_weights, run_batch

REPORT_ENV = "OLFUSE_REPORT_DIR"

COLUMNS = ("network", "design", "mode", "Q", "region", "alpha", "H", "ST", "cycles",
           "duration_us", "ops", "gops", "oi_ops_per_byte", "end_savings")

EXIT_OK, EXIT_USAGE, EXIT_PLANNING, EXIT_SIMULATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _num(x) -> str:
    """Full-precision decimal text: integers stay integers, others use repr."""
    if x is None or x == "":
        return ""
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return str(x.numerator)
        return repr(float(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _row(**kw) -> dict:
    row = {c: "" for c in COLUMNS}
    for k, v in kw.items():
        if k not in row:
            raise KeyError(k)
        if isinstance(v, (tuple, list)):
            v = ";".join(str(i) for i in v)
        row[k] = _num(v)
    return row


def format_rows(rows, params: dict | None = None) -> str:
    buf = io.StringIO()
    if params:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in sorted(params.items())) + "\n")
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None, default_name: str) -> None:
    if out is None and os.environ.get(REPORT_ENV):
        out = str(Path(os.environ[REPORT_ENV]) / default_name)
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}", file=sys.stderr)


def _load_net(ref: str) -> NetworkSpec:
    try:
        return load_network(ref)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def _load_plan(args, net: NetworkSpec) -> FusionPlan:
    if args.plan:
        path = Path(args.plan)
        if not path.is_file():
            raise UsageError(f"plan file not found: {args.plan}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.plan}: not a JSON plan ({exc})") from None
        plan = FusionPlan.from_dict(data.get("plan", data))
        try:
            validate_plan(plan, net)
        except ContractError as exc:
            raise PlanningError(f"{args.plan}: {exc}") from None
        return plan
    if args.q is None:
        raise UsageError("give --plan FILE or --q Q [--region R]")
    return plan_network(net, args.q, args.region)


def _params(args) -> CycleParams:
    return CycleParams(delta_olm=args.dolm, delta_ola=args.dola, n=args.n, acc=args.acc,
                       mp=args.mp, freq_hz=args.freq)


def _plan_row(net, plan, report, traffic_n: int, mode="fused", end_savings=None) -> dict:
    traffic = dram_traffic(net, plan.q, plan, traffic_n)
    return _row(network=net.name, design=report.design.value, mode=mode, Q=plan.q,
                region=plan.region, alpha=plan.alpha, H=plan.tile_sizes, ST=plan.tile_strides,
                cycles=report.total_cycles, duration_us=report.duration_us, ops=report.ops,
                gops=report.performance_ops_per_s / 10 ** 9,
                oi_ops_per_byte=operational_intensity(report.ops, traffic),
                end_savings=end_savings)


# --- commands -------------------------------------------------------------------

def cmd_plan(args) -> int:
    net = _load_net(args.net)
    plan = plan_network(net, args.q, args.region)
    _emit(_dumps(plan.to_dict()), args.out, f"plan-{net.name}-q{plan.q}-r{plan.region}.json")
    return EXIT_OK


def cmd_cycles(args) -> int:
    net = _load_net(args.net)
    plan = _load_plan(args, net)
    params = _params(args)
    report = cycles_for(args.design, plan, net, params)
    row = _plan_row(net, plan, report, params.n)
    _emit(format_rows([row], params.as_dict()), args.out,
          f"cycles-{net.name}-{args.design}.csv")
    return EXIT_OK


def layerwise_cycles(net: NetworkSpec, q: int, design: str, params: CycleParams) -> int:
    """Every level run alone as a one-level pyramid on its smallest region."""
    total = 0
    for j in range(q):
        sub = net.sub(j, 1)
        total += cycles_for(design, plan_network(sub, 1), sub, params).total_cycles
    return total


def roofline_rows(net: NetworkSpec, q: int, design: str, params: CycleParams) -> list:
    rows = []
    ops = fused_ops(net, q)
    for plan in all_plans(net, q):
        rows.append(_plan_row(net, plan, cycles_for(design, plan, net, params), params.n))
    lw = layerwise_cycles(net, q, design, params)
    lw_traffic = dram_traffic(net, q, None, params.n)
    rows.append(_row(network=net.name, design=design, mode="layerwise", Q=q, cycles=lw,
                     duration_us=Fraction(lw * 10 ** 6, params.freq_hz), ops=ops,
                     gops=Fraction(ops * params.freq_hz, lw * 10 ** 9),
                     oi_ops_per_byte=operational_intensity(ops, lw_traffic)))
    return rows


def cmd_roofline(args) -> int:
    net = _load_net(args.net)
    params = _params(args)
    rows = roofline_rows(net, args.q, args.design, params)
    if len(rows) == 1:
        raise PlanningError(f"{net.name}: no admissible fused plan for Q={args.q}")
    _emit(format_rows(rows, params.as_dict()), args.out,
          f"roofline-{net.name}-q{args.q}-{args.design}.csv")
    return EXIT_OK


def _sim_data(args, net: NetworkSpec, plan: FusionPlan):
    n = args.n
    if args.input:
        if not Path(args.input).is_file():
            raise UsageError(f"input file not found: {args.input}")
        images, n_in = read_inputs(args.input)
        if n_in != n:
            raise UsageError(f"{args.input} has precision {n_in}, --n is {n}")
    else:
        images = random_images(net, args.images, n, args.seed)
    if args.weights:
        if not Path(args.weights).is_file():
            raise UsageError(f"weights file not found: {args.weights}")
        weights, n_w = read_weights(args.weights)
        if n_w != n:
            raise UsageError(f"{args.weights} has precision {n_w}, --n is {n}")
    else:
        weights = random_weights(net, plan.q, n, args.seed + 1)
    return images, weights


def cmd_simulate(args) -> int:
    net = _load_net(args.net)
    plan = _load_plan(args, net)
    params = _params(args)
    images, weights = _sim_data(args, net, plan)
    end_on = args.end == "on"
    _, report = run_batch(net, images, args.n, weights, plan, args.design, end_on,
                          args.emit, params, jobs=args.jobs)
    cyc = cycles_for(args.design, plan, net, params)
    row = _plan_row(net, plan, cyc, params.n, end_savings=report.savings_fraction)
    doc = {
        "params": {**params.as_dict(), "design": args.design, "end": args.end,
                   "emit": report.emit, "seed": None if args.input else args.seed,
                   "images": int(images.shape[0]), "input": args.input,
                   "weights": args.weights, "plan": plan.to_dict()},
        "report": report.to_dict(),
        "row": row,
    }
    _emit(_dumps(doc), args.out, f"simulate-{net.name}-{args.design}-end{args.end}.json")
    return EXIT_OK


# --- parser -----------------------------------------------------------------------

def _add_params(p):
    p.add_argument("--n", type=int, default=8, help="precision in bits (default 8)")
    p.add_argument("--dolm", type=int, default=2, help="online multiplier delay")
    p.add_argument("--dola", type=int, default=2, help="online adder delay")
    p.add_argument("--acc", type=int, default=1, help="DS-2 accumulator cycles")
    p.add_argument("--mp", type=int, default=2, help="max-pool cycles")
    p.add_argument("--freq", type=int, default=100_000_000, help="clock in Hz")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="olfuse", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version="olfuse 0.1.0")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="fusion plan for the first Q conv levels")
    p.add_argument("--net", required=True, help="bundled name or .net file")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--region", type=int, help="final output region side")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan, phase="plan")

    for name, func, help_ in (("cycles", cmd_cycles, "analytic cycle report"),
                              ("simulate", cmd_simulate, "digit-serial simulation")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--net", required=True)
        p.add_argument("--plan", help="plan JSON written by 'olfuse plan'")
        p.add_argument("--q", type=int, help="plan on the fly instead of --plan")
        p.add_argument("--region", type=int)
        p.add_argument("--design", choices=("ds1", "ds2"), default="ds1")
        _add_params(p)
        p.add_argument("--out")
        p.set_defaults(func=func, phase=name)
        if name == "simulate":
            p.add_argument("--end", choices=("on", "off"), default="on")
            src = p.add_mutually_exclusive_group()
            src.add_argument("--input", help="input raster")
            src.add_argument("--seed", type=int, default=0)
            p.add_argument("--images", type=int, default=1)
            p.add_argument("--weights", help="weights raster (default: seeded random)")
            p.add_argument("--emit", type=int, help="DS-1 product digits (default 2n)")
            p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("roofline", help="performance / intensity rows, fused and layerwise")
    p.add_argument("--net", required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--design", choices=("ds1", "ds2"), default="ds1")
    _add_params(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_roofline, phase="roofline")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        if getattr(args, "images", 1) < 1 or getattr(args, "jobs", 1) < 1:
            raise UsageError("--images and --jobs must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NetworkError as exc:
        print(f"error: network: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlanningError as exc:
        print(f"error: planning: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except SimulationError as exc:
        print(f"error: simulation: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except ContractError as exc:
        code = EXIT_SIMULATION if args.phase == "simulate" else EXIT_PLANNING
        print(f"error: {exc}", file=sys.stderr)
        return code
    except OlfuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION if args.phase == "simulate" else EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
