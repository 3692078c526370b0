"""Command-line front end: verify / radial / profile / flow subcommands."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import fem, flow, harness, parallels
from .geometry import RobinPair, format_robin, load_domain, parse_robin
from .radial import RadialProblem, lambda1_radial, sigma_of


def _cmd_verify(args) -> int:
    config = harness.ExperimentConfig.from_json(args.config)
    if args.out:
        config.out_dir = args.out
    result = harness.run_rfk_suite(config)
    harness.write_outputs(result, config.out_dir)
    n_fail = result.persistent_failures
    print(f"{len(result.rows)} rows, {n_fail} persistent failures; "
          f"outputs in {config.out_dir}/")
    return 1 if n_fail else 0


def _cmd_radial(args) -> int:
    problem = RadialProblem(args.r, args.R, parse_robin(args.hin), parse_robin(args.hout))
    eigen = lambda1_radial(problem)
    sigma = ""
    if problem.robin.product_sign > 0:
        sigma = repr(float(sigma_of(eigen, problem)))
    with _OutStream(args.out) as f:
        writer = csv.writer(f)
        writer.writerow(["r", "R", "h_in", "h_out", "lambda1", "sigma"])
        writer.writerow([repr(float(args.r)), repr(float(args.R)), format_robin(problem.h_in),
                         format_robin(problem.h_out), repr(float(eigen.lambda1)), sigma])
    return 0


def _cmd_profile(args) -> int:
    domain = load_domain(args.domain)
    prof = parallels.level_lengths(domain, args.side, grid_n=args.grid)
    with _OutStream(args.out) as f:
        writer = csv.writer(f)
        if args.side == "inner":
            writer.writerow(["delta", "s", "S", "t", "T"])
            table = zip(prof.delta, prof.s, prof.S, prof.t, prof.T)
        else:
            writer.writerow(["delta", "s", "S", "l", "L"])
            table = zip(prof.delta, prof.s, prof.S, prof.l, prof.L)
        for row in table:
            writer.writerow([repr(float(x)) for x in row])
    if args.plot_parallels:
        harness.plot_domain_svg(args.plot_parallels, domain, profile=prof)
    return 0


def _cmd_flow(args) -> int:
    domain = load_domain(args.domain)
    robin = RobinPair(parse_robin(args.hin), parse_robin(args.hout))
    mesh = fem.build_mesh(domain, args.n_theta, args.n_radial)
    eigen = fem.solve(mesh, robin)
    if args.dump_field:
        fem.dump_field(mesh, eigen.u, args.dump_field)
    dec = flow.decompose(eigen, mesh, domain, grid_n=args.grid)
    with _OutStream(args.out) as f:
        writer = csv.writer(f)
        writer.writerow(["seed_x", "seed_y", "label"])
        names = {0: "outside", 1: "inner", 2: "outer", 3: "unresolved"}
        for i, x in enumerate(dec.xs):
            for j, y in enumerate(dec.ys):
                if dec.labels[i, j]:
                    writer.writerow([repr(float(x)), repr(float(y)),
                                     names[int(dec.labels[i, j])]])
    if args.plot_flow:
        harness.plot_domain_svg(args.plot_flow, domain, decomposition=dec)
    print(f"lambda1 = {eigen.lambda1!r}; basin areas {dec.area_in!r} / {dec.area_out!r}",
          file=sys.stderr)
    return 0


class _OutStream:
    """stdout passthrough or an owned file handle that closes on exit."""

    def __init__(self, path):
        self.own = bool(path) and path != "-"
        self.f = open(path, "w", newline="") if self.own else sys.stdout

    def __enter__(self):
        return self.f

    def __exit__(self, *exc):
        if self.own:
            self.f.close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rfk-lab",
        description="Verification runs for the reverse Faber-Krahn inequality "
                    "of the Robin Laplacian on doubly connected domains.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run a configured verification suite")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides config)")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("radial", help="first radial annulus eigenvalue")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--hin", required=True, help="Robin parameter or 'inf'")
    p.add_argument("--hout", required=True)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_radial)

    p = sub.add_parser("profile", help="interior-parallels level-length profile")
    p.add_argument("--domain", required=True, help="domain text file")
    p.add_argument("--side", choices=["inner", "outer"], default="inner")
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--plot-parallels", help="SVG overlay of level curves")
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("flow", help="gradient-flow basin decomposition")
    p.add_argument("--domain", required=True)
    p.add_argument("--hin", required=True)
    p.add_argument("--hout", required=True)
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--n-theta", type=int, default=128)
    p.add_argument("--n-radial", type=int, default=24)
    p.add_argument("--out", help="CSV of seed labels (default stdout)")
    p.add_argument("--plot-flow", help="SVG of basins and cut")
    p.add_argument("--dump-field", help="text dump of mesh and eigenfunction")
    p.set_defaults(func=_cmd_flow)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
