"""Command-line interface: generate instances, run experiments, fit traces.

Exit codes: 0 on success, 2 when an input gain/system is not Schur stable,
3 when an iteration fails to converge.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .errors import NoConvergence, NotSchurStable
from .model import LQRInstance


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="path to an instance JSON file")
    p.add_argument("--n", type=int, default=bench.DEFAULT_N, help="state dimension for random instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-rho", type=float, default=bench.DEFAULT_TARGET_RHO)
    p.add_argument("--clique", type=int, default=10, help="lollipop clique size")
    p.add_argument("--path-nodes", type=int, default=10, help="lollipop path length")
    p.add_argument("--damping", type=float, default=bench.DEFAULT_LOLLIPOP_DAMPING)
    p.add_argument("--lollipop", action="store_true", help="use the lollipop instance")
    p.add_argument("--pattern", help="path to a sparsity-pattern JSON file")
    p.add_argument("--sigma-scale", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lqrgrad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an instance")
    gen_sub = gen.add_subparsers(dest="gen_kind", required=True)
    gen_random = gen_sub.add_parser("random")
    gen_random.add_argument("--n", type=int, required=True)
    gen_random.add_argument("--seed", type=int, default=0)
    gen_random.add_argument("--target-rho", type=float, default=bench.DEFAULT_TARGET_RHO)
    gen_random.add_argument("--out", required=True, help="output instance JSON path")
    gen_lolli = gen_sub.add_parser("lollipop")
    gen_lolli.add_argument("--clique", type=int, default=10)
    gen_lolli.add_argument("--path-nodes", type=int, default=10)
    gen_lolli.add_argument("--damping", type=float, default=bench.DEFAULT_LOLLIPOP_DAMPING)
    gen_lolli.add_argument("--out", required=True, help="output directory")

    run = sub.add_parser("run", help="run an algorithm and export its trace")
    run.add_argument("algorithm", choices=bench.ALGORITHMS)
    _add_instance_flags(run)
    run.add_argument("--tol", type=float)
    run.add_argument("--max-iter", type=int)
    run.add_argument("--stepmode", choices=("fixed_L0", "per_iter_L"), default="fixed_L0")
    run.add_argument("--flow-kind", choices=("gradient", "natural", "quasi_newton"), default="gradient")
    run.add_argument("--gamma", type=float, default=1.0)
    run.add_argument("--t-end", type=float, default=50.0)
    run.add_argument("--v-target-rel", type=float, help="stop a flow once V <= rel * V(0)")
    run.add_argument("--out", default="runs", help="output directory")
    run.add_argument("--config", help="JSON config file overriding all flags")

    fit = sub.add_parser("fit", help="rate-fit an emitted trace CSV")
    fit.add_argument("trace", help="trace.csv path")
    fit.add_argument("--f-star", type=float, help="optimal value; omit to use the gap column")

    return parser


def _config_from_args(args) -> bench.ExperimentConfig:
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        data.setdefault("algorithm", args.algorithm)
        return bench.ExperimentConfig.from_dict(data)
    if args.instance:
        kind = "file"
    elif args.lollipop or args.algorithm == "pgd" and not args.instance:
        kind = "lollipop"
    else:
        kind = "random"
    return bench.ExperimentConfig(
        algorithm=args.algorithm,
        instance_kind=kind,
        n=args.n,
        seed=args.seed,
        target_rho=args.target_rho,
        clique=args.clique,
        path_nodes=args.path_nodes,
        damping=args.damping,
        instance_file=args.instance,
        pattern_file=args.pattern,
        sigma_scale=args.sigma_scale,
        tol=args.tol,
        max_iter=args.max_iter,
        stepmode=args.stepmode,
        flow_kind=args.flow_kind,
        gamma=args.gamma,
        t_end=args.t_end,
        v_target_rel=args.v_target_rel,
        output_dir=args.out,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            if args.gen_kind == "random":
                inst = bench.gen_random_instance(args.n, args.seed, args.target_rho)
                inst.save(args.out)
                print(args.out)
            else:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                inst, pattern = bench.gen_lollipop_instance(
                    args.clique, args.path_nodes, args.damping
                )
                inst.save(out / "instance.json")
                pattern.save(out / "pattern.json")
                print(out / "instance.json")
                print(out / "pattern.json")
        elif args.command == "run":
            artifact = bench.run(_config_from_args(args))
            print(artifact.trace_path)
            print(artifact.summary_path)
        else:
            result = bench.fit_trace_csv(args.trace, args.f_star)
            print(json.dumps(result, sort_keys=True))
    except NotSchurStable as exc:
        print(f"error: not Schur stable: {exc}", file=sys.stderr)
        return 2
    except NoConvergence as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
