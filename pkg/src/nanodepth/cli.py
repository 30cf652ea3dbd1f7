"""Command-line entry point; machine-readable output lines start with ``#DATA ``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import arch
from .bench import bench
from .explorer import (
    ExplorerConfig,
    TOY_CONSTRAINTS,
    IndicatorConstraints,
    SearchSpace,
    load_space,
    search,
    write_results,
)
from .formats import PfmImage, read_pfm, read_ppm, write_pfm
from .metrics import KITTI_OPTIONS, NYU_OPTIONS, EvalOptions, eigen_crop, evaluate
from .netscore import BETA, GAMMA, KAPPA, NetScoreInputs, composite_accuracy, netscore
from .trainer import SceneConfig, fit_output_range, median_baseline_rmse, train
from .trainer.loop import holdout_set

NAMED_CONFIGS = {
    "nyu-default": lambda: arch.default_config("nyu"),
    "kitti-default": lambda: arch.default_config("kitti"),
    "minimal": arch.minimal_config,
    "reduced": arch.reduced_config,
}


class CliError(Exception):
    pass


def data(*fields) -> None:
    print("#DATA " + ",".join(str(f) for f in fields))


def resolve_config(name: str) -> arch.NetworkConfig:
    if name in NAMED_CONFIGS:
        return NAMED_CONFIGS[name]()
    if not os.path.exists(name):
        raise CliError(f"no config named {name!r} and no such file "
                       f"(named configs: {', '.join(NAMED_CONFIGS)})")
    return arch.load_config(name)


def load_or_init(graph, weights_path, seed):
    if weights_path:
        return arch.load_weights(graph, weights_path)
    return arch.init_weights(graph, seed)


def cmd_build(args):
    cfg = resolve_config(args.config)
    graph = arch.build_network(cfg)
    text = arch.dump_config(cfg)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    data("build", cfg.name or "-", len(graph.nodes), arch.count_params(graph),
         arch.count_macs(graph))


def cmd_count(args):
    cfg = resolve_config(args.config)
    graph = arch.build_network(cfg)
    if args.breakdown:
        for name, shape, p, m in arch.breakdown(graph):
            print(f"{name:<24} {'x'.join(map(str, shape)):>16} {p:>10} {m:>14}")
    p, m = arch.count_params(graph), arch.count_macs(graph)
    print(f"params={p} ({p / 1e6:.2f}M)")
    print(f"macs={m} ({m / 1e9:.2f}G)")
    data(p, m, f"{p / 1e6:.2f}", f"{m / 1e9:.2f}")


def cmd_infer(args):
    cfg = resolve_config(args.config)
    graph = arch.build_network(cfg)
    weights = load_or_init(graph, args.weights, args.seed)
    rgb = read_ppm(args.input)
    if rgb.shape[1:] != graph.input_shape:
        raise CliError(f"image is {rgb.shape[3]}x{rgb.shape[2]} but the network expects "
                       f"{graph.input_shape[2]}x{graph.input_shape[1]}")
    depth = arch.forward(graph, weights, rgb)
    write_pfm(args.output, PfmImage.from_tensor(depth))
    data("infer", depth.shape[3], depth.shape[2], f"{float(depth.min()):.6f}",
         f"{float(depth.max()):.6f}")


def eval_options(args, h, w) -> EvalOptions:
    base = {"nyu": NYU_OPTIONS, "kitti": KITTI_OPTIONS, "none": EvalOptions()}[args.dataset]
    lo, hi = base.depth_clamp
    if args.min_depth is not None:
        lo = args.min_depth
    if args.max_depth is not None:
        hi = args.max_depth
    crop = None
    if args.crop == "eigen":
        if args.dataset == "none":
            raise CliError("--crop eigen needs --dataset nyu or kitti")
        crop = eigen_crop(h, w, args.dataset)
    return EvalOptions(crop=crop, depth_clamp=(lo, hi), invalid_threshold=base.invalid_threshold)


def cmd_eval(args):
    pred, gt = read_pfm(args.pred), read_pfm(args.gt)
    if pred.channels != 1 or gt.channels != 1:
        raise CliError("eval expects single-channel (Pf) depth maps")
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise CliError(f"size mismatch: {pred.width}x{pred.height} vs {gt.width}x{gt.height}")
    report = evaluate(pred.to_tensor(), gt.to_tensor(), eval_options(args, gt.height, gt.width))
    sys.stdout.write(report.as_text())
    print(report.as_record())


def cmd_netscore(args):
    a = composite_accuracy(args.delta1, args.absrel)
    inputs = NetScoreInputs(a, args.params_m, args.macs_g,
                            args.kappa, args.beta, args.gamma)
    value = netscore(inputs)
    print(f"netscore={value:.6f}")
    data(f"{value:.12f}")


def cmd_search(args):
    if args.space:
        space, constraints = load_space(args.space)
    else:
        space, constraints = SearchSpace(), TOY_CONSTRAINTS
    if constraints is None:
        constraints = IndicatorConstraints()
    if args.delta1_min is not None or args.params_max is not None or args.macs_max is not None:
        base = constraints
        constraints = IndicatorConstraints(
            base.delta1_min if args.delta1_min is None else args.delta1_min,
            base.params_max if args.params_max is None else args.params_max,
            base.macs_max if args.macs_max is None else args.macs_max)
    cfg = ExplorerConfig(population=args.population, generations=args.generations,
                         mutation_rate=args.mutation_rate, seed=args.seed, mode=args.mode,
                         budget=args.budget, workers=args.workers)
    result = search(space, constraints, cfg)
    sys.stdout.write(result.table(args.top))
    if args.out:
        write_results(result, args.out, args.best_config)
    b = result.best
    if b is None:
        print("no feasible candidate found", file=sys.stderr)
        data("search", "infeasible", result.evaluations)
        return 3
    data("search", "ok", result.evaluations, b.index, "-".join(map(str, b.genome)), b.params,
         b.macs, f"{b.delta1:.6f}", f"{b.abs_rel:.6f}", f"{b.score:.6f}")


def cmd_train(args):
    scenes = SceneConfig(resolution=(args.height, args.width), seed=args.scene_seed)
    cfg = resolve_config(args.config)
    if tuple(cfg.input_hw) != scenes.resolution:
        raise CliError(f"config input {cfg.input_hw} does not match scene resolution "
                       f"{scenes.resolution}")
    if not args.keep_output_range:
        cfg = fit_output_range(cfg, scenes)
    graph = arch.build_network(cfg)
    weights = arch.load_weights(graph, args.weights) if args.weights else None
    result = train(graph, scenes, args.steps, batch=args.batch, seed=args.seed, weights=weights,
                   lr=args.lr, eval_every=args.eval_every, holdout=args.holdout,
                   run_dir=args.run_dir)
    for point in result.history:
        print(point.log_line())
    _, depth = holdout_set(scenes, args.holdout)
    print(f"median_baseline_rmse={median_baseline_rmse(depth):.6f}")
    print(result.final.metrics.as_record())


def cmd_bench(args):
    graph = arch.build_network(resolve_config(args.config))
    weights = load_or_init(graph, args.weights, args.seed)
    report = bench(graph, weights, iterations=args.iterations, warmup=args.warmup,
                   batch=args.batch, repeats=args.repeats, seed=args.seed)
    sys.stdout.write(report.as_text())
    data("bench", f"{report.images_per_second:.3f}", f"{report.wall_time:.3f}")


def cmd_gradcheck(args):
    from .verify import NETWORK_TOLERANCE, OP_TOLERANCE, check_network, check_ops

    failed = False
    for op, err in check_ops(args.cases, args.seed).items():
        ok = err <= OP_TOLERANCE
        failed |= not ok
        print(f"{op:<16} max_rel_err={err:.3e} {'ok' if ok else 'FAIL'}")
        data("gradcheck", op, f"{err:.6e}")
    if args.network_cases:
        err = check_network(args.network_cases, args.seed)
        ok = err <= NETWORK_TOLERANCE
        failed |= not ok
        print(f"{'network':<16} max_rel_err={err:.3e} {'ok' if ok else 'FAIL'}")
        data("gradcheck", "network", f"{err:.6e}")
    if failed:
        print("gradient check exceeded tolerance", file=sys.stderr)
        return 1


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nanodepth", description="Compact depth-estimation networks.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    config_help = f"named config ({', '.join(NAMED_CONFIGS)}) or config file path"

    s = sub.add_parser("build", help="validate a config and print it")
    s.add_argument("--config", required=True, help=config_help)
    s.add_argument("--out", help="write the config here instead of stdout")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("count", help="count parameters and MACs")
    s.add_argument("--config", required=True, help=config_help)
    s.add_argument("--breakdown", action="store_true", help="per-node table")
    s.set_defaults(func=cmd_count)

    s = sub.add_parser("infer", help="predict a PFM depth map from a PPM image")
    s.add_argument("--config", required=True, help=config_help)
    s.add_argument("--weights", help="NDNW checkpoint (default: seeded init)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="compare predicted and ground-truth PFM depth maps")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--dataset", choices=("nyu", "kitti", "none"), default="none")
    s.add_argument("--crop", choices=("eigen", "none"), default="none")
    s.add_argument("--min-depth", type=float)
    s.add_argument("--max-depth", type=float)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("netscore", help="score accuracy against size and compute")
    s.add_argument("--delta1", type=float, required=True)
    s.add_argument("--absrel", type=float, required=True)
    s.add_argument("--params-m", type=float, required=True)
    s.add_argument("--macs-g", type=float, required=True)
    s.add_argument("--kappa", type=float, default=KAPPA)
    s.add_argument("--beta", type=float, default=BETA)
    s.add_argument("--gamma", type=float, default=GAMMA)
    s.set_defaults(func=cmd_netscore)

    s = sub.add_parser("search", help="constrained evolutionary architecture search")
    s.add_argument("--space", help="nanodepth-space v1 file (default: built-in 64-point space "
                   "with delta1 >= 0.78 and <= 8000 params)")
    s.add_argument("--delta1-min", type=float)
    s.add_argument("--params-max", type=int)
    s.add_argument("--macs-max", type=int)
    s.add_argument("--population", type=int, default=8)
    s.add_argument("--generations", type=int, default=10)
    s.add_argument("--mutation-rate", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=("proxy", "train"), default="proxy")
    s.add_argument("--budget", type=int, default=200, help="training steps per candidate")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--top", type=int, default=10, help="rows of the ranking to print")
    s.add_argument("--out", help="write the full ranking table here")
    s.add_argument("--best-config", help="write the winning config here (needs --out)")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("train", help="train on synthetic scenes")
    s.add_argument("--config", default="reduced", help=config_help)
    s.add_argument("--weights", help="start from this checkpoint")
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--batch", type=int, default=8)
    s.add_argument("--lr", type=float, default=5e-5)
    s.add_argument("--seed", type=int, default=0, help="weight init seed")
    s.add_argument("--scene-seed", type=int, default=0)
    s.add_argument("--height", type=int, default=48)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--holdout", type=int, default=64)
    s.add_argument("--eval-every", type=int, default=0)
    s.add_argument("--run-dir", help="write config, checkpoint and logs here")
    s.add_argument("--keep-output-range", action="store_true",
                   help="keep the config's output scale/shift instead of fitting the scene range")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("bench", help="forward-pass throughput")
    s.add_argument("--config", required=True, help=config_help)
    s.add_argument("--weights")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iterations", type=int, default=10)
    s.add_argument("--warmup", type=int, default=2)
    s.add_argument("--batch", type=int, default=1)
    s.add_argument("--repeats", type=int, default=3)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    s.add_argument("--cases", type=int, default=100)
    s.add_argument("--network-cases", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)
    return p


def run_cli(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse has already printed usage
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(message)s")
    try:
        return args.func(args) or 0
    except (CliError, ValueError, OSError, arch.GraphError) as e:
        print(f"nanodepth {args.command}: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
