"""Command line entry point: ``evolba {attack,compare,gen-fractal,oracle-serve,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fractal, harness
from .attack import AttackConfig, load_config_file, run
from .baseline import BaConfig, run_ba
from .tensor import save_evb1, save_png


def _size(text: str) -> tuple[int, int]:
    w, _, h = text.lower().partition("x")
    return int(w), int(h)


def cmd_attack(args) -> int:
    raw = load_config_file(args.config) if args.config else {}
    ba_raw = raw.pop("ba", {})
    config = AttackConfig.from_dict(raw)
    if args.seed is not None:
        config.rng_seed = args.seed
    if args.budget is not None:
        config.budget = args.budget
    image = harness.resolve_image(args.image)
    oracle = harness.build_oracle(args.oracle, image)
    if args.algo == "ba":
        ae, trace = run_ba(image, oracle, config.budget, BaConfig.from_dict(ba_raw), seed=config.rng_seed)
    else:
        ae, trace = run(image, oracle, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    if ae is not None:
        save_png(out / "ae.png", ae)
        save_evb1(out / "ae.evb1", ae)
    summary = {
        "algo": args.algo,
        "oracle": args.oracle,
        "final_l2": trace.final_l2 if ae is not None else None,
        "queries_used": trace.queries_used,
        "seed": config.rng_seed,
        "config": config.to_dict() if args.algo == "evolba" else {"budget": config.budget, **BaConfig.from_dict(ba_raw).to_dict()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    if ae is None:
        print("no adversarial example found", file=sys.stderr)
        return 1
    print(f"final L2 {trace.final_l2:.6f} after {trace.queries_used} queries")
    return 0


def _print_table(report) -> None:
    for row in report.table():
        print(",".join(f"{c:.4f}" if isinstance(c, float) else str(c) for c in row))


def cmd_compare(args) -> int:
    spec = harness.ExperimentSpec.from_file(args.spec)
    report = harness.run_experiment(spec, args.out)
    _print_table(report)
    return 0


def cmd_report(args) -> int:
    checkpoints = [int(c) for c in args.checkpoints.split(",")]
    report = harness.report_from_dir(args.from_dir, checkpoints)
    _print_table(report)
    if args.write:
        report.write(args.from_dir)
    return 0


def cmd_gen_fractal(args) -> int:
    w, h = _size(args.size)
    img, _ = fractal.generate(args.seed, w, h, n_maps=args.n_maps, n_points=args.points)
    out = Path(args.out)
    stem = out.with_suffix("") if out.suffix.lower() in (".png", ".evb1") else out
    save_png(stem.with_suffix(".png"), img)
    save_evb1(stem.with_suffix(".evb1"), img)
    print(f"wrote {stem}.png and {stem}.evb1 (fill ratio {fractal.fill_ratio(img):.3f})")
    return 0


def cmd_oracle_serve(args) -> int:
    image = harness.resolve_image(args.image)
    spec = harness.parse_oracle_arg(args.oracle)
    if spec["kind"] == "remote":
        raise SystemExit("oracle-serve only serves analytic oracles")
    spec.update(json.loads(args.params))
    oracle = harness.build_oracle(spec, image)
    harness.serve_oracle(oracle, args.host, args.port, stdio=args.stdio)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evolba", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack one image")
    p.add_argument("--config", help="TOML or JSON attack config")
    p.add_argument("--image", required=True, help="PNG/EVB1 path or synthetic:SEED")
    p.add_argument("--oracle", required=True, help="linear | sphere | highfreq | remote:HOST:PORT")
    p.add_argument("--out", required=True)
    p.add_argument("--algo", choices=["evolba", "ba"], default="evolba")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("compare", help="run an experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="aggregate persisted traces")
    p.add_argument("--from", dest="from_dir", required=True)
    p.add_argument("--checkpoints", default=",".join(str(c) for c in harness.DEFAULT_CHECKPOINTS))
    p.add_argument("--write", action="store_true", help="also rewrite table.csv/report.json")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-fractal", help="render an IFS fractal")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-maps", type=int, default=3)
    p.add_argument("--size", default="32x32", help="WxH")
    p.add_argument("--points", type=int, default=fractal.DEFAULT_POINTS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_fractal)

    p = sub.add_parser("oracle-serve", help="serve an analytic oracle over the binary protocol")
    p.add_argument("--oracle", required=True, choices=["linear", "sphere", "highfreq"])
    p.add_argument("--image", required=True, help="image the oracle is positioned around")
    p.add_argument("--params", default="{}", help="JSON oracle parameters, e.g. '{\"distance\": 2}'")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9500)
    p.add_argument("--stdio", action="store_true", help="serve one session on stdin/stdout")
    p.set_defaults(func=cmd_oracle_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
