"""Command-line entry point: reproducible verification and generation runs.

Precedence: command-line flags override run-config file values, which
override built-in defaults (the defaults reproduce the standard protocol:
T=10, c_T=1, p=0.05, PGD 20 x 0.01, 300 s complete-verifier timeout). The
fully resolved configuration, input digests, seed, and tool version are
embedded in every report as its manifest.

Exit codes: 0 all points decided, 2 some points Unknown, 1 error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .attack import AttackConfig, attack_index
from .bounds import METHODS, output_bounds
from .network import forward, load_network, save_network
from .pipeline import (
    make_attack_brick,
    make_bounds_brick,
    make_complete_brick,
    run_pipeline,
    summarize_report,
    write_histogram_csv,
)
from .solver.complete import SolverConfig
from .stability import (
    StabilityConfig,
    build_box,
    compute_deltas,
    config_from_dict,
    config_to_dict,
    load_property_config,
)
from .surrogates import (
    SurrogateSpec,
    generate_dataset,
    load_dataset_csv,
    random_network,
    train_surrogate,
    write_dataset_csv,
    write_training_log_csv,
)

_BRICK_NAMES = ("attack", "bounds", "complete")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("RELUSTAB_OUT", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_run_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _resolve(args, config: dict, key: str, default):
    """flag > config file > built-in default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def cmd_verify(args) -> int:
    config = _load_run_config(args.config)
    model_path = _resolve(args, config, "model", None)
    data_path = _resolve(args, config, "data", None)
    if not model_path or not data_path:
        print("error: --model and --data are required", file=sys.stderr)
        return 1

    bricks_arg = _resolve(args, config, "bricks", "attack,bounds,complete")
    if isinstance(bricks_arg, str):
        brick_names = [b.strip() for b in bricks_arg.split(",") if b.strip()]
    else:
        brick_names = list(bricks_arg)
    for name in brick_names:
        if name not in _BRICK_NAMES:
            print(f"error: unknown brick {name!r}", file=sys.stderr)
            return 1
    if not brick_names:
        print("error: empty brick list", file=sys.stderr)
        return 1

    prop_path = _resolve(args, config, "property", None)
    if prop_path:
        property_cfg = load_property_config(prop_path)
    elif "property_config" in config:
        property_cfg = config_from_dict(config["property_config"])
    else:
        property_cfg = StabilityConfig()

    attack_cfg = AttackConfig(**config.get("attack", {}))
    solver_kwargs = dict(config.get("solver", {}))
    timeout = _resolve(args, config, "timeout", None)
    if timeout is not None:
        solver_kwargs["timeout_s"] = None if timeout <= 0 else float(timeout)
    solver_cfg = SolverConfig(**solver_kwargs)
    bounds_method = _resolve(args, config, "brick_b_method", "best")
    seed = int(_resolve(args, config, "seed", 0))
    jobs = int(_resolve(args, config, "jobs", 1))

    model_path = Path(model_path)
    data_path = Path(data_path)
    for path, label in ((model_path, "model"), (data_path, "dataset")):
        if not path.exists():
            print(f"error: {label} file not found: {path}", file=sys.stderr)
            return 1

    try:
        net = load_network(model_path)
        dataset = load_dataset_csv(data_path)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if dataset.shape[1] != net.input_dim:
        print(
            f"error: dataset width {dataset.shape[1]} does not match "
            f"model input_dim {net.input_dim}",
            file=sys.stderr,
        )
        return 1

    resolved = {
        "model": str(model_path),
        "data": str(data_path),
        "bricks": brick_names,
        "property_config": config_to_dict(property_cfg),
        "attack": {
            "method": attack_cfg.method,
            "steps": attack_cfg.steps,
            "step_size": attack_cfg.step_size,
            "restarts": attack_cfg.restarts,
            "index_order": attack_cfg.index_order,
        },
        "solver": {
            "timeout_s": solver_cfg.timeout_s,
            "integrality_tol": solver_cfg.integrality_tol,
            "feasibility_tol": solver_cfg.feasibility_tol,
            "bounds_method": solver_cfg.bounds_method,
        },
        "brick_b_method": bounds_method,
        "seed": seed,
        "jobs": jobs,
    }
    manifest = {
        "tool_version": __version__,
        "resolved_config": resolved,
        "seed": seed,
        "input_digests": {
            "model": _sha256(model_path),
            "data": _sha256(data_path),
        },
        "timestamps": {"started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z")},
    }

    factories = {
        "attack": lambda: make_attack_brick(attack_cfg, property_cfg, seed=seed),
        "bounds": lambda: make_bounds_brick(property_cfg, method=bounds_method),
        "complete": lambda: make_complete_brick(solver_cfg, property_cfg),
    }
    bricks = [factories[name]() for name in brick_names]

    report = run_pipeline(net, dataset, bricks, jobs=jobs)
    manifest["timestamps"]["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    text, summary = summarize_report(report)
    doc = report.to_json_dict()
    doc["manifest"] = manifest

    out = _out_dir(args)
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    (out / "summary.txt").write_text(text + "\n")
    write_histogram_csv(report, out / "attack_histogram.csv")
    print(text)
    print(f"report: {out / 'report.json'}")

    totals = report.totals()
    return 2 if totals["unknown"] else 0


_PRESETS = ("rosenbrock", "braking", "random-shape")


def cmd_gen(args) -> int:
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else 0
    if args.spec:
        raw = json.loads(Path(args.spec).read_text())
        spec = SurrogateSpec(
            target=raw.get("target", "rosenbrock"),
            domain=np.array(raw["domain"]) if "domain" in raw else None,
            hidden=tuple(raw.get("hidden", (16, 16))),
            epochs=int(raw.get("epochs", 2000)),
            batch_size=int(raw.get("batch_size", 32)),
            learning_rate=float(raw.get("learning_rate", 0.05)),
            n_train=int(raw.get("n_train", 512)),
            seed=int(raw.get("seed", seed)),
        )
        preset = spec.target
    elif args.preset == "random-shape":
        if not args.dims:
            print("error: --dims required for random-shape", file=sys.stderr)
            return 1
        widths = tuple(int(w) for w in args.dims.split(","))
        net = random_network(widths, seed, weight_scale=args.weight_scale,
                             bias_scale=args.bias_scale)
        save_network(net, out / "model.json")
        rng = np.random.default_rng(seed + 1)
        points = rng.uniform(-1.0, 1.0, size=(args.points, widths[0]))
        write_dataset_csv(points, out / "dataset.csv")
        print(f"random net {'x'.join(map(str, widths))} -> {out / 'model.json'}")
        print(f"{args.points} test points -> {out / 'dataset.csv'}")
        return 0
    elif args.preset in ("rosenbrock", "braking"):
        spec = SurrogateSpec(
            target=args.preset,
            epochs=args.epochs if args.epochs is not None else 2000,
            seed=seed,
        )
        preset = args.preset
    else:
        print(f"error: unknown preset {args.preset!r}, expected {_PRESETS}", file=sys.stderr)
        return 1

    try:
        net, log, _ = train_surrogate(spec)
    except Exception as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return 1
    save_network(net, out / "model.json")
    xs, _ = generate_dataset(spec, args.points)
    write_dataset_csv(xs, out / "dataset.csv")
    write_training_log_csv(log, out / "training_log.csv")
    final = log[-1] if log else float("nan")
    print(f"{preset} surrogate ({spec.epochs} epochs, seed {spec.seed}) -> {out / 'model.json'}")
    print(f"final training MSE: {final:.6g}" if log else "no training (0 epochs)")
    return 0


def _load_point(args):
    net = load_network(args.model)
    data = load_dataset_csv(args.data)
    if not 0 <= args.point < len(data):
        raise ValueError(f"point index {args.point} out of range (dataset has {len(data)})")
    return net, data[args.point]


def cmd_bounds(args) -> int:
    try:
        net, x = _load_point(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    property_cfg = (
        load_property_config(args.property) if args.property else StabilityConfig()
    )
    box = build_box(x, property_cfg.input_tolerance, property_cfg.abs_floor)
    lo, hi = output_bounds(net, box, args.method)
    f_x = forward(net, x)
    deltas = compute_deltas(f_x, property_cfg)
    print(f"method: {args.method}")
    for i in range(net.output_dim):
        fits = deltas.lower[i] + f_x[i] <= lo[i] and hi[i] <= f_x[i] + deltas.upper[i]
        print(
            f"output {i}: [{lo[i]:.6g}, {hi[i]:.6g}]  f(x)={f_x[i]:.6g}  "
            f"allowed [{f_x[i] + deltas.lower[i]:.6g}, {f_x[i] + deltas.upper[i]:.6g}]"
            f"  {'ok' if fits else 'not certified'}"
        )
    if args.dump:
        from .bounds import interval_propagate, symbolic_propagate

        lb = (
            interval_propagate(net, box)
            if args.method == "interval"
            else symbolic_propagate(net, box)[0]
        )
        doc = {
            "pre_lower": [a.tolist() for a in lb.pre_lower],
            "pre_upper": [a.tolist() for a in lb.pre_upper],
            "post_lower": [a.tolist() for a in lb.post_lower],
            "post_upper": [a.tolist() for a in lb.post_upper],
        }
        Path(args.dump).write_text(json.dumps(doc, indent=2))
        print(f"bounds dump: {args.dump}")
    return 0


def cmd_attack(args) -> int:
    try:
        net, x = _load_point(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    property_cfg = (
        load_property_config(args.property) if args.property else StabilityConfig()
    )
    cfg = AttackConfig(steps=args.steps, step_size=args.step_size)
    f_x = forward(net, x)
    box = build_box(x, property_cfg.input_tolerance, property_cfg.abs_floor)
    deltas = compute_deltas(f_x, property_cfg)
    direction = 1.0 if args.direction == "+" else -1.0
    witness = attack_index(net, x, box, deltas, args.index, direction, cfg)
    if witness is None:
        print("no attack found")
        return 2
    dev = forward(net, witness)[args.index] - f_x[args.index]
    print(f"witness: {witness.tolist()}")
    print(f"output {args.index} deviation {dev:.6g} outside "
          f"[{deltas.lower[args.index]:.6g}, {deltas.upper[args.index]:.6g}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relustab",
        description="Local stability verification for dense ReLU regression networks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run a verification pipeline over a dataset")
    p_verify.add_argument("--model")
    p_verify.add_argument("--data")
    p_verify.add_argument("--property")
    p_verify.add_argument("--config", help="run-config JSON (flags override it)")
    p_verify.add_argument("--bricks", help="comma list from attack,bounds,complete")
    p_verify.add_argument("--brick-b-method", dest="brick_b_method", choices=METHODS)
    p_verify.add_argument("--timeout", type=float, help="complete-brick seconds per point (<=0: none)")
    p_verify.add_argument("--jobs", type=int)
    p_verify.add_argument("--seed", type=int)
    p_verify.add_argument("--out")
    p_verify.set_defaults(func=cmd_verify)

    p_gen = sub.add_parser("gen", help="generate a surrogate model and dataset")
    p_gen.add_argument("--preset", choices=_PRESETS, default="rosenbrock")
    p_gen.add_argument("--spec", help="surrogate spec JSON (overrides --preset)")
    p_gen.add_argument("--epochs", type=int)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--dims", help="comma widths for random-shape, e.g. 216,165,165,81")
    p_gen.add_argument("--weight-scale", type=float, default=1.0)
    p_gen.add_argument("--bias-scale", type=float, default=1.0)
    p_gen.add_argument("--points", type=int, default=100, help="test points to emit")
    p_gen.add_argument("--out")
    p_gen.set_defaults(func=cmd_gen)

    p_bounds = sub.add_parser("bounds", help="print output bounds for one point")
    p_bounds.add_argument("--model", required=True)
    p_bounds.add_argument("--data", required=True)
    p_bounds.add_argument("--point", type=int, default=0)
    p_bounds.add_argument("--method", choices=METHODS, default="best")
    p_bounds.add_argument("--property")
    p_bounds.add_argument("--dump", help="write per-layer bounds JSON here")
    p_bounds.set_defaults(func=cmd_bounds)

    p_attack = sub.add_parser("attack", help="attack one output of one point")
    p_attack.add_argument("--model", required=True)
    p_attack.add_argument("--data", required=True)
    p_attack.add_argument("--point", type=int, default=0)
    p_attack.add_argument("--index", type=int, required=True)
    p_attack.add_argument("--direction", choices=["+", "-"], default="+")
    p_attack.add_argument("--steps", type=int, default=20)
    p_attack.add_argument("--step-size", dest="step_size", type=float, default=0.01)
    p_attack.add_argument("--property")
    p_attack.set_defaults(func=cmd_attack)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a clean message, not a stack trace
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
