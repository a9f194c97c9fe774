"""Command-line entry point: ``leosplit <command> ...``.

Exit codes: 0 success, 1 operational error (bad file, bad arguments),
2 the scenario admits no feasible plan.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import codec, mask, profiles, sim, svg
from .delay import PlanError, plan_from_dict, plan_to_dict
from .optimizer import METHODS, BruteForceCapExceeded, solve
from .scenario import ScenarioError, load_scenario

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

SWEEP_PARAMS = {
    # parameter -> (CSV column name with unit, value parser)
    "s2g_rate": ("s2g_rate_bps", float),
    "resolution": ("resolution", str),
    "num_satellites": ("num_satellites", int),
    "model_scale": ("model_scale", str),
    "batch_count": ("batch_count", int),
}
BASELINES = tuple(m for m in METHODS if m != "brute_force")


class CliError(Exception):
    pass


# -- output helpers -----------------------------------------------------------


class Output:
    def __init__(self, root: str, fmt: str):
        self.root = Path(root)
        self.fmt = fmt

    def path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root / name

    def text(self, name: str, body: str) -> Path:
        p = self.path(name)
        p.write_text(body, encoding="utf-8", newline="\n")
        return p

    def csv(self, name: str, rows) -> None:
        if self.fmt in ("csv", "both"):
            buf = io.StringIO()
            csv.writer(buf, lineterminator="\n").writerows(rows)
            self.text(name, buf.getvalue())

    def svg(self, name: str, body: str) -> None:
        if self.fmt in ("svg", "both"):
            self.text(name, body)


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def _load_plan(path: str):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: not valid JSON ({e})") from e
    return plan_from_dict(doc)


# -- commands -------------------------------------------------------------------


def cmd_optimize(args, out: Output) -> int:
    scn = load_scenario(args.scenario)
    res = solve(scn, args.method)
    out.text(args.plan_name, _dump_json(res.to_dict()))
    if not res.feasible:
        print(f"{args.method}: no feasible plan (memory or accuracy constraints)")
        return EXIT_INFEASIBLE
    bd = res.breakdown
    print(f"method: {res.method}")
    if res.plan is not None:
        print(f"layer counts: {list(res.plan.layer_counts)}")
        print(f"compression ratios: {list(res.plan.compression_ratios)}")
    print(f"startup: {bd.startup:.6g} s, steady: {bd.steady:.6g} s, total: {bd.total:.6g} s")
    print(f"objective: {res.objective!r}, expansions: {res.expansions}")
    return EXIT_OK


def _sweep_variant(scn, param: str, value):
    if param == "s2g_rate":
        return replace(scn, links=replace(scn.links, s2g_rate=value, s2g_rate_profile=()))
    if param == "resolution":
        if value not in profiles.RESOLUTIONS:
            raise CliError(f"unknown resolution {value!r}; choose from {sorted(profiles.RESOLUTIONS)}")
        return profiles.with_resolution(scn, value)
    if param == "num_satellites":
        base = scn.compute_satellites
        if value < 1:
            raise CliError("num_satellites must be >= 1")
        return scn.with_compute_satellites([base[i % len(base)] for i in range(value)])
    if param == "model_scale":
        if value not in profiles.VIT_PRESETS:
            raise CliError(f"unknown model scale {value!r}; choose from {sorted(profiles.VIT_PRESETS)}")
        layers = profiles.vit_layers(value, scn.workload.batch_size)
        cal = replace(scn.calibration, mem_per_layer_bytes=None)
        return replace(scn, workload=replace(scn.workload, layers=layers), calibration=cal)
    if param == "batch_count":
        if value < 1:
            raise CliError("batch_count must be >= 1")
        return replace(scn, workload=replace(scn.workload, num_batches=value))
    raise CliError(f"unknown sweep parameter {param!r}")


def cmd_sweep(args, out: Output) -> int:
    scn = load_scenario(args.scenario)
    column, parse = SWEEP_PARAMS[args.param]
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise CliError("--values must list at least one value")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise CliError("--methods must list at least one method")
    for m in methods:
        if m not in METHODS:
            raise CliError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    try:
        parsed = [parse(v) for v in values]
    except ValueError as e:
        raise CliError(f"bad value for {args.param}: {e}") from e

    rows = [[column, "method", "total_delay_s", "comm_overhead_bits"]]
    delay = {m: [] for m in methods}
    bits = {m: [] for m in methods}
    for raw, value in zip(values, parsed):
        variant = _sweep_variant(scn, args.param, value)
        for m in methods:
            res = solve(variant, m)
            total = res.total if res.feasible else None
            comm = res.comm_bits if res.feasible else None
            delay[m].append(total)
            bits[m].append(comm)
            rows.append([raw, m, _num(total), _num(comm)])
            print(f"{args.param}={raw} {m}: " + (f"{total:.6g} s" if total is not None else "infeasible"))
    stem = f"sweep_{args.param}"
    out.csv(f"{stem}.csv", rows)
    out.svg(f"{stem}_delay.svg", svg.line_chart(values, delay, f"Total delay vs {args.param}", column, "total delay (s)"))
    out.svg(
        f"{stem}_comm.svg",
        svg.line_chart(values, bits, f"Communication overhead vs {args.param}", column, "bits over all links"),
    )
    return EXIT_OK


def cmd_codec_bench(args, out: Output) -> int:
    rng = np.random.default_rng(args.seed)
    if args.tensor:
        x = np.load(args.tensor)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3:
            raise CliError(f"{args.tensor}: expected an (n, s, d) or (s, d) array, got shape {x.shape}")
        x = x.astype(np.float32)
        _, s, d = x.shape
    else:
        s, d = args.shape
        x = rng.standard_normal((args.batch, s, d)).astype(np.float32)
    if args.mask_file:
        alpha, _ = mask.load_mask(args.mask_file)
        if alpha.shape != (s, d):
            raise CliError(f"mask shape {alpha.shape} does not match tensor shape {(s, d)}")
        m = mask.eval_mask(alpha)
        source = args.mask_file
    else:
        if not 0.0 < args.keep <= 1.0:
            raise CliError("--keep must lie in (0, 1]")
        m = codec.random_mask(s, d, args.keep, rng)
        source = f"random keep={args.keep}"
    r = codec.stage_ratios(x, m, args.bits)
    rows = [
        ["stage", "cumulative_ratio_x"],
        ["sparsify", repr(r["sparsify"])],
        ["sparsify+quantize", repr(r["quantize"])],
        ["sparsify+quantize+entropy", repr(r["entropy"])],
    ]
    out.csv("codec_bench.csv", rows)
    out.svg(
        "codec_bench.svg",
        svg.bar_chart(
            ["sparsify", "+quantize", "+entropy"],
            [r["sparsify"], r["quantize"], r["entropy"]],
            f"Compression ratio by stage ({args.bits}-bit)",
            "ratio (x)",
        ),
    )
    print(f"tensor {tuple(x.shape)}, mask {source}, kept {r['keep_fraction']:.4f}")
    print(f"sparsify: {r['sparsify']:.3f}x  +quantize: {r['quantize']:.3f}x  +entropy: {r['entropy']:.3f}x")
    print(f"entropy {r['entropy_bits_per_symbol']:.4f} bits/symbol, payload {r['payload_bits_per_symbol']:.4f}")
    return EXIT_OK


def _train_config(args) -> dict:
    cfg = {
        "s": 4, "d": 25, "informative_fraction": 0.2, "num_classes": 4,
        "n_train": 2000, "n_test": 1000,
        "epochs": mask.TOY_PARAMS.total_epochs, "lam": mask.TOY_PARAMS.lam,
        "tau0": mask.TOY_PARAMS.tau0, "tau_min": mask.TOY_PARAMS.tau_min,
        "lr": 0.5, "batch_size": 200,
    }  # fmt: skip
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as e:
            raise CliError(f"{args.config}: not valid JSON ({e})") from e
        unknown = set(user) - set(cfg) - {"seed"}
        if unknown:
            raise CliError(f"{args.config}: unknown keys {sorted(unknown)}")
        cfg.update(user)
    for key in ("epochs", "lam", "tau0", "tau_min", "lr"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    return cfg


def cmd_train_mask(args, out: Output) -> int:
    cfg = _train_config(args)
    if cfg["epochs"] < 0:
        raise CliError("epochs must be >= 0")
    task = mask.make_toy_task(
        cfg["s"], cfg["d"], cfg["informative_fraction"], cfg["num_classes"], cfg["n_train"], cfg["n_test"], args.seed
    )
    params = mask.MaskParams(cfg["tau0"], cfg["tau_min"], max(int(cfg["epochs"]), 1), cfg["lam"])
    res = mask.train_toy(task, params, epochs=int(cfg["epochs"]), lr=cfg["lr"], rng_seed=args.seed,
                         batch_size=cfg["batch_size"])  # fmt: skip
    mask.save_mask(out.path("mask_alpha.bin"), res.alpha, params)
    cols = ["epoch", "task_loss", "sparsity_loss", "keep_fraction", "toy_acc"]
    rows = [["epoch", "task_loss_nats", "sparsity_loss", "keep_fraction", "toy_acc_fraction"]]
    rows += [[h["epoch"]] + [repr(h[c]) for c in cols[1:]] for h in res.history]
    out.csv("mask_history.csv", rows)
    epochs = [h["epoch"] for h in res.history]
    out.svg(
        "mask_history.svg",
        svg.line_chart(
            epochs,
            {c: [h[c] for h in res.history] for c in ("keep_fraction", "toy_acc")},
            "Mask training",
            "epoch",
            "fraction",
        ),
    )
    last = res.history[-1]
    print(f"epochs: {last['epoch']}, keep fraction: {last['keep_fraction']:.4f}, toy accuracy: {last['toy_acc']:.4f}")
    return EXIT_OK


def _scenario_and_plan(args):
    scn = load_scenario(args.scenario)
    if args.plan:
        plan = _load_plan(args.plan)
        plan.validate(scn)
        return scn, plan
    res = solve(scn, "astar")
    if not res.feasible:
        return scn, None
    return scn, res.plan


def cmd_compare(args, out: Output) -> int:
    scn, plan = _scenario_and_plan(args)
    if plan is None:
        print("no feasible plan to compare")
        return EXIT_INFEASIBLE
    rep = sim.compare(scn, plan, args.buffer)
    out.text("compare.json", _dump_json({"plan": plan_to_dict(plan), **rep}))
    print(f"analytic total: {rep['analytic_total']!r} s")
    print(f"simulated total: {rep['sim_total']!r} s")
    print(f"rel_diff: {rep['rel_diff']!r}" + ("  (flagged)" if rep["flagged"] else ""))
    print(f"bottleneck stage: analytic {rep['bottleneck_stage_analytic']}, simulated {rep['bottleneck_stage_sim']}")
    return EXIT_OK


def cmd_simulate(args, out: Output) -> int:
    scn, plan = _scenario_and_plan(args)
    if plan is None:
        print("no feasible plan to simulate")
        return EXIT_INFEASIBLE
    trace = sim.simulate(scn, plan, args.buffer)
    if out.fmt in ("csv", "both"):
        out.text("trace.csv", trace.to_csv())
    out.svg("gantt.svg", svg.gantt(trace))
    print(trace.summary())
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------


def _shape(text: str) -> tuple[int, int]:
    try:
        s, d = (int(v) for v in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected S,D, got {text!r}") from e
    if s < 1 or d < 1:
        raise argparse.ArgumentTypeError("shape entries must be positive")
    return s, d


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (default 0)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default .)")
    common.add_argument("--format", choices=("csv", "svg", "both"), default=argparse.SUPPRESS,
                        help="which tables/figures to write (default both)")  # fmt: skip

    p = argparse.ArgumentParser(prog="leosplit", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", parents=[common], help="find split points and compression ratios")
    o.add_argument("scenario")
    o.add_argument("--method", choices=METHODS, default="astar")
    o.add_argument("--plan-name", default="plan.json", help="file name of the plan written under --out")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter across methods")
    s.add_argument("scenario")
    s.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    s.add_argument("--values", required=True, help="comma-separated values (rates in bit/s)")
    s.add_argument("--methods", default=",".join(BASELINES), help="comma-separated methods")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("codec-bench", parents=[common], help="per-stage compression ratios")
    c.add_argument("--tensor", help=".npy array of shape (n, s, d) or (s, d); default synthetic Gaussian")
    c.add_argument("--shape", type=_shape, default=(197, 768), help="S,D of the synthetic tensor")
    c.add_argument("--batch", type=int, default=16, help="samples in the synthetic tensor")
    c.add_argument("--mask-file", help="trained mask logits from train-mask")
    c.add_argument("--keep", type=float, default=0.2, help="kept fraction of a random mask")
    c.add_argument("--bits", type=int, default=8)
    c.set_defaults(func=cmd_codec_bench)

    t = sub.add_parser("train-mask", parents=[common], help="train a Gumbel mask on the toy task")
    t.add_argument("--config", help="JSON file overriding the toy defaults")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lam", type=float)
    t.add_argument("--tau0", type=float)
    t.add_argument("--tau-min", dest="tau_min", type=float)
    t.add_argument("--lr", type=float)
    t.set_defaults(func=cmd_train_mask)

    for name, func, helptext in (
        ("compare", cmd_compare, "analytic vs simulated delay"),
        ("simulate", cmd_simulate, "discrete-event trace and Gantt chart"),
    ):
        q = sub.add_parser(name, parents=[common], help=helptext)
        q.add_argument("scenario")
        q.add_argument("plan", nargs="?", help="plan JSON (default: run the optimizer)")
        q.add_argument("--buffer", type=int, default=None, help="bound on per-stage input buffers")
        q.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, default in (("seed", 0), ("out", "."), ("format", "both")):
        if not hasattr(args, key):
            setattr(args, key, default)
    out = Output(args.out, args.format)
    try:
        return args.func(args, out)
    except (CliError, ScenarioError, PlanError, BruteForceCapExceeded, mask.TrainingError, codec.CodecError) as e:
        print(f"leosplit {args.command}: {e}", file=sys.stderr)
    except OSError as e:
        print(f"leosplit {args.command}: {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
    except ValueError as e:
        print(f"leosplit {args.command}: {e}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
