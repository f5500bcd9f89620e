"""Command-line entry point (``mplsqr``)."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

from . import advisor, diagnostics, experiment
from .problems import PROBLEMS, load_instance, make_instance, save_instance


def _blur_params(args):
    p = {}
    if getattr(args, "psf", None):
        p["psf"] = args.psf
    if getattr(args, "image", None):
        p["image"] = args.image
    return p or None


def _problem_args(p, required=True):
    p.add_argument("--problem", choices=PROBLEMS, required=required)
    p.add_argument("--n", type=int, help="unknowns (pixels for blur2d)")
    p.add_argument("--size", type=int, help="image side N for blur2d (sets n = N*N)")
    p.add_argument("--eps", type=float, help="noise level ||e|| / ||b_ex||")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--psf", choices=("gaussian", "disk"))
    p.add_argument("--image")


def _instance_from(args):
    if getattr(args, "instance", None):
        return load_instance(args.instance)
    n = args.n
    if args.size is not None:
        n = args.size**2
    if n is None or args.eps is None:
        raise SystemExit("--n (or --size) and --eps are required")
    return make_instance(args.problem, n, args.eps, args.seed, _blur_params(args))


def cmd_run(args) -> int:
    inst = load_instance(args.instance) if args.instance else None
    if args.config:
        cfg = experiment.load_config(args.config)
    elif args.preset:
        cfg = experiment.preset_config(args.preset, size=args.size, full=args.full)
    elif inst is not None:
        # the archive fixes the data; the config only labels the outputs
        cfg = experiment.ExperimentConfig(problem=inst.name, n=inst.n, eps=inst.eps,
                                          seed=inst.seed or 0)
        args.seed = cfg.seed
    else:
        if not args.problem or args.eps is None or (args.n is None and args.size is None):
            raise SystemExit("give --preset, --config, or --problem with --n/--size and --eps")
        n = args.size**2 if args.size is not None else args.n
        cfg = experiment.ExperimentConfig(problem=args.problem, n=n, eps=args.eps)
    over = {
        "seed": args.seed,
        "eps": args.eps if (args.preset or args.config) else None,
        "max_iter": args.max_iter,
        "tau": args.tau,
        "out_dir": args.out,
        "history": args.history,
        "workers": args.workers,
        "safety": args.safety,
    }
    if args.configs:
        over["configs"] = experiment.parse_configs(args.configs)
    if args.stop is not None:
        over["stop_rules"] = tuple(s for s in args.stop.split(",") if s)
    if args.no_reorth:
        over["reorth"] = False
    bp = _blur_params(args)
    if bp:
        over["blur_params"] = {**(cfg.blur_params or {}), **bp}
    cfg = experiment.with_overrides(cfg, **over)
    res = experiment.run_experiment(cfg, instance=inst)
    print(res.files["summary"].read_text(encoding="utf-8"), end="")
    print(f"outputs written to {Path(cfg.out_dir).resolve()}")
    return 0


def cmd_advise(args) -> int:
    if args.beta is not None:
        if args.m is None or args.eps is None or args.decay is None or args.decay_param is None:
            raise SystemExit("--beta needs --m, --eps, --decay and --decay-param")
        rep = advisor.advise(
            args.eps, args.m, args.beta, args.decay, args.decay_param,
            k_star=args.k_star, rho0=args.rho0, safety=args.safety, grid=args.grid,
        )
    else:
        inst = _instance_from(args)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            diag = diagnostics.picard_diagnostics(inst)
        rep = advisor.advise_from_diagnostics(diag, inst.eps, inst.m, safety=args.safety, grid=args.grid)
        print(f"problem {inst.name} n={inst.n} eps={inst.eps:g} seed={inst.seed}")
    print(rep.to_text())
    if args.json:
        Path(args.json).write_text(json.dumps(rep.to_record(), indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_diagnose(args) -> int:
    inst = _instance_from(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d = diagnostics.picard_diagnostics(inst)
    out = Path(args.out or f"{inst.name}_n{inst.n}_eps{inst.eps:.0e}_seed{inst.seed}_picard.csv")
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "sigma", "coef_exact", "coef_noisy"])
        for i, s, ce, cn in d.rows():
            w.writerow([i, format(s, experiment.NUM_FMT), format(ce, experiment.NUM_FMT),
                        format(cn, experiment.NUM_FMT)])
    print(f"problem {inst.name} n={inst.n} eps={inst.eps:g} seed={inst.seed}")
    print(f"k_star {d.k_star}  beta {d.beta_model:.4g}  rho0 {d.rho0:.4g}  "
          f"decay {d.decay_type.value} ({d.decay_param:.4g})  reliable {d.reliable}")
    print(f"Picard coefficients written to {out}")
    return 0


def cmd_dump(args) -> int:
    inst = _instance_from(args)
    path = save_instance(args.out, inst)
    print(f"instance written to {path}")
    return 0


def cmd_sweep(args) -> int:
    from .precision import PrecisionSpec

    inst = _instance_from(args)
    bits = [int(b) for b in args.bits.split(",")]
    rows = experiment.emulated_sweep(inst, bits, PrecisionSpec.parse(args.update), args.max_iter)
    out = Path(args.out or f"{inst.name}_n{inst.n}_eps{inst.eps:.0e}_seed{inst.seed}_sweep.csv")
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "unit", "k0", "RE"])
        for t, u, k0, re in rows:
            w.writerow([t, format(u, experiment.NUM_FMT), k0, format(re, experiment.NUM_FMT)])
    for t, u, k0, re in rows:
        print(f"t={t:2d}  u={u:.3e}  k0={k0:3d}  RE={re:.4f}")
    print(f"seed {inst.seed}; sweep written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mplsqr", description="Mixed-precision LSQR experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run d / s+d / s+s (or custom) configurations")
    p.add_argument("--preset", choices=sorted(experiment.PRESETS))
    p.add_argument("--config", help="JSON experiment configuration file")
    p.add_argument("--instance", help="replay a problem archive written by 'dump'")
    _problem_args(p, required=False)
    p.add_argument("--full", action="store_true", help="image presets at their original size")
    p.add_argument("--configs", help="e.g. d,s+d,s+s or lbl=emu16:f64")
    p.add_argument("--stop", help="comma-separated stop rules (dp, lcurve)")
    p.add_argument("--tau", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--history", choices=("full", "overshoot", "stop"))
    p.add_argument("--no-reorth", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--safety", type=float)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_run, seed=None)

    p = sub.add_parser("advise", help="precision advice for the bidiagonalization")
    _problem_args(p, required=False)
    p.add_argument("--m", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--rho0", type=float)
    p.add_argument("--decay", choices=[d.value for d in diagnostics.DecayType])
    p.add_argument("--decay-param", type=float)
    p.add_argument("--k-star", type=int)
    p.add_argument("--safety", type=float, default=advisor.DEFAULT_SAFETY)
    p.add_argument("--grid", type=lambda s: [int(t) for t in s.split(",")], help="emulated bits to consider")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_advise)

    p = sub.add_parser("diagnose", help="write Picard coefficients to CSV")
    _problem_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("dump", help="write a problem archive (.npz)")
    _problem_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("sweep", help="best RE versus emulated bidiagonalization precision")
    _problem_args(p)
    p.add_argument("--bits", default="10,14,18,22,26,30")
    p.add_argument("--update", default="f64")
    p.add_argument("--max-iter", type=int, default=40)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
