"""Command-line interface.

Subcommands
-----------
identify      probe a plant and write a measured steady-state operator
              (or, with --pd-with, a steady disturbance-response signal)
synthesize    build a controller from an operator file and signal specs
closed-loop   simulate a plant with a controller file and write traces
tune-epsilon  emit the gain-grid stability table as CSV
bench         run a bundled benchmark study end to end
"""

import argparse
import csv
import json
import sys

import numpy as np

from . import serialization
from .benchmarks import run_heat_suite, run_oscillator_suite
from .closed_loop import simulate_closed_loop, tune_epsilon
from .identification import IdentificationConfig, measure_P, measure_Pd_w
from .plant import EvolutionFamily
from .regulators import (FeedbackController, harmonic_band_indices,
                         synthesize_approx_robust, synthesize_feedforward,
                         synthesize_orp_feedback, synthesize_robust)
from .signals import SignalBasis


def _load_plant(args):
    plant = serialization.plant_from_config(args.plant)
    step = plant.tau / args.step_divisor
    return EvolutionFamily(plant, step=step)


def _cmd_identify(args):
    ev = _load_plant(args)
    basis = SignalBasis(ev.plant.tau, args.K, ev.plant.n_u)
    cfg = IdentificationConfig(settle_periods=args.settle, basis=basis)
    if args.pd_with:
        w = serialization.signal_from_spec(
            args.pd_with, SignalBasis(ev.plant.tau, args.K, ev.plant.n_w))
        sig = measure_Pd_w(ev, w, cfg)
        serialization.save_json(serialization.signal_to_dict(sig), args.out)
    else:
        op = measure_P(ev, cfg)
        serialization.save_json(serialization.operator_to_dict(op), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_synthesize(args):
    P = serialization.operator_from_dict(serialization.load_json(args.operator))
    y_ref = serialization.signal_from_spec(args.y_ref, P.out_basis)
    if args.mode == "feedforward":
        pd_w = None
        if args.pd_w:
            pd_w = serialization.signal_from_spec(args.pd_w, P.out_basis)
        ctrl = synthesize_feedforward(P, pd_w, y_ref)
        print(f"feedforward residual {ctrl.residual:.3e}")
    elif args.mode == "orp":
        yds = [serialization.signal_from_spec(p, P.out_basis)
               for p in args.pd_w_k]
        ctrl = synthesize_orp_feedback(P, yds, y_ref, args.epsilon)
        print(f"controller dimension {ctrl.dim}")
    elif args.mode == "robust":
        ctrl = synthesize_robust(P, epsilon=args.epsilon)
        print(f"controller dimension {ctrl.dim}, "
              f"loop abscissa {ctrl.loop_spectral_abscissa:.3f}")
    elif args.mode == "approx":
        idx = harmonic_band_indices(P.out_basis, args.yn_kmax)
        ctrl = synthesize_approx_robust(P, idx, args.epsilon)
        print(f"controller dimension {ctrl.dim}")
    else:
        raise ValueError(args.mode)
    serialization.save_json(serialization.controller_to_dict(ctrl), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_closed_loop(args):
    ev = _load_plant(args)
    ctrl = serialization.controller_from_dict(
        serialization.load_json(args.controller))
    basis = ctrl.y_basis if isinstance(ctrl, FeedbackController) else None
    y_ref = serialization.signal_from_spec(args.y_ref, basis)
    w = None
    if args.w_dist:
        w = serialization.signal_from_spec(
            args.w_dist, SignalBasis(ev.plant.tau, y_ref.basis.K,
                                     ev.plant.n_w))
    trace = simulate_closed_loop(ev, ctrl, y_ref, w_dist=w,
                                 n_periods=args.periods, record_trace=True)
    out = serialization.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "errors.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["period", "l2_error"])
        for n, e in enumerate(trace.per_period_errors):
            wr.writerow([n, f"{e:.12g}"])
    with open(out / "trace.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        ny = trace.outputs.shape[1]
        wr.writerow(["t"] + [f"y{i}" for i in range(ny)]
                    + [f"y_ref{i}" for i in range(ny)])
        stride = max(1, len(trace.times) // 4000)
        for k in range(0, len(trace.times), stride):
            wr.writerow([f"{trace.times[k]:.9g}"]
                        + [f"{v:.9g}" for v in np.atleast_1d(trace.outputs[k])]
                        + [f"{v:.9g}" for v in
                           np.atleast_1d(trace.references[k])])
    report = {
        "per_period_errors": [float(e) for e in trace.per_period_errors],
        "fitted_rate": trace.fitted_rate,
    }
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"wrote {out}/errors.csv, trace.csv, report.json")
    return 0


def _cmd_tune_epsilon(args):
    ev = _load_plant(args)
    P = serialization.operator_from_dict(serialization.load_json(args.operator))
    y_ref = serialization.signal_from_spec(args.y_ref, P.out_basis)
    grid = [float(e) for e in args.grid.split(",")]
    if args.mode == "approx":
        idx = harmonic_band_indices(P.out_basis, args.yn_kmax)
        family = lambda eps: synthesize_approx_robust(P, idx, eps)
    elif args.mode == "orp":
        yds = [serialization.signal_from_spec(p, P.out_basis)
               for p in args.pd_w_k]
        family = lambda eps: synthesize_orp_feedback(P, yds, y_ref, eps)
    else:
        raise ValueError(args.mode)
    result = tune_epsilon(ev, family, grid, im_cap=args.im_cap,
                          method="column_simulation")
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epsilon", "spectral_radius", "max_imag", "stable"])
        for row in result.table:
            wr.writerow([row["epsilon"], f"{row['spectral_radius']:.9g}",
                         f"{row['max_imag']:.9g}", int(row["stable"])])
    print(f"best epsilon {result.best_epsilon}; wrote {args.out}")
    return 0


def _cmd_bench(args):
    if args.benchmark == "oscillators":
        report = run_oscillator_suite(args.mode, epsilon=args.epsilon,
                                      out_dir=args.out_dir)
    elif args.benchmark == "heat2d":
        report = run_heat_suite(args.mode, epsilon=args.epsilon,
                                out_dir=args.out_dir)
    else:
        raise ValueError(args.benchmark)
    print(json.dumps(report.to_json_dict(), indent=2))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="perreg",
                                description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def add_plant_args(sp):
        sp.add_argument("--plant", required=True,
                        help="plant config JSON (builtin name or generic)")
        sp.add_argument("--step-divisor", type=int, default=4096,
                        help="integrator step = tau / divisor")

    sp = sub.add_parser("identify", help="measure a steady-state operator")
    add_plant_args(sp)
    sp.add_argument("--K", type=int, default=10, help="basis truncation order")
    sp.add_argument("--settle", type=int, default=10,
                    help="settle periods before the measurement window")
    sp.add_argument("--pd-with", default=None,
                    help="disturbance signal spec: measure its steady "
                         "response instead of the control operator")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_identify)

    sp = sub.add_parser("synthesize", help="build a controller file")
    sp.add_argument("--operator", required=True)
    sp.add_argument("--mode", required=True,
                    choices=["feedforward", "orp", "robust", "approx"])
    sp.add_argument("--y-ref", required=True, help="reference signal spec")
    sp.add_argument("--pd-w", default=None,
                    help="steady disturbance response (feedforward)")
    sp.add_argument("--pd-w-k", nargs="*", default=[],
                    help="steady responses of disturbance components (orp)")
    sp.add_argument("--epsilon", type=float, default=0.25)
    sp.add_argument("--yn-kmax", type=int, default=7,
                    help="retained harmonic band |k| <= kmax (approx)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_synthesize)

    sp = sub.add_parser("closed-loop", help="simulate plant + controller")
    add_plant_args(sp)
    sp.add_argument("--controller", required=True)
    sp.add_argument("--y-ref", required=True)
    sp.add_argument("--w-dist", default=None)
    sp.add_argument("--periods", type=int, default=20)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=_cmd_closed_loop)

    sp = sub.add_parser("tune-epsilon", help="gain-grid stability table")
    add_plant_args(sp)
    sp.add_argument("--operator", required=True)
    sp.add_argument("--mode", choices=["orp", "approx"], default="approx")
    sp.add_argument("--y-ref", required=True)
    sp.add_argument("--pd-w-k", nargs="*", default=[])
    sp.add_argument("--yn-kmax", type=int, default=7)
    sp.add_argument("--grid", default="0.05,0.1,0.2,0.35,0.5,0.8")
    sp.add_argument("--im-cap", type=float, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_tune_epsilon)

    sp = sub.add_parser("bench", help="run a bundled benchmark study")
    sp.add_argument("benchmark", choices=["oscillators", "heat2d"])
    sp.add_argument("--mode", required=True,
                    choices=["feedforward", "feedback", "approx_robust"])
    sp.add_argument("--epsilon", default=None,
                    help="gain; omit for the benchmark default, 'tune' for "
                         "a grid search")
    sp.add_argument("--out-dir", default=None)
    sp.set_defaults(func=_cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
