"""Command-line interface.

Subcommands: simulate, detect, calibrate, bench, estimate, reproduce.
``--config file.json`` supplies defaults for any long flag (explicit
flags still win).  Exit codes: 0 success (or no alarm), 2 alarm raised
by ``detect``, 1 error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from typing import Optional

import numpy as np

from . import __version__
from .bench import BenchSpec, DetectorSpec, arl_mc, calibrate_threshold, edd_mc
from .cusum import CusumConfig, cusum_run, cusum_truncated_run
from .detectors import WindowConfig, glr_run, score_run, shewhart_run
from .estimation import EmConfig, em_fit, fit_joint
from .io import (
    parse_events,
    parse_matrix,
    parse_model,
    write_events,
    write_manifest,
    write_matrix,
    write_model,
    write_trajectory,
)
from .models import ChangeSpec, HawkesModel, KernelSpec
from .simulate import SimConfig, simulate, simulate_with_change

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; 2 means alarm here
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="hawkscan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hawkscan {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    subs = {}

    p = subs["simulate"] = sub.add_parser("simulate")
    p.add_argument("--config")
    p.add_argument("--model", help="model file for the (pre-change) process")
    p.add_argument("--post", help="post-change model file (with --kappa)")
    p.add_argument("--kappa", type=float, help="change time")
    p.add_argument("--horizon", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="event CSV to write")

    p = subs["detect"] = sub.add_parser("detect")
    p.add_argument("--config")
    p.add_argument("--method", choices=("cusum", "score", "glr", "shewhart"), default="cusum")
    p.add_argument("--pre", help="pre-change model file")
    p.add_argument("--post", help="post-change model file (cusum)")
    p.add_argument("--events", help="event CSV")
    p.add_argument("--b", type=float, help="alarm threshold")
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--truncation", type=float, help="history truncation B (cusum)")
    p.add_argument("--window", type=float, default=60.0, help="window length w")
    p.add_argument("--fisher", help="Fisher information CSV (score)")
    p.add_argument("--ridge", type=float, default=0.0, help="ridge added to the Fisher matrix")
    p.add_argument("--b1", type=float, default=0.0, help="Shewhart lower band edge")
    p.add_argument("--b2", type=float, help="Shewhart upper band edge")
    p.add_argument("--emit-trajectory", help="write the statistic trajectory CSV here")

    p = subs["calibrate"] = sub.add_parser("calibrate")
    p.add_argument("--config")
    p.add_argument("--method", choices=("cusum", "score", "glr", "shewhart"), default="cusum")
    p.add_argument("--pre")
    p.add_argument("--post")
    p.add_argument("--fisher")
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--target-arl", type=float, default=500.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--window", type=float, default=60.0)
    p.add_argument("--truncation", type=float)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)

    p = subs["bench"] = sub.add_parser("bench")
    p.add_argument("--config")
    p.add_argument("--mode", choices=("arl", "edd"), default="arl")
    p.add_argument("--method", choices=("cusum", "score", "glr", "shewhart"), default="cusum")
    p.add_argument("--pre")
    p.add_argument("--post")
    p.add_argument("--fisher")
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--b", type=float)
    p.add_argument("--b1", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--window", type=float, default=60.0)
    p.add_argument("--truncation", type=float)
    p.add_argument("--kappa", type=float, help="change time (edd mode)")
    p.add_argument("--kappa-policy", choices=("fixed", "uniform-in-grid-cell"), default="fixed")
    p.add_argument("--max-time", type=float, help="censoring cap")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="per-rep record CSV")

    p = subs["estimate"] = sub.add_parser("estimate")
    p.add_argument("--config")
    p.add_argument("--events")
    p.add_argument("--window", help="fit window as 'a,b'")
    p.add_argument("--kernel-beta", type=float)
    p.add_argument("--fit-mu", action="store_true")
    p.add_argument("--out", help="model file to write")

    p = subs["reproduce"] = sub.add_parser("reproduce")
    p.add_argument("--config")
    p.add_argument("--experiment", choices=(
        "fig2-truncation", "fig3-trajectories", "fig4-arl-edd",
        "fig5-misspec", "fig6-gridsize", "sec7-neuro-replica",
    ))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--outdir", default=".")
    p.add_argument("--workers", type=int, default=1)

    return parser, subs


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) is None]
    if missing:
        raise SystemExit(
            f"error: missing required flag(s): {', '.join('--' + n for n in missing)}"
        )


def _load_fisher(args):
    i0 = parse_matrix(args.fisher)
    if args.ridge:
        i0 = i0 + args.ridge * np.eye(i0.shape[0])
    return i0


def _cmd_simulate(args) -> int:
    _require(args, "model", "horizon", "out")
    pre = parse_model(args.model)
    cfg = SimConfig(horizon=args.horizon, seed=args.seed)
    if args.post is not None:
        _require(args, "kappa")
        ev = simulate_with_change(ChangeSpec(pre, parse_model(args.post), args.kappa), cfg)
    else:
        ev = simulate(pre, cfg)
    write_events(ev, args.out)
    print(f"wrote {len(ev)} events on [0, {args.horizon}] to {args.out}")
    return 0


def _cmd_detect(args) -> int:
    _require(args, "events")
    if args.method == "shewhart":
        b2 = args.b2 if args.b2 is not None else args.b
        if b2 is None:
            raise SystemExit("error: shewhart needs --b2 (or --b)")
        events = parse_events(args.events)
        out = shewhart_run(events, WindowConfig(w=args.window, gamma=args.gamma, b=b2, b1=args.b1))
    else:
        _require(args, "pre", "b")
        pre = parse_model(args.pre)
        events = parse_events(args.events, d=pre.d)
        if args.method == "cusum":
            _require(args, "post")
            post = parse_model(args.post)
            cfg = CusumConfig(b=args.b, gamma=args.gamma, B=args.truncation)
            runner = cusum_run if args.truncation is None else cusum_truncated_run
            out = runner(pre, post, events, cfg)
        elif args.method == "score":
            _require(args, "fisher")
            wcfg = WindowConfig(w=args.window, gamma=args.gamma, b=args.b)
            out = score_run(pre, _load_fisher(args), events, wcfg)
        else:
            wcfg = WindowConfig(w=args.window, gamma=args.gamma, b=args.b)
            out = glr_run(pre, events, wcfg, EmConfig())
    if args.emit_trajectory:
        write_trajectory(out, args.emit_trajectory)
    if out.alarmed:
        print(f"ALARM at T={out.T:.6g} tau_hat={out.tau_hat:.6g} "
              f"after {out.events_seen} events")
        return 2
    print(f"no alarm by t={out.T:.6g} ({out.events_seen} events)")
    return 0


def _detector_spec(args, need_b: bool) -> DetectorSpec:
    pre = parse_model(args.pre)
    post = parse_model(args.post) if args.post else None
    i0 = _load_fisher(args) if getattr(args, "fisher", None) else None
    b = args.b if need_b and args.b is not None else np.inf
    return DetectorSpec(
        method=args.method,
        pre=pre,
        post=post,
        i0=i0,
        b=b,
        b1=args.b1 if hasattr(args, "b1") else 0.0,
        gamma=args.gamma,
        w=args.window,
        B=getattr(args, "truncation", None),
    )


def _cmd_calibrate(args) -> int:
    _require(args, "pre")
    args.b = None
    args.b1 = 0.0
    det = _detector_spec(args, need_b=False)
    b = calibrate_threshold(
        det, target_arl=args.target_arl, seed=args.seed,
        reps=args.reps, workers=args.workers,
    )
    print(f"{b:.6g}")
    return 0


def _cmd_bench(args) -> int:
    _require(args, "pre")
    det = _detector_spec(args, need_b=True)
    max_time = args.max_time
    if args.mode == "arl":
        if max_time is None:
            raise SystemExit("error: --max-time is required for ARL runs")
        res = arl_mc(det, reps=args.reps, seed=args.seed, max_time=max_time, workers=args.workers)
        print(f"ARL {res.arl:.2f} +- {res.arl_stderr:.2f} "
              f"(censored {100 * res.censored_frac:.1f}%) flags={list(res.flags)}")
    else:
        _require(args, "post", "kappa")
        if max_time is None:
            raise SystemExit("error: --max-time is required for EDD runs")
        if not np.isfinite(det.max_time):
            det = dataclasses.replace(det, max_time=max_time)
        change = ChangeSpec(det.pre, det.post, args.kappa)
        spec = BenchSpec(
            detector=det, change=change, reps=args.reps, seed=args.seed,
            kappa_policy=args.kappa_policy, workers=args.workers,
        )
        res = edd_mc(det, spec)
        print(f"EDD {res.edd:.2f} +- {res.edd_stderr:.2f} "
              f"(false pre-kappa {100 * res.false_frac:.1f}%, n={res.n_edd}) "
              f"flags={list(res.flags)}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("rep,seed,kappa,T,alarmed,censored,events_seen\n")
            for r in res.records:
                fh.write(f"{r.rep},{r.seed},{r.kappa:.17g},{r.T:.17g},"
                         f"{int(r.alarmed)},{int(r.censored)},{r.events_seen}\n")
        write_manifest(args.out + ".manifest.json", args.seed, {
            k: v for k, v in vars(args).items() if k != "config"
        })
    return 0


def _cmd_estimate(args) -> int:
    _require(args, "events", "window", "kernel-beta", "out")
    try:
        a, b = (float(x) for x in args.window.split(","))
    except ValueError:
        raise SystemExit("error: --window expects 'a,b'")
    events = parse_events(args.events)
    kern = KernelSpec(family="exponential", beta=args.kernel_beta)
    if args.fit_mu:
        fit = fit_joint(events, (a, b), kern, EmConfig(), d=events.d)
    else:
        counts = np.bincount(
            events.nodes[(events.times > a) & (events.times <= b)], minlength=events.d
        )
        mu = np.maximum(counts / (b - a), 1e-6)
        fit = em_fit(events, (a, b), kern, mu, EmConfig())
    model = HawkesModel(mu=fit.mu_hat, A=fit.a_hat, kernel=kern)
    write_model(model, args.out)
    state = "converged" if fit.converged else f"max_iter hit ({fit.n_iter} iterations)"
    print(f"wrote {args.out}: ll={fit.ll:.4f}, {state}")
    return 0


def _cmd_reproduce(args) -> int:
    _require(args, "experiment")
    from .experiments import reproduce

    paths = reproduce(args.experiment, seed=args.seed, scale=args.scale,
                      outdir=args.outdir, workers=args.workers)
    for p in paths:
        print(p)
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "detect": _cmd_detect,
    "calibrate": _cmd_calibrate,
    "bench": _cmd_bench,
    "estimate": _cmd_estimate,
    "reproduce": _cmd_reproduce,
}


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        scout = argparse.ArgumentParser(add_help=False)
        scout.add_argument("--config")
        ns, _ = scout.parse_known_args(argv)
        parser, subs = _build_parser()
        if ns.config:
            with open(ns.config) as fh:
                config = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
            for sp in subs.values():
                dests = {a.dest for a in sp._actions}
                sp.set_defaults(**{k: v for k, v in config.items() if k in dests})
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        return _HANDLERS[args.command](args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            sys.stderr.write(exc.code + "\n")
            return 1
        return exc.code if exc.code is not None else 0
    except (ValueError, OSError, RuntimeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
