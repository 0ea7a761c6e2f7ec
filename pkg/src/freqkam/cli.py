"""Command-line surface: verify, run, sweep, corpus, phi.

Exit codes: 0 for success, 1 for a verified negative outcome (a
hypothesis that fails, a translation with no root, a catalogue
mismatch), 2 for configuration or internal errors. Verified negatives
are results, not crashes; they still emit a full JSON document.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time

import numpy as np

from . import __version__
from .conditions import (controllability_integral, estimate_phi,
                         estimate_semi_norm, interiority_report,
                         make_omega_evaluator, make_p_evaluator)
from .config import load_config
from .diophantine import certify, tau_floor
from .engine import family_sweep, run as engine_run
from .errors import ConfigError, DegenerateImage, ExprError, FreqKamError
from .report import dumps_json, phi_csv, render_report, run_id, write_run


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="freqkam",
        description="Frequency-preserving KAM runs from TOML configs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="path to a TOML run config")
        p.add_argument("--epsilon", type=float, default=None,
                       help="override the config's perturbation size")
        p.add_argument("--max-steps", type=int, default=None)
        p.add_argument("--mode", choices=("paper", "practical"),
                       default=None)
        p.add_argument("--seed", type=int, default=None,
                       help="sampling seed for the sup estimators")
        p.add_argument("--deterministic", action="store_true",
                       help="seed 0, zeroed wall clock, stable output")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="also write report files under DIR")
        return p

    common(sub.add_parser("verify", help="check the hypotheses only"))
    common(sub.add_parser("run", help="full iteration with translation"))
    sweep = common(sub.add_parser("sweep", help="family sweep over seeds"))
    sweep.add_argument("--grid", type=int, default=10,
                       help="grid points per parameter dimension")
    sweep.add_argument("--margin", type=float, default=1e-3,
                       help="boundary margin excluded from the grid")
    cat = common(sub.add_parser("corpus", help="verify catalogue entries"),
                 config=False)
    cat.add_argument("--id", default=None, help="single entry id")
    common(sub.add_parser("phi", help="controllability profile CSV"))
    return parser


def _effective_seed(args, cfg=None):
    if args.deterministic:
        return 0
    if args.seed is not None:
        return args.seed
    return cfg.seed if cfg is not None else 0


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if args.epsilon is not None:
        changes["epsilon"] = float(args.epsilon)
    if args.max_steps is not None:
        changes["max_steps"] = args.max_steps
    if args.mode is not None:
        changes["mode"] = args.mode
    seed = _effective_seed(args, cfg)
    changes["seed"] = seed
    return dataclasses.replace(cfg, **changes), seed


def _emit(doc, args, cfg=None, report=None):
    sys.stdout.write(dumps_json(doc))
    if args.out and report is not None:
        write_run(args.out, cfg, report,
                  deterministic=args.deterministic,
                  seed=doc.get("seed", 0),
                  wall_clock=doc.get("wall_clock_seconds", 0.0))


def _condition_doc(cfg, seed):
    system = cfg.system()
    vbox = cfg.neighborhood
    omega_eval = make_omega_evaluator(system.omega_trees,
                                      system.param_names)
    omega0 = np.asarray(omega_eval(system.xi0.reshape(1, -1))).ravel()

    interior = interiority_report(omega_eval, cfg.box, system.xi0)
    cert = certify(omega0, gamma=cfg.gamma if cfg.gamma is not None
                   else 1e-6,
                   tau=cfg.tau if cfg.tau is not None
                   else tau_floor(system.n) + 0.2, k_max=40)
    h1_ok = bool(interior.point_interior and cert.gamma_star > 1e-9)

    p_eval = make_p_evaluator(system.p_tree, system.n, system.param_names,
                              s=cfg.s_base, seed=seed)
    try:
        est = estimate_semi_norm(p_eval, omega_eval, vbox, seed=seed)
        h2_verdict = est.verdict
        h2_detail = {"value": float(est.value)}
    except DegenerateImage as exc:
        h2_verdict = "undefined"
        h2_detail = {"mechanism": "degenerate_image", "message": str(exc)}

    profile = estimate_phi(omega_eval, vbox, seed=seed)
    integral = controllability_integral(profile=profile)

    return {
        "h1": {"verdict": "holds" if h1_ok else "fails",
               "point_interior": bool(interior.point_interior),
               "point_margin": float(interior.point_margin),
               "image_interior": bool(interior.image_interior),
               "diophantine_gamma_star": float(cert.gamma_star)},
        "h2": {"verdict": h2_verdict, **h2_detail},
        "h3": {"verdict": ("convergent" if integral.convergent
                           else "divergent"),
               **integral.as_dict()},
    }, h1_ok, h2_verdict, integral.convergent


def _cmd_verify(args):
    cfg, seed = _load(args)
    doc_body, h1_ok, h2_verdict, h3_ok = _condition_doc(cfg, seed)
    doc = {"tool_version": __version__, "command": "verify",
           "run_id": run_id(cfg), "seed": seed,
           "deterministic": bool(args.deterministic),
           "conditions": doc_body}
    _emit(doc, args)
    ok = h1_ok and h2_verdict == "holds" and h3_ok
    return 0 if ok else 1


def _cmd_run(args):
    cfg, seed = _load(args)
    system = cfg.system()
    t0 = time.perf_counter()
    try:
        report = engine_run(system, cfg.epsilon, **cfg.run_kwargs())
    except FreqKamError as exc:
        doc = {"tool_version": __version__, "command": "run",
               "run_id": run_id(cfg), "seed": seed,
               "deterministic": bool(args.deterministic),
               "outcome": {"error": type(exc).__name__,
                           "message": str(exc)}}
        _emit(doc, args)
        return 1
    wall = 0.0 if args.deterministic else time.perf_counter() - t0
    doc = render_report(report, cfg, deterministic=args.deterministic,
                        wall_clock=wall, seed=seed,
                        extra={"command": "run"})
    _emit(doc, args, cfg=cfg, report=report)
    return 0 if report.converged else 1


def _grid_targets(box, per_dim, margin):
    axes = [np.linspace(lo + margin, hi - margin, per_dim)
            for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _cmd_sweep(args):
    cfg, seed = _load(args)
    system = cfg.system()
    targets = _grid_targets(cfg.box, args.grid, args.margin)
    t0 = time.perf_counter()
    sweep = family_sweep(system, targets, cfg.epsilon, **cfg.run_kwargs())
    wall = 0.0 if args.deterministic else time.perf_counter() - t0
    doc = render_report(sweep, cfg, deterministic=args.deterministic,
                        wall_clock=wall, seed=seed,
                        extra={"command": "sweep",
                               "targets": len(targets),
                               "solved": len(sweep.rows),
                               "failed": len(sweep.failures)})
    _emit(doc, args, cfg=cfg, report=sweep)
    return 0 if not sweep.failures else 1


def _cmd_corpus(args):
    from . import corpus

    entries = ([corpus.get_entry(args.id)] if args.id
               else corpus.list_entries())
    seed = _effective_seed(args)
    verdicts = []
    for entry in entries:
        verdict = corpus.verify_entry(
            entry, epsilon=args.epsilon, conditions=True,
            raise_on_mismatch=False, seed=seed)
        verdicts.append(verdict)
        status = "ok" if verdict["ok"] else "MISMATCH"
        print(f"{status:8s} {entry.id} ({verdict['kind']})",
              file=sys.stderr)
    doc = {"tool_version": __version__, "command": "corpus",
           "seed": seed, "deterministic": bool(args.deterministic),
           "entries": verdicts}
    sys.stdout.write(dumps_json(doc))
    if args.out:
        import os
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "corpus.json"), "w") as fh:
            fh.write(dumps_json(doc))
    return 0 if all(v["ok"] for v in verdicts) else 1


def _cmd_phi(args):
    cfg, seed = _load(args)
    system = cfg.system()
    omega_eval = make_omega_evaluator(system.omega_trees,
                                      system.param_names)
    # pinned at the base point: the variant with quotable closed forms
    profile = estimate_phi(omega_eval, cfg.neighborhood, seed=seed,
                           anchor=system.xi0)
    integral = controllability_integral(profile=profile)
    csv_text = phi_csv(profile)
    sys.stdout.write(csv_text)
    if args.out:
        import os
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "phi.csv"), "w") as fh:
            fh.write(csv_text)
        summary = {"tool_version": __version__, "command": "phi",
                   "run_id": run_id(cfg), "seed": seed,
                   "deterministic": bool(args.deterministic),
                   "integral": integral.as_dict()}
        with open(os.path.join(args.out, "phi.json"), "w") as fh:
            fh.write(dumps_json(summary))
    return 0 if integral.convergent else 1


_COMMANDS = {
    "verify": _cmd_verify,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "corpus": _cmd_corpus,
    "phi": _cmd_phi,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ExprError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FreqKamError as exc:
        # solver verdicts that escaped a command (failed hypothesis
        # preconditions, no root, norm growth) are results, not crashes
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
