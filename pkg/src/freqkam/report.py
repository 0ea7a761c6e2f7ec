"""Report emission: deterministic JSON, fixed-column CSV, run directories.

JSON is emitted with sorted keys and repr floats so two runs of the same
config in deterministic mode produce byte-identical files. The run id is
the sha256 of the normalized config text, which also lands inside the
report for audit.
"""

from __future__ import annotations

import hashlib
import io
import json
import os

import numpy as np

from . import __version__
from .config import emit_normalized

__all__ = ["run_id", "dumps_json", "steps_csv", "sweep_csv", "phi_csv",
           "render_report", "write_run"]

STEP_COLUMNS = ("nu", "r", "s", "mu", "K", "p_norm", "p_next_norm",
                "gap", "divisor_margin", "freq_residual")


def run_id(cfg):
    return hashlib.sha256(emit_normalized(cfg).encode("utf-8")).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps_json(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2,
                      allow_nan=True) + "\n"


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def steps_csv(report):
    """Per-step table. Parameter components follow the fixed columns."""
    m = len(report.xi0)
    header = list(STEP_COLUMNS) + [f"xi{i + 1}" for i in range(m)]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for rec in report.steps:
        row = [rec.nu, rec.r, rec.s, rec.mu, rec.k_used, rec.p_norm,
               rec.p_next_norm, rec.gap_step, rec.divisor_margin,
               rec.freq_residual]
        row += [float(v) for v in rec.xi]
        buf.write(",".join(_csv_cell(v) for v in row) + "\n")
    return buf.getvalue()


def sweep_csv(sweep):
    buf = io.StringIO()
    if sweep.rows:
        m = len(sweep.rows[0]["xi0_hat"])
    else:
        m = 0
    header = (["index"] + [f"xi0_hat{i + 1}" for i in range(m)]
              + [f"xi_star{i + 1}" for i in range(m)]
              + ["gap", "freq_residual", "converged"])
    buf.write(",".join(header) + "\n")
    for row in sweep.rows:
        cells = ([row["index"]] + [float(v) for v in row["xi0_hat"]]
                 + [float(v) for v in row["xi_star"]]
                 + [float(row["gap"]), float(row["freq_residual"]),
                    int(row["converged"])])
        buf.write(",".join(_csv_cell(v) for v in cells) + "\n")
    return buf.getvalue()


def phi_csv(profile, tau_prime=0.5):
    """Profile rows, delta descending, with a running integral estimate.

    The integral column re-evaluates the controllability integral using
    only the knots at or above that row's delta, so reading down the rows
    shows the estimate converging as the data reaches smaller scales.
    """
    from .conditions import controllability_integral
    from .errors import InsufficientGrid

    deltas = np.asarray(profile.deltas, dtype=float)
    values = np.asarray(profile.values, dtype=float)
    order = np.argsort(deltas)[::-1]
    buf = io.StringIO()
    buf.write("delta,phi,integral_estimate\n")
    for i in order:
        suffix = deltas >= deltas[i] - 1e-300
        est = ""
        try:
            rep = controllability_integral(
                deltas=deltas[suffix], values=values[suffix],
                tau_prime=tau_prime)
            if rep.convergent:
                est = repr(float(rep.limit))
        except InsufficientGrid:
            est = ""
        buf.write(f"{float(deltas[i])!r},{float(values[i])!r},{est}\n")
    return buf.getvalue()


def render_report(report, cfg=None, deterministic=False, wall_clock=0.0,
                  seed=0, extra=None):
    doc = {"tool_version": __version__,
           "deterministic": bool(deterministic),
           "seed": int(seed),
           "wall_clock_seconds": 0.0 if deterministic else float(wall_clock)}
    if cfg is not None:
        doc["run_id"] = run_id(cfg)
        doc["config_normalized"] = emit_normalized(cfg)
    if hasattr(report, "as_dict"):
        doc["result"] = report.as_dict()
    else:
        doc["result"] = _plain(report)
    if extra:
        doc.update(_plain(extra))
    return doc


def write_run(out_dir, cfg, report, deterministic=False, wall_clock=0.0,
              seed=0, extra=None):
    """Write report.json, steps.csv, and per-step checkpoint files.

    Returns the run directory path.
    """
    rid = run_id(cfg) if cfg is not None else "adhoc"
    run_dir = os.path.join(out_dir, rid[:12])
    os.makedirs(run_dir, exist_ok=True)
    doc = render_report(report, cfg, deterministic=deterministic,
                        wall_clock=wall_clock, seed=seed, extra=extra)
    with open(os.path.join(run_dir, "report.json"), "w") as fh:
        fh.write(dumps_json(doc))
    if hasattr(report, "steps"):
        with open(os.path.join(run_dir, "steps.csv"), "w") as fh:
            fh.write(steps_csv(report))
        for ck in getattr(report, "checkpoints", []):
            name = f"step{ck['nu']}.json"
            with open(os.path.join(run_dir, name), "w") as fh:
                fh.write(dumps_json(ck))
    if hasattr(report, "rows"):
        with open(os.path.join(run_dir, "sweep.csv"), "w") as fh:
            fh.write(sweep_csv(report))
    return run_dir
