"""Catalogue of closed-form validation systems.

Every entry lives as a config file under ``corpus_data/`` in the same
format users write, extended with an ``[entry]`` table (identity, scope,
special handling) and an ``[expected]`` table holding the closed-form
outcome and the hypothesis verdicts the estimators must reproduce.
``verify_entry`` replays an entry and raises :class:`MismatchError` on the
first deviation, carrying both sides.

Two entries need values the expression language cannot write: the
lacunary cosine coefficient is substituted for the ``@scale@`` hole in the
file before parsing, and the rational-indicator coefficient is certified
to vanish with exact fraction arithmetic (those entries only run at
exactly rational epsilon).
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .conditions import (check_substitution_range, controllability_integral,
                         estimate_phi, estimate_semi_norm,
                         interiority_report, make_omega_evaluator,
                         make_p_evaluator)
from .config import loads_config
from .diophantine import certify, tau_floor
from .engine import HamiltonianSystem
from .engine import run as engine_run
from .errors import (DegenerateImage, FreqKamError, MismatchError,
                     NoSolutionInBox)
from .expr import evaluate, parse
from .rotation import closed_form_rotation, integrate_rotation
from .scales import dirichlet_rational, weierstrass

_SCALE_HOLE = "@scale@"


def _as_fraction(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (tuple, list)) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # shortest decimal that round-trips, so 1e-3 means 1/1000
        return Fraction(Decimal(repr(value)))
    raise TypeError(f"cannot read {value!r} as an exact rational")


@dataclass
class CorpusEntry:
    """One validation system plus its expected outcome."""

    id: str
    title: str
    path: str
    raw_text: str
    meta: dict = field(repr=False)
    expected: dict = field(repr=False)

    @property
    def notes(self):
        return self.meta.get("notes", "")

    @property
    def eps_max(self):
        return float(self.meta.get("eps_max", 1.0))

    @property
    def requires_rational(self):
        return bool(self.meta.get("requires_rational", False))

    @property
    def scale(self):
        return self.meta.get("scale")

    def scale_value(self, epsilon):
        """Coefficient that replaces the @scale@ hole, or None."""
        if self.scale == "weierstrass":
            return weierstrass(float(epsilon))
        if self.scale == "dirichlet":
            frac = _as_fraction(epsilon)
            return dirichlet_rational(frac.numerator, frac.denominator)
        return None

    def config(self, epsilon=None):
        """Compiled configuration, optionally at a different epsilon."""
        if epsilon is None:
            epsilon = self.default_epsilon()
        if self.requires_rational:
            frac = _as_fraction(epsilon)
            eps_f = float(frac)
        else:
            frac = None
            eps_f = float(epsilon)
        text = self.raw_text
        if _SCALE_HOLE in text:
            text = text.replace(_SCALE_HOLE, repr(self.scale_value(eps_f)))
        cfg = loads_config(text)
        changes = {"epsilon": eps_f}
        if frac is not None:
            changes["epsilon_rational"] = (frac.numerator, frac.denominator)
        return dataclasses.replace(cfg, **changes)

    def default_epsilon(self):
        doc = tomllib.loads(self.raw_text)
        run = doc.get("run", {})
        if "epsilon_rational" in run:
            return _as_fraction(run["epsilon_rational"])
        return float(run["epsilon"])


def _data_dir():
    return resources.files(__package__) / "corpus_data"


def list_entries():
    """All catalogue entries, sorted by id."""
    entries = []
    for item in sorted(_data_dir().iterdir(), key=lambda p: p.name):
        if not item.name.endswith(".toml"):
            continue
        text = item.read_text(encoding="utf-8")
        doc = tomllib.loads(text)
        meta = doc.get("entry", {})
        entries.append(CorpusEntry(
            id=meta["id"], title=meta.get("title", meta["id"]),
            path=str(item), raw_text=text, meta=meta,
            expected=doc.get("expected", {})))
    entries.sort(key=lambda e: e.id)
    return entries


def get_entry(entry_id):
    for e in list_entries():
        if e.id == entry_id:
            return e
    known = ", ".join(e.id for e in list_entries())
    raise KeyError(f"no corpus entry {entry_id!r}; known ids: {known}")


# =====================================================================
# expected-value helpers
# =====================================================================

def _expr_env(entry, eps, extra=None):
    env = {"eps": float(eps)}
    if "alpha" in entry.meta:
        env["alpha"] = float(entry.meta["alpha"])
    sv = entry.scale_value(eps)
    if sv is not None:
        env["scale_value"] = sv
    if extra:
        env.update(extra)
    return env


def _eval_expected(source, env):
    # fold env values into the text first: expected forms like
    # (-ln eps)^(-1/alpha) carry symbols in exponents, which the
    # expression language only accepts as constants
    for name, value in env.items():
        source = re.sub(rf"\b{name}\b", f"({float(value)!r})", source)
    return float(evaluate(parse(source), {}))


def _expected_vector(sources, env):
    return np.array([_eval_expected(s, env) for s in sources])


def _check(checks, name, ok, expected, actual, detail=""):
    checks.append({"name": name, "ok": bool(ok), "expected": expected,
                   "actual": actual, "detail": detail})


def _fold_omega(omega_bar, sources):
    return [parse(f"({bar!r}) + ({src})")
            for bar, src in zip(omega_bar, sources)]


def _substituted_system(entry):
    """HamiltonianSystem for the entry's repaired parameterization."""
    sub = entry.meta["substitution"]
    doc = tomllib.loads(entry.raw_text)
    omega_bar = doc["system"]["omega_bar"]
    box = np.asarray(sub["parameter_box"], dtype=float)
    params = tuple(f"xi{i + 1}" for i in range(box.shape[0]))
    return HamiltonianSystem(
        n=len(omega_bar), param_names=params,
        omega_trees=_fold_omega(omega_bar, sub["omega"]),
        p_tree=parse(sub["p"]), box=box,
        xi0=np.asarray(sub["xi0"], dtype=float))


# =====================================================================
# condition verdicts
# =====================================================================

def _h2_verdict(system, box, s_base, seed=0):
    omega_eval = make_omega_evaluator(system.omega_trees,
                                      system.param_names)
    p_eval = make_p_evaluator(system.p_tree, system.n, system.param_names,
                              s=s_base, seed=seed)
    try:
        est = estimate_semi_norm(p_eval, omega_eval, box, seed=seed)
    except DegenerateImage as err:
        return "undefined", "degenerate_image", str(err)
    return est.verdict, "", f"value {est.value:.3e}"


def _h3_verdict(system, box, seed=0):
    omega_eval = make_omega_evaluator(system.omega_trees,
                                      system.param_names)
    profile = estimate_phi(omega_eval, box, seed=seed)
    report = controllability_integral(profile=profile)
    verdict = "convergent" if report.convergent else "divergent"
    return verdict, report, profile


def _condition_checks(entry, cfg, checks, seed=0):
    exp = entry.expected.get("conditions", {})
    if not exp:
        return
    system = cfg.system()
    vbox = cfg.neighborhood if cfg.neighborhood is not None else cfg.box
    omega_eval = make_omega_evaluator(system.omega_trees,
                                      system.param_names)
    omega0 = np.asarray(omega_eval(system.xi0.reshape(1, -1))).ravel()

    # H1: base point interior, frequency nonresonant, image interior.
    mech = exp.get("h1_mechanism", "")
    interior = interiority_report(omega_eval, cfg.box, system.xi0)
    tau = cfg.tau if cfg.tau is not None else tau_floor(system.n) + 0.2
    gamma = cfg.gamma if cfg.gamma is not None else 1e-6
    cert = certify(omega0, gamma, tau, k_max=40)
    point_ok = interior.point_interior and cert.gamma_star > 1e-9
    expected_point = not (exp.get("h1") == "fails"
                          and mech == "point_boundary")
    _check(checks, "h1-point", point_ok == expected_point,
           "holds" if expected_point else "fails",
           "holds" if point_ok else "fails",
           f"margin {interior.point_margin:.3e}, "
           f"gamma* {cert.gamma_star:.3e}")
    if exp.get("h1") == "fails" and mech in ("image_boundary",
                                             "point_boundary"):
        expected_image = False
    else:
        expected_image = exp.get("h1_image", exp.get("h1")) != "fails"
    _check(checks, "h1-image", interior.image_interior == expected_image,
           "interior" if expected_image else "pinned",
           "interior" if interior.image_interior else "pinned",
           f"{len(interior.failed_directions)} unreachable probe "
           f"directions at delta {interior.probe_delta:g}")

    if "h2" in exp:
        verdict, mech2, detail = _h2_verdict(system, vbox, cfg.s_base,
                                             seed=seed)
        _check(checks, "h2", verdict == exp["h2"], exp["h2"], verdict,
               detail)
        if exp.get("h2_mechanism"):
            _check(checks, "h2-mechanism", mech2 == exp["h2_mechanism"],
                   exp["h2_mechanism"], mech2)

    if "h3" in exp:
        verdict, report, _ = _h3_verdict(system, vbox, seed=seed)
        detail = (f"limit {report.limit:.6f}" if report.convergent
                  else f"increment ratio {report.increment_ratio:.3f}")
        _check(checks, "h3", verdict == exp["h3"], exp["h3"], verdict,
               detail)

    if "h3_integral" in entry.expected:
        tree = parse(entry.expected["phi_profile"])
        report = controllability_integral(
            phi_fn=lambda x: evaluate(tree, {"delta": x}))
        tol = float(entry.expected.get("h3_integral_tol", 1e-8))
        target = float(entry.expected["h3_integral"])
        ok = report.convergent and abs(report.limit - target) <= tol
        _check(checks, "h3-closed-form-integral", ok, target,
               report.limit if report.convergent else math.inf,
               f"tolerance {tol:g}")


def _substitution_checks(entry, cfg, checks, seed=0):
    sub = entry.meta.get("substitution")
    if not sub:
        return None
    exp = entry.expected.get("conditions", {})
    raw_system = cfg.system()
    sub_system = _substituted_system(entry)
    bar_names = sub_system.param_names
    m1 = len(bar_names)
    if tuple(raw_system.param_names[:m1]) != bar_names or \
            list(raw_system.param_names[m1:]) != list(sub["replaces"]):
        raise ValueError("substitution must replace the trailing "
                         "parameters")

    sub_vbox = np.asarray(sub.get("neighborhood_box",
                                  sub["parameter_box"]), dtype=float)
    subs_eval = make_omega_evaluator([parse(s) for s in sub["exprs"]],
                                     bar_names)
    check_substitution_range(subs_eval, sub_vbox,
                             np.asarray(sub["target_box"], dtype=float))
    _check(checks, "substitution-range", True, "inside target box",
           "inside target box")

    # the pinned parameters must reproduce the raw perturbation
    rng = np.random.default_rng(seed)
    bar_pts = (sub_vbox[:, 0]
               + rng.random((64, m1)) * (sub_vbox[:, 1] - sub_vbox[:, 0]))
    full_pts = np.hstack([bar_pts, np.asarray(subs_eval(bar_pts))])
    p_raw = make_p_evaluator(raw_system.p_tree, raw_system.n,
                             raw_system.param_names, s=cfg.s_base)
    p_sub = make_p_evaluator(sub_system.p_tree, sub_system.n,
                             bar_names, s=cfg.s_base)
    gap = float(np.abs(p_raw(full_pts) - p_sub(bar_pts)).max())
    _check(checks, "substitution-identity", gap <= 1e-10, 0.0, gap,
           "raw perturbation at pinned parameters vs substituted form")

    if "h2_substituted" in exp:
        verdict, _, detail = _h2_verdict(sub_system, sub_vbox, cfg.s_base,
                                         seed=seed)
        _check(checks, "h2-substituted", verdict == exp["h2_substituted"],
               exp["h2_substituted"], verdict, detail)
    if "h3_substituted" in exp:
        verdict, report, _ = _h3_verdict(sub_system, sub_vbox, seed=seed)
        _check(checks, "h3-substituted",
               verdict == exp["h3_substituted"], exp["h3_substituted"],
               verdict, "")
    return sub_system


# =====================================================================
# outcome verification
# =====================================================================

def _run_system(system, cfg, eps, **overrides):
    kwargs = cfg.run_kwargs()
    kwargs.update(overrides)
    return engine_run(system, eps, **kwargs)


def _closed_form_checks(entry, cfg, system, eps, checks, rotation=True):
    exp = entry.expected
    tol = float(exp.get("tolerance", 1e-9))
    levels = entry.meta.get("levels")
    runs = []
    if levels:
        for level in levels:
            lsys = dataclasses.replace(system,
                                       y_center=np.asarray(level, float))
            extra = {f"y{i + 1}c": float(v) for i, v in enumerate(level)}
            runs.append((lsys, extra, f"level {level}"))
    else:
        runs.append((system, {}, "base"))

    last_report = None
    for lsys, extra, label in runs:
        report = _run_system(lsys, cfg, eps)
        want = _expected_vector(exp["xi_star"],
                                _expr_env(entry, eps, extra))
        gap = float(np.abs(np.asarray(report.xi_star) - want).max())
        _check(checks, f"xi-star[{label}]", gap <= tol,
               [float(v) for v in want],
               [float(v) for v in report.xi_star],
               f"gap {gap:.3e}, tolerance {tol:g}")
        _check(checks, f"freq-residual[{label}]",
               report.freq_residual_final <= 1e-10,
               "<= 1e-10", report.freq_residual_final)
        if rotation and lsys.angle_free():
            omega_eval = make_omega_evaluator(lsys.omega_trees,
                                              lsys.param_names)
            meas = closed_form_rotation(
                omega_eval, lsys.p_tree, lsys.param_names,
                np.asarray(report.xi_star), eps, lsys.y_center)
            rot_gap = float(np.abs(meas.rotation
                                   - np.asarray(report.omega0)).max())
            _check(checks, f"rotation[{label}]", rot_gap <= 1e-8,
                   [float(v) for v in report.omega0],
                   [float(v) for v in meas.rotation],
                   f"gap {rot_gap:.3e}")
        last_report = report

    decades = entry.meta.get("rate_decades")
    if decades:
        gaps = []
        for e in decades:
            rep = _run_system(system, cfg, float(e))
            gaps.append(float(np.abs(np.asarray(rep.xi_star)
                                     - system.xi0).max()))
        monotone = all(a > b for a, b in zip(gaps, gaps[1:]))
        _check(checks, "rate-monotone", monotone,
               "gap decreasing with epsilon", gaps)
        ratios = []
        for e, g in zip(decades, gaps):
            want = _expected_vector(exp["xi_star"],
                                    _expr_env(entry, float(e)))
            ratios.append(g / float(np.abs(want - system.xi0).max()))
        within = all(1 / 1.01 <= r <= 1.01 for r in ratios)
        _check(checks, "rate-asymptotic", within,
               "within factor 1.01 of the closed form", ratios)
    return last_report


def _no_solution_checks(entry, cfg, system, eps, checks):
    exp = entry.expected
    tol = float(exp.get("tolerance", 1e-9))
    env = _expr_env(entry, eps)

    if exp.get("mechanism") == "rational_excision":
        frac = _as_fraction(eps)
        root = frac / (1 - frac)
        report = _run_system(system, cfg, float(frac))
        want = _expected_vector(exp["excluded_root"], env)
        gap = float(np.abs(np.asarray(report.xi_star) - want).max())
        ok = gap <= tol and root.denominator > 0
        _check(checks, "excluded-root", ok,
               f"{root.numerator}/{root.denominator} (rational, excised)",
               [float(v) for v in report.xi_star],
               "exact fraction arithmetic places the root inside the "
               "excision for every rational epsilon")
        return report

    err_name = exp.get("error", "NoSolutionInBox")
    try:
        report = _run_system(system, cfg, eps)
    except FreqKamError as err:
        actual = type(err).__name__
        _check(checks, "no-solution", actual == err_name, err_name,
               actual, str(err))
        if "exterior_root" in exp and actual == "NoSolutionInBox":
            want = _expected_vector(exp["exterior_root"], env)
            got = getattr(err, "exterior_root", None)
            if got is None:
                _check(checks, "exterior-root", False,
                       [float(v) for v in want], None)
            else:
                gap = float(np.abs(np.asarray(got) - want).max())
                _check(checks, "exterior-root", gap <= tol,
                       [float(v) for v in want],
                       [float(v) for v in got], f"gap {gap:.3e}")
        if "best_residual" in exp and actual == "NoSolutionInBox":
            want = _eval_expected(exp["best_residual"], env)
            got = getattr(err, "best_residual", None)
            ok = got is not None and abs(got - want) <= tol
            _check(checks, "best-residual", ok, want, got)
    else:
        _check(checks, "no-solution", False, err_name,
               [float(v) for v in report.xi_star],
               "solver returned a parameter where none should exist")
        return report

    if "analytic_root" in exp:
        # the out-of-box root satisfies the translation identity exactly
        root = _expected_vector(exp["analytic_root"], env)
        omega_eval = make_omega_evaluator(system.omega_trees,
                                          system.param_names)
        omega0 = np.asarray(omega_eval(system.xi0.reshape(1, -1))).ravel()
        f = np.asarray(omega_eval(root.reshape(1, -1))).ravel() \
            - omega0 + eps * _p_gradient(system, root)
        _check(checks, "analytic-root", float(np.abs(f).max()) <= 1e-9,
               "translation residual 0 at the out-of-box root",
               float(np.abs(f).max()))
    return None


def _p_gradient(system, xi):
    from .expr import differentiate
    env = {nm: float(xi[i]) for i, nm in enumerate(system.param_names)}
    for j in range(system.n):
        env[f"y{j + 1}"] = float(system.y_center[j])
        env[f"x{j + 1}"] = 0.0
    return np.array([
        float(evaluate(differentiate(system.p_tree, f"y{j + 1}"), env))
        for j in range(system.n)
    ])


def _candidate_checks(entry, cfg, system, eps, checks):
    exp = entry.expected
    tol = float(exp.get("tolerance", 1e-9))
    env = _expr_env(entry, eps)
    report = _run_system(system, cfg, eps, enumerate_candidates=True)

    want_returned = _expected_vector(exp["returned"], env)
    gap = float(np.abs(np.asarray(report.xi_star) - want_returned).max())
    _check(checks, "returned-candidate", gap <= tol,
           [float(v) for v in want_returned],
           [float(v) for v in report.xi_star], f"gap {gap:.3e}")

    cands = [np.asarray(c, float) for c in report.candidates]
    missing = []
    for srcs in exp["candidates"]:
        want = _expected_vector(srcs, env)
        if not any(float(np.abs(c - want).max()) <= max(tol, 1e-6)
                   for c in cands):
            missing.append([float(v) for v in want])
    _check(checks, "candidate-set", not missing,
           f"{len(exp['candidates'])} grid-detectable roots",
           f"{len(cands)} found, missing {missing}")

    if cands:
        dists = [float(np.abs(c - system.xi0).max()) for c in cands]
        nearest = cands[int(np.argmin(dists))]
        near_gap = float(np.abs(np.asarray(report.xi_star)
                                - nearest).max())
        _check(checks, "nearest-rule", near_gap <= max(tol, 1e-6),
               "returned root is the candidate nearest the seed",
               near_gap)
    return report


# =====================================================================
# public verification surface
# =====================================================================

def verify_entry(entry, epsilon=None, conditions=True, rotation=True,
                 raise_on_mismatch=True, seed=0):
    """Replay one catalogue entry and compare against its expectations.

    Returns a verdict dict with one row per check. With
    ``raise_on_mismatch`` (the default) the first failing check raises
    :class:`MismatchError` carrying the expected and actual values.
    """
    if isinstance(entry, str):
        entry = get_entry(entry)
    if epsilon is None:
        epsilon = entry.default_epsilon()
    eps_f = float(_as_fraction(epsilon)) if entry.requires_rational \
        else float(epsilon)
    if not 0 < eps_f <= entry.eps_max:
        raise ValueError(
            f"epsilon {eps_f:g} outside the entry's validity range "
            f"(0, {entry.eps_max:g}]")

    cfg = entry.config(epsilon)
    if entry.scale == "dirichlet":
        frac = _as_fraction(epsilon)
        value = dirichlet_rational(frac.numerator, frac.denominator)
        if value != 0.0:
            raise MismatchError(
                "rational-indicator coefficient must vanish on the "
                "computable branch", expected=0.0, actual=value)

    checks = []
    system = cfg.system()
    kind = entry.expected.get("kind", "conditions_only")
    report = None
    if entry.meta.get("substitution"):
        run_system = _substitution_checks(entry, cfg, checks, seed=seed) \
            if conditions else _substituted_system(entry)
        sub = entry.meta["substitution"]
        sub_cfg = dataclasses.replace(
            cfg, box=np.asarray(sub["parameter_box"], float),
            neighborhood=None)
        if kind == "closed_form":
            report = _closed_form_checks(entry, sub_cfg, run_system,
                                         eps_f, checks, rotation=rotation)
    elif kind == "closed_form":
        report = _closed_form_checks(entry, cfg, system, eps_f, checks,
                                     rotation=rotation)
    elif kind == "no_solution":
        report = _no_solution_checks(entry, cfg, system, eps_f, checks)
    elif kind == "candidate_set":
        report = _candidate_checks(entry, cfg, system, eps_f, checks)

    if conditions:
        _condition_checks(entry, cfg, checks, seed=seed)

    ok = all(c["ok"] for c in checks)
    verdict = {
        "entry": entry.id,
        "epsilon": eps_f,
        "kind": kind,
        "ok": ok,
        "checks": checks,
        "xi_star": ([float(v) for v in report.xi_star]
                    if report is not None else None),
    }
    if not ok and raise_on_mismatch:
        bad = next(c for c in checks if not c["ok"])
        raise MismatchError(
            f"{entry.id}: {bad['name']} expected {bad['expected']!r}, "
            f"got {bad['actual']!r}" + (f" ({bad['detail']})"
                                        if bad["detail"] else ""),
            expected=bad["expected"], actual=bad["actual"])
    return verdict


def measure_rotation(target, xi=None, epsilon=None, y0=None, T=100.0,
                     dt=0.02):
    """Rotation vector of a corpus system or a post-iteration normal form.

    Angle-independent systems use the exact linear-flow formula; series
    Hamiltonians (e.g. ``RunReport.final_hamiltonian``) are integrated
    with the implicit midpoint rule and Richardson error control.
    """
    if hasattr(target, "final_hamiltonian"):
        series = target.final_hamiltonian
        if series is None:
            raise ValueError("report carries no final Hamiltonian")
        y0 = np.zeros(series.n) if y0 is None else np.asarray(y0, float)
        return integrate_rotation(series, y0, T=T, dt=dt, xi=xi,
                                  epsilon=epsilon)
    if isinstance(target, HamiltonianSystem):
        y0 = target.y_center if y0 is None else np.asarray(y0, float)
        xi = target.xi0 if xi is None else np.asarray(xi, float)
        omega_eval = make_omega_evaluator(target.omega_trees,
                                          target.param_names)
        if target.angle_free():
            return closed_form_rotation(omega_eval, target.p_tree,
                                        target.param_names, xi,
                                        float(epsilon), y0)
        from .series import FourierTaylorSeries, expand
        params = {nm: float(xi[i])
                  for i, nm in enumerate(target.param_names)}
        pert, _ = expand(target.p_tree, target.n, params=params,
                         y_center=target.y_center)
        omega = np.asarray(omega_eval(xi.reshape(1, -1))).ravel()
        series = (FourierTaylorSeries.linear_in_y(omega)
                  + pert.scale(float(epsilon)))
        return integrate_rotation(series, y0, T=T, dt=dt, xi=xi,
                                  epsilon=epsilon)
    # bare series Hamiltonian
    y0 = np.zeros(target.n) if y0 is None else np.asarray(y0, float)
    return integrate_rotation(target, y0, T=T, dt=dt, xi=xi,
                              epsilon=epsilon)
