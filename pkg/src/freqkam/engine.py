"""Iteration engine: normal-form steps plus parameter translation.

One run keeps the toral frequency pinned at omega(xi0). Each step
truncates the perturbation, solves the quasi-linear homological equation
with divisors built from omega(xi0) and the accumulated action-only part
h_bar, assembles the transformed perturbation through the Lie series, and
then re-solves the frequency equation

    omega(xi) + sum_j p01_j(xi) = omega(xi0)

for the next parameter, where p01_j(xi) is the linear action coefficient
that step j would have produced at parameter xi. That phrase is the
consequential design decision here: drift terms are closures that re-run
the fixed-parameter algebra at every queried xi (memoized), because the
step algebra at a candidate parameter is exactly what the translation
equation asks for. Systems without angle dependence take a fast path
where the whole drift collapses to eps * grad_y P(y_center, xi).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .conditions import make_omega_evaluator
from .diophantine import certify, tau_floor
from .errors import (
    DiophantineFailure, DomainTooSmall, NoSolutionInBox, NormBlowup,
)
from .expr import differentiate, evaluate, variables
from .normalform import lie_transform, solve_homological
from .schedule import KamSchedule
from .series import FourierTaylorSeries, expand, series_to_json
from .translate import solve_translation

__all__ = ["HamiltonianSystem", "Pipeline", "StepRecord", "RunReport",
           "SweepReport", "initialize", "run", "family_sweep"]


@dataclass
class HamiltonianSystem:
    """Parameterized system <omega(xi), y> + eps * P(y, x, xi)."""

    n: int
    param_names: tuple
    omega_trees: list
    p_tree: object
    box: np.ndarray
    xi0: np.ndarray
    y_center: np.ndarray = None

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float).reshape(-1, 2)
        self.xi0 = np.asarray(self.xi0, dtype=float).ravel()
        if self.y_center is None:
            self.y_center = np.zeros(self.n)
        self.y_center = np.asarray(self.y_center, dtype=float)
        if len(self.omega_trees) != self.n:
            raise ValueError("one frequency component per action variable")
        if self.xi0.shape[0] != self.box.shape[0]:
            raise ValueError("xi0 and box dimensions disagree")
        allowed = set(self.param_names)
        allowed |= {f"y{j + 1}" for j in range(self.n)}
        allowed |= {f"x{j + 1}" for j in range(self.n)}
        for tree in list(self.omega_trees) + [self.p_tree]:
            extra = set(variables(tree)) - allowed
            if extra:
                raise ValueError(f"unknown variables {sorted(extra)}")

    def omega_eval(self):
        return make_omega_evaluator(self.omega_trees, self.param_names)

    def angle_free(self):
        angles = {f"x{j + 1}" for j in range(self.n)}
        return not (set(variables(self.p_tree)) & angles)


@dataclass
class _PipelineStep:
    p00: float
    p01: np.ndarray
    p_norm: float
    p_next_norm: float
    divisor_margin: float
    residual_rel: float
    neumann_orders: int
    lie_orders: dict
    dropped: float
    k_formula: float
    k_used: int


@dataclass
class _PipelineRun:
    P0: FourierTaylorSeries
    e: float = 0.0
    hbar: FourierTaylorSeries = None
    P: FourierTaylorSeries = None
    steps: list = field(default_factory=list)
    series_log: list = field(default_factory=list)


class Pipeline:
    """Fixed-parameter step algebra, memoized per parameter value.

    steps(xi, count) returns the first `count` step records of the
    iteration run entirely at the single parameter xi with divisors pinned
    at omega(xi0); the translation solver sums their p01 entries.
    """

    def __init__(self, system, epsilon, schedule, omega0, gamma_div,
                 tau, k_work=6, keep_series=False):
        self.system = system
        self.epsilon = epsilon
        self.schedule = schedule
        self.omega0 = np.asarray(omega0, dtype=float)
        self.gamma_div = gamma_div
        self.tau = tau
        self.k_work = k_work
        self.keep_series = keep_series
        self.angle_free = system.angle_free()
        self._cache = {}
        if self.angle_free:
            self._grad_trees = [
                differentiate(system.p_tree, f"y{j + 1}")
                for j in range(system.n)]

    def _expand_at(self, xi):
        params = dict(zip(self.system.param_names, xi))
        k_cap = 0 if self.angle_free else self.k_work
        series, _ = expand(self.system.p_tree, self.system.n, params=params,
                           k_cap=k_cap, deg_cap=4,
                           y_center=self.system.y_center)
        return series.scale(self.epsilon)

    def _run_for(self, xi):
        xi = np.asarray(xi, dtype=float).ravel()
        key = xi.tobytes()
        run = self._cache.get(key)
        if run is None:
            P0 = self._expand_at(xi)
            run = _PipelineRun(P0=P0, hbar=FourierTaylorSeries(self.system.n),
                               P=P0)
            self._cache[key] = run
        return run

    def initial_norm(self, xi):
        pars = self.schedule.step_params(0)
        return self._run_for(xi).P0.norm(pars["s"], pars["r"]).value

    def steps(self, xi, count):
        run = self._run_for(xi)
        while len(run.steps) < count:
            self._advance(run)
        return run.steps[:count]

    def _advance(self, run):
        nu = len(run.steps)
        pars = self.schedule.step_params(nu)
        n = self.system.n
        k_formula = float(pars["k_next"])
        k_used = int(min(k_formula, self.k_work)) if k_formula < 1e9 \
            else self.k_work
        k_used = max(k_used, 1)

        P = run.P
        R, tail_w = P.truncate(k_used, 4, pars["s"], pars["r"])
        avg = R.angle_average()
        p00 = float(np.real(avg.const_coeff()))
        p01 = np.real(np.asarray(avg.linear_y_coeffs()))
        hbar_inc = avg - FourierTaylorSeries.constant(n, p00) \
            - FourierTaylorSeries.linear_in_y(p01)
        p_norm = P.norm(pars["s"], pars["r"]).value

        osc = R.oscillating_part()
        if osc.is_zero():
            P_next = P - R
            divisor_margin = math.inf
            residual_rel = 0.0
            neumann_orders = 0
            lie_orders = {}
            dropped = tail_w
        else:
            hom = solve_homological(
                R, self.omega0, run.hbar, self.tau, self.gamma_div,
                pars["s"], pars["r"])
            N_full = FourierTaylorSeries.linear_in_y(self.omega0) + run.hbar
            lie = lie_transform(P, R, hom.F, N_full, hom.residual,
                                pars["s"], pars["r"], k_cap=self.k_work)
            P_next = lie.P_next
            divisor_margin = hom.divisor_min
            r_norm = R.norm(pars["s"], pars["r"]).value
            residual_rel = hom.residual_norm / max(r_norm, 1e-300)
            neumann_orders = hom.neumann_orders
            lie_orders = lie.orders
            dropped = tail_w + lie.dropped

        p_next_norm = P_next.norm(pars["s_next"], pars["r_next"]).value
        run.e += p00
        run.hbar = run.hbar + hbar_inc
        run.P = P_next
        if self.keep_series:
            run.series_log.append(
                {"hbar": series_to_json(run.hbar, pars["s_next"],
                                        pars["r_next"]),
                 "P": series_to_json(P_next, pars["s_next"],
                                     pars["r_next"])})
        run.steps.append(_PipelineStep(
            p00=p00, p01=p01, p_norm=p_norm, p_next_norm=p_next_norm,
            divisor_margin=divisor_margin, residual_rel=residual_rel,
            neumann_orders=neumann_orders, lie_orders=lie_orders,
            dropped=dropped, k_formula=k_formula, k_used=k_used))

    def drift_closure(self, count):
        """Total drift sum_{j < count} p01_j as a batched function of xi."""
        if count <= 0:
            return None
        if self.angle_free:
            names = self.system.param_names
            yc = self.system.y_center
            n = self.system.n
            eps = self.epsilon
            trees = self._grad_trees

            def drift(X):
                X = np.asarray(X, dtype=float)
                env = {nm: X[:, i] for i, nm in enumerate(names)}
                for j in range(n):
                    env[f"y{j + 1}"] = yc[j]
                cols = []
                for tree in trees:
                    v = np.asarray(evaluate(tree, env), dtype=float)
                    cols.append(np.broadcast_to(v, (X.shape[0],)))
                return eps * np.stack(cols, axis=-1)

            return drift

        def drift(X):
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X.reshape(1, -1)
            out = np.zeros((X.shape[0], self.system.n))
            for i in range(X.shape[0]):
                steps = self.steps(X[i], count)
                out[i] = np.sum([st.p01 for st in steps], axis=0)
            return out

        return drift


@dataclass
class StepRecord:
    nu: int
    r: float
    s: float
    mu: float
    k_formula: float
    k_used: int
    p_norm: float
    p_next_norm: float
    p00: float
    p01: list
    divisor_margin: float
    residual_rel: float
    neumann_orders: int
    lie_orders: dict
    dropped: float
    xi: list
    translation_method: str
    freq_residual: float
    gap_step: float
    warnings: list = field(default_factory=list)

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["p01"] = [float(v) for v in self.p01]
        d["xi"] = [float(v) for v in self.xi]
        return d


@dataclass
class RunReport:
    mode: str
    epsilon: float
    xi0: list
    omega0: list
    xi_star: list
    converged: bool
    stop_reason: str
    p0_norm: float
    p_norm_final: float
    freq_residual_final: float
    drift_gap: float
    entry_ok: bool
    entry_threshold: float
    steps: list
    schedule: dict
    certificate: dict
    warnings: list
    candidates: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    phi_at_eps: float = None
    # full normal form <omega0, y> + hbar + P at xi_star; not serialized
    final_hamiltonian: object = None

    def as_dict(self):
        return {
            "mode": self.mode,
            "epsilon": self.epsilon,
            "xi0": [float(v) for v in self.xi0],
            "omega0": [float(v) for v in self.omega0],
            "xi_star": [float(v) for v in self.xi_star],
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "p0_norm": self.p0_norm,
            "p_norm_final": self.p_norm_final,
            "freq_residual_final": self.freq_residual_final,
            "drift_gap": self.drift_gap,
            "entry_ok": self.entry_ok,
            "entry_threshold": self.entry_threshold,
            "steps": [s.as_dict() for s in self.steps],
            "schedule": self.schedule,
            "certificate": self.certificate,
            "warnings": self.warnings,
            "candidates": [[float(v) for v in c] for c in self.candidates],
            "checkpoints": self.checkpoints,
            "phi_at_eps": self.phi_at_eps,
        }


def initialize(system, epsilon, mode="practical", tau=None, gamma=None,
               r0=1.0, s_base=1.0, m_star=0.0, k_work=6, cert_k_max=None,
               keep_series=False):
    """Schedule, certificate, and memoized pipeline for a run.

    Raises DiophantineFailure when omega(xi0) misses its lower bound, and
    DomainTooSmall when the derived action radius collapses.
    """
    n = system.n
    if tau is None:
        tau = tau_floor(n) + 0.2
    schedule = KamSchedule(n=n, tau=tau, epsilon=epsilon, r0=r0,
                           s_base=s_base, mode=mode, m_star=m_star)
    if schedule.s0 <= 0 or schedule.rho0 <= 0:
        raise DomainTooSmall(
            f"derived action radius s0 = {schedule.s0:.3e}")

    omega_eval = system.omega_eval()
    omega0 = np.asarray(omega_eval(system.xi0.reshape(1, -1)),
                        dtype=float).ravel()
    gamma_req = gamma if gamma is not None else schedule.gamma0
    k_max = cert_k_max if cert_k_max is not None else max(schedule.k1, 12)
    cert = certify(omega0, gamma_req, tau, k_max=int(k_max))
    if not cert.ok:
        raise DiophantineFailure(
            f"omega(xi0) = {omega0.tolist()} violates the lower bound at "
            f"k = {cert.worst_k} (margin {cert.worst_margin:.3e})",
            certificate=cert.as_dict())

    warnings = []
    gamma_div = min(schedule.gamma0, cert.gamma_star)
    if cert.gamma_star < schedule.gamma0:
        warnings.append(
            f"certified gamma* {cert.gamma_star:.6e} under schedule "
            f"gamma0 {schedule.gamma0:.6e}; divisors use the certified "
            "value")

    pipeline = Pipeline(system, epsilon, schedule, omega0, gamma_div, tau,
                        k_work=k_work, keep_series=keep_series)
    return schedule, cert, pipeline, omega0, warnings


def run(system, epsilon, mode="practical", tau=None, gamma=None,
        max_steps=8, stop_tol=None, k_work=6, r0=1.0, s_base=1.0,
        m_star=0.0, translation_tol=1e-12, enumerate_candidates=False,
        phi_profile=None, keep_series=False):
    """Iterate normal-form steps with parameter translation.

    Stops when the perturbation norm falls under stop_tol (default
    1e-12 * initial norm) or after max_steps. Raises NoSolutionInBox when
    a translation has no interior root and NormBlowup when the norms grow.
    """
    schedule, cert, pipeline, omega0, warnings = initialize(
        system, epsilon, mode=mode, tau=tau, gamma=gamma, r0=r0,
        s_base=s_base, m_star=m_star, k_work=k_work,
        keep_series=keep_series)
    omega_eval = system.omega_eval()

    p0_norm = pipeline.initial_norm(system.xi0)
    if stop_tol is None:
        stop_tol = 1e-12 * max(p0_norm, 1e-300)
    entry_ok, entry_thr = schedule.check_entry_smallness(p0_norm)
    if not entry_ok:
        warnings.append(
            f"initial norm {p0_norm:.6e} above the entry threshold "
            f"{entry_thr:.6e}; continuing in {mode} mode")

    xi = system.xi0.copy()
    records = []
    checkpoints = []
    candidates = []
    p_norm_cur = p0_norm
    stop_reason = "max_steps"
    converged = False

    if p0_norm <= stop_tol:
        stop_reason = "initial_norm_below_tolerance"
        converged = True

    nu = 0
    while not converged and nu < max_steps:
        pars = schedule.step_params(nu)
        want_candidates = enumerate_candidates and nu == 0
        try:
            res = solve_translation(
                omega_eval, omega0, system.box, seed=xi,
                drift=pipeline.drift_closure(nu + 1), tol=translation_tol,
                enumerate_candidates=want_candidates)
        except NoSolutionInBox:
            raise
        if want_candidates:
            candidates = [np.asarray(c, dtype=float) for c in res.candidates]
        gap = float(np.abs(res.xi - xi).max())
        xi = res.xi
        step = pipeline.steps(xi, nu + 1)[nu]

        rec = StepRecord(
            nu=nu, r=pars["r"], s=pars["s"], mu=pars["mu"],
            k_formula=step.k_formula, k_used=step.k_used,
            p_norm=step.p_norm, p_next_norm=step.p_next_norm,
            p00=step.p00, p01=list(step.p01),
            divisor_margin=step.divisor_margin,
            residual_rel=step.residual_rel,
            neumann_orders=step.neumann_orders,
            lie_orders=step.lie_orders, dropped=step.dropped,
            xi=list(xi), translation_method=res.method,
            freq_residual=res.residual, gap_step=gap)
        if keep_series:
            run_data = pipeline._run_for(xi)
            checkpoints.append({
                "nu": nu, "e": run_data.e, "xi": [float(v) for v in xi],
                **run_data.series_log[nu]})

        if step.p_next_norm > 0.9 * step.p_norm \
                and step.p_next_norm > stop_tol:
            rec.warnings.append(
                f"norm contraction weak: {step.p_norm:.3e} -> "
                f"{step.p_next_norm:.3e}")
            if step.p_next_norm > step.p_norm:
                records.append(rec)
                raise NormBlowup(
                    f"perturbation norm grew at step {nu}: "
                    f"{step.p_norm:.6e} -> {step.p_next_norm:.6e}")
        records.append(rec)
        p_norm_cur = step.p_next_norm
        nu += 1
        if p_norm_cur <= stop_tol:
            stop_reason = "norm_below_tolerance"
            converged = True

    freq_final = records[-1].freq_residual if records else 0.0
    drift_gap = float(np.abs(xi - system.xi0).max())
    phi_at = None
    if phi_profile is not None:
        phi_at = float(np.interp(epsilon, phi_profile.deltas,
                                 phi_profile.values))

    accepted = pipeline._run_for(xi)
    final_h = (FourierTaylorSeries.linear_in_y(np.asarray(omega0))
               + accepted.hbar + accepted.P)

    return RunReport(
        mode=mode, epsilon=epsilon, xi0=list(system.xi0),
        omega0=list(omega0), xi_star=list(xi), converged=converged,
        stop_reason=stop_reason, p0_norm=p0_norm, p_norm_final=p_norm_cur,
        freq_residual_final=freq_final, drift_gap=drift_gap,
        entry_ok=entry_ok, entry_threshold=entry_thr, steps=records,
        schedule=schedule.as_dict(), certificate=cert.as_dict(),
        warnings=warnings, candidates=candidates, checkpoints=checkpoints,
        phi_at_eps=phi_at, final_hamiltonian=final_h)


@dataclass
class SweepReport:
    rows: list
    failures: list
    gaps_in: list
    gaps_out: list
    fit: object

    def as_dict(self):
        return {
            "rows": self.rows,
            "failures": self.failures,
            "gaps_in": [float(v) for v in self.gaps_in],
            "gaps_out": [float(v) for v in self.gaps_out],
            "fit": None if self.fit is None else self.fit.as_dict(),
        }


def family_sweep(system, targets, epsilon, pair_strides=(1, 2, 4, 8, 16, 32),
                 fit_families=True, **run_kwargs):
    """Run per base parameter and fit a modulus to the family xi*(.).

    Per-point failures are recorded and the sweep continues; gap pairs at
    several strides along the target list feed the envelope fit.
    """
    from .conditions import fit_modulus
    from .errors import FreqKamError, InsufficientGrid

    rows = []
    failures = []
    stars = {}
    for i, xi_hat in enumerate(targets):
        sys_i = dataclasses.replace(system,
                                    xi0=np.asarray(xi_hat, dtype=float))
        try:
            rep = run(sys_i, epsilon, **run_kwargs)
        except FreqKamError as exc:
            failures.append({"index": i,
                             "xi0_hat": [float(v) for v in xi_hat],
                             "error": type(exc).__name__,
                             "message": str(exc)})
            continue
        stars[i] = np.asarray(rep.xi_star)
        rows.append({
            "index": i,
            "xi0_hat": [float(v) for v in xi_hat],
            "xi_star": rep.xi_star,
            "gap": rep.drift_gap,
            "freq_residual": rep.freq_residual_final,
            "converged": rep.converged,
        })

    gaps_in = []
    gaps_out = []
    idxs = sorted(stars)
    pos = {i: np.asarray(targets[i], dtype=float) for i in idxs}
    for stride in pair_strides:
        for a, b in zip(idxs, idxs[stride:]):
            gaps_in.append(float(np.abs(pos[b] - pos[a]).max()))
            gaps_out.append(float(np.abs(stars[b] - stars[a]).max()))

    fit = None
    if fit_families and gaps_in:
        try:
            fit = fit_modulus(gaps_in, gaps_out)
        except InsufficientGrid:
            fit = None
    return SweepReport(rows=rows, failures=failures, gaps_in=gaps_in,
                       gaps_out=gaps_out, fit=fit)
