"""Statistical estimators for the run hypotheses.

Everything here is an estimator, not a proof: sampled suprema are lower
bounds, envelope fits are least-dominating over observed data, and verdicts
are decision rules documented per function. Sampling is deterministic for a
fixed seed.

The three hypothesis families:

  * relative-singularity semi-norm (estimate_semi_norm): the sup over
    parameter pairs of sup|P(xi) - P(zeta)| / |omega(xi) - omega(zeta)|.
    Besides random and near-diagonal pairs, the estimator probes symmetry
    reflections and axis slices for coincident frequency fibers (pairs at
    macroscopic parameter distance mapped to the same frequency), then
    hill-climbs the ratio. Growth across refinement rounds or scales marks
    the estimate saturated.
  * controllability profile (estimate_phi + controllability_integral):
    phi(delta) = largest parameter gap among pairs whose frequency gap is
    at most delta, maximized with anchored line probes (one-sided and
    straddling) plus feasible random pairs; the log-weighted integral is
    evaluated exactly on the piecewise-linear interpolant in the
    (ln(-ln x), ln phi) chart, and the convergence verdict compares
    decade-doubling increments of the cutoff trace.
  * modulus envelope fitting (fit_modulus): least-dominating Lipschitz /
    Hoelder / log-Hoelder envelope over bin maxima in the matching chart,
    with a factor-2 slack fallback to a tabulated custom modulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import (
    DegenerateImage, InsufficientGrid, SubstitutionRangeError,
)
from .translate import solve_translation
from .errors import NoSolutionInBox

__all__ = [
    "SemiNormEstimate", "estimate_semi_norm",
    "PhiProfile", "estimate_phi",
    "IntegralReport", "controllability_integral",
    "ModulusFit", "fit_modulus",
    "InteriorReport", "interiority_report",
    "check_substitution_range",
    "make_p_evaluator", "make_omega_evaluator",
]


def _halton_box(box, count, seed=0):
    box = np.asarray(box, dtype=float)
    eng = qmc.Halton(d=box.shape[0], scramble=False, seed=seed)
    u = eng.random(count)
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


def _uniform_box(box, count, rng):
    box = np.asarray(box, dtype=float)
    return rng.uniform(box[:, 0], box[:, 1], size=(count, box.shape[0]))


def _clip_box(pts, box):
    return np.clip(pts, box[:, 0], box[:, 1])


# =====================================================================
# relative-singularity semi-norm
# =====================================================================

@dataclass
class SemiNormEstimate:
    value: float
    saturated: bool
    verdict: str                      # "holds" | "fails" | "undefined"
    rounds: list
    scale_trace: list
    coincident_fibers: bool
    coincident_p_gap: float
    p_varies: bool
    worst_pair: tuple
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {
            "value": self.value,
            "saturated": self.saturated,
            "verdict": self.verdict,
            "rounds": self.rounds,
            "scale_trace": self.scale_trace,
            "coincident_fibers": self.coincident_fibers,
            "coincident_p_gap": self.coincident_p_gap,
            "p_varies": self.p_varies,
            "worst_pair": [[float(v) for v in p] for p in self.worst_pair],
            "notes": self.notes,
        }


def _pair_stats(p_eval, omega_eval, xi, zeta):
    """Per-pair (sup_|Delta P|, sup_|Delta omega|, sup_|Delta xi|)."""
    dp = np.abs(p_eval(xi) - p_eval(zeta)).max(axis=1)
    dw = np.abs(omega_eval(xi) - omega_eval(zeta)).max(axis=1)
    dx = np.abs(xi - zeta).max(axis=1)
    return dp, dw, dx


def estimate_semi_norm(p_eval, omega_eval, box, pairs=2048, rounds=6,
                       seed=0):
    """Estimate sup over parameter pairs of sup|dP| / |d omega| on the box.

    p_eval maps a (B, m) parameter batch to (B, S) perturbation samples
    (the S axis sweeps a fixed set of action/angle points); omega_eval maps
    (B, m) to (B, n). Raises DegenerateImage when the frequency map is
    constant on the box.
    """
    rng = np.random.default_rng(seed)
    box = np.asarray(box, dtype=float)
    m = box.shape[0]
    widths = box[:, 1] - box[:, 0]
    diam = float(widths.max())
    center = 0.5 * (box[:, 0] + box[:, 1])

    probe = _halton_box(box, 256, seed=0)
    wvals = omega_eval(probe)
    wspan = float((wvals.max(axis=0) - wvals.min(axis=0)).max())
    wscale = max(1.0, float(np.abs(wvals).max()))
    floor_w = 1e-12 * wscale
    if wspan <= 1e-13 * wscale:
        raise DegenerateImage(
            f"frequency map is constant on the box (span {wspan:.3e})")
    pvals = p_eval(probe)
    # variation across the parameter batch, not across action/angle samples
    pspan = float((pvals.max(axis=0) - pvals.min(axis=0)).max())
    floor_p = 1e-10 * max(1.0, float(np.abs(pvals).max()))

    notes = []
    value = 0.0
    worst = (center.copy(), center.copy())
    coincident = False
    coincident_gap = 0.0
    p_varies = pspan > floor_p

    def digest(xi, zeta, what):
        nonlocal value, worst, coincident, coincident_gap
        dp, dw, dx = _pair_stats(p_eval, omega_eval, xi, zeta)
        live = dw > floor_w
        if live.any():
            ratios = dp[live] / dw[live]
            i = int(np.argmax(ratios))
            if ratios[i] > value:
                value = float(ratios[i])
                worst = (xi[live][i].copy(), zeta[live][i].copy())
        fiber = (~live) & (dx >= 0.05 * diam)
        if fiber.any():
            if not coincident:
                notes.append(f"coincident fibers found by {what}")
            coincident = True
            coincident_gap = max(coincident_gap, float(dp[fiber].max()))
        return live.any()

    # macroscopic random pairs
    xi = _uniform_box(box, pairs, rng)
    zeta = _uniform_box(box, pairs, rng)
    any_live = digest(xi, zeta, "random pairs")
    if not any_live and not coincident:
        raise DegenerateImage(
            "no sampled pair separated the frequency map")

    # symmetry probes: reflect one coordinate (or all) across box center
    base = _uniform_box(box, 128, rng)
    for axis in list(range(m)) + [None]:
        refl = base.copy()
        if axis is None:
            refl = 2 * center - base
        else:
            refl[:, axis] = 2 * center[axis] - base[:, axis]
        digest(base, refl, "symmetry reflection")

    # slice probes: random pairs inside each center hyperplane
    for axis in range(m):
        a = _uniform_box(box, 96, rng)
        b = _uniform_box(box, 96, rng)
        a[:, axis] = center[axis]
        b[:, axis] = center[axis]
        digest(a, b, "axis slice")

    # near-diagonal scale sweep
    scale_trace = []
    for t in range(1, 9):
        sigma = diam * 10.0 ** (-t)
        c = _uniform_box(box, 512, rng)
        off = rng.normal(size=(512, m)) * sigma
        a = _clip_box(c - off / 2, box)
        b = _clip_box(c + off / 2, box)
        dp, dw, dx = _pair_stats(p_eval, omega_eval, a, b)
        live = dw > floor_w
        top = float((dp[live] / dw[live]).max()) if live.any() else 0.0
        scale_trace.append(top)
        if live.any():
            digest(a[live], b[live], f"scale 1e-{t}")

    # hill climbing on the ratio from the current worst pair
    round_trace = [value]
    cur_xi, cur_zeta = worst[0].copy(), worst[1].copy()
    cur_ratio = value
    for rnd in range(1, rounds + 1):
        sigma = diam * 0.3 * 3.0 ** (-rnd)
        for _ in range(8):
            B = 64
            prop_xi = np.tile(cur_xi, (B, 1))
            prop_zeta = np.tile(cur_zeta, (B, 1))
            kind = rng.integers(0, 5, B)
            coord = rng.integers(0, m, B)
            amt = rng.normal(size=B) * sigma
            for i in range(B):
                c_i = coord[i]
                if kind[i] == 0:
                    prop_xi[i, c_i] += amt[i]
                elif kind[i] == 1:
                    prop_zeta[i, c_i] += amt[i]
                elif kind[i] == 2:  # collapse one coordinate gap
                    prop_zeta[i, c_i] = prop_xi[i, c_i]
                elif kind[i] == 3:  # translate both
                    prop_xi[i, c_i] += amt[i]
                    prop_zeta[i, c_i] += amt[i]
                else:               # stretch the difference
                    mid = 0.5 * (prop_xi[i] + prop_zeta[i])
                    f = 1.0 + 0.5 * rng.normal()
                    prop_xi[i] = mid + f * (prop_xi[i] - mid)
                    prop_zeta[i] = mid + f * (prop_zeta[i] - mid)
            prop_xi = _clip_box(prop_xi, box)
            prop_zeta = _clip_box(prop_zeta, box)
            dp, dw, dx = _pair_stats(p_eval, omega_eval, prop_xi, prop_zeta)
            live = dw > floor_w
            fiber = (~live) & (dx >= 0.05 * diam)
            if fiber.any():
                if not coincident:
                    notes.append("coincident fibers found by hill climb")
                coincident = True
                coincident_gap = max(coincident_gap, float(dp[fiber].max()))
            if live.any():
                ratios = np.where(live, dp / np.maximum(dw, floor_w), 0.0)
                i = int(np.argmax(ratios))
                if ratios[i] > cur_ratio:
                    cur_ratio = float(ratios[i])
                    cur_xi = prop_xi[i].copy()
                    cur_zeta = prop_zeta[i].copy()
        round_trace.append(cur_ratio)
    if cur_ratio > value:
        value = cur_ratio
        worst = (cur_xi, cur_zeta)

    grew_rounds = (round_trace[-1] > 1.10 * round_trace[-2]
                   and round_trace[-2] > 1.10 * round_trace[-3])
    tail = [v for v in scale_trace[-3:] if v > 0]
    grew_scales = (len(tail) == 3
                   and tail[2] > 1.10 * tail[1] > 1.10 * 1.10 * tail[0])
    infinite_ratio = coincident and coincident_gap > floor_p
    saturated = bool(grew_rounds or grew_scales or infinite_ratio)
    if infinite_ratio:
        notes.append("perturbation separates a coincident fiber pair: "
                     "ratio unbounded")

    if coincident and not p_varies:
        verdict = "undefined"
        notes.append("frequency fibers coincide and the perturbation does "
                     "not depend on the parameter: 0/0 supremum")
    elif saturated:
        verdict = "fails"
    else:
        verdict = "holds"

    return SemiNormEstimate(
        value=value, saturated=saturated, verdict=verdict,
        rounds=round_trace, scale_trace=scale_trace,
        coincident_fibers=coincident, coincident_p_gap=coincident_gap,
        p_varies=p_varies, worst_pair=worst, notes=notes)


# =====================================================================
# controllability profile phi
# =====================================================================

@dataclass
class PhiProfile:
    deltas: np.ndarray
    values: np.ndarray
    diagnostics: dict

    def as_dict(self):
        return {
            "deltas": [float(v) for v in self.deltas],
            "values": [float(v) for v in self.values],
            "diagnostics": self.diagnostics,
        }


def _phi_directions(m, rng, extra=16):
    dirs = []
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        dirs.append(e.copy())
        dirs.append(-e)
    if m > 1:
        for signs in np.ndindex(*(2,) * m):
            d = np.array([1.0 if s else -1.0 for s in signs])
            dirs.append(d)
        r = rng.normal(size=(extra, m))
        r /= np.abs(r).max(axis=1, keepdims=True)
        dirs.extend(r)
    return np.array(dirs)


def estimate_phi(omega_eval, box, deltas=None, seed=0, anchors=24,
                 bisections=60, anchor=None):
    """Sampled controllability profile phi(delta) = max |xi - zeta|_inf
    over pairs with |omega(xi) - omega(zeta)|_inf <= delta.

    With ``anchor`` given, one end of every pair is pinned there, so the
    profile measures the reach from that base point only; this is the
    variant whose closed forms the catalogue quotes."""
    rng = np.random.default_rng(seed)
    box = np.asarray(box, dtype=float)
    m = box.shape[0]
    widths = box[:, 1] - box[:, 0]
    center = 0.5 * (box[:, 0] + box[:, 1])

    if deltas is None:
        deltas = np.geomspace(1e-13, 0.5, 45)
    deltas = np.sort(np.asarray(deltas, dtype=float))

    if anchor is not None:
        anchor_pts = np.asarray(anchor, dtype=float).reshape(1, m)
    else:
        corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in box],
                                       indexing="ij")).reshape(m, -1).T
        anchor_pts = np.vstack([center.reshape(1, -1), corners,
                                _halton_box(box, anchors, seed=1)])
    dirs = _phi_directions(m, rng)

    A = np.repeat(anchor_pts, len(dirs), axis=0)
    U = np.tile(dirs, (len(anchor_pts), 1))
    P = A.shape[0]
    t_max = float(widths.max())
    ts = np.geomspace(t_max * 1e-14, t_max, 40)

    omega_A = omega_eval(A)

    # random feasible pairs, one shot for all deltas
    rx = _uniform_box(box, 4096, rng)
    if anchor is not None:
        rz = np.repeat(anchor_pts, rx.shape[0], axis=0)
    else:
        rz = _uniform_box(box, 4096, rng)
    r_dw = np.abs(omega_eval(rx) - omega_eval(rz)).max(axis=1)
    r_dx = np.abs(rx - rz).max(axis=1)

    straddles = (False,) if anchor is not None else (False, True)
    values = []
    best_running = 0.0
    for delta in deltas:
        best = 0.0
        if r_dw.size:
            ok = r_dw <= delta
            if ok.any():
                best = max(best, float(r_dx[ok].max()))
        for straddle in straddles:
            # feasibility of each (anchor, dir) at each scan radius
            feas_t = np.zeros(P)
            bracket_hi = np.zeros(P)
            scan_gap = np.zeros(P)
            for t in ts:
                if straddle:
                    p1 = _clip_box(A - t * U, box)
                    p2 = _clip_box(A + t * U, box)
                    g = np.abs(omega_eval(p1) - omega_eval(p2)).max(axis=1)
                    gap = np.abs(p1 - p2).max(axis=1)
                else:
                    p2 = _clip_box(A + t * U, box)
                    g = np.abs(omega_eval(p2) - omega_A).max(axis=1)
                    gap = np.abs(p2 - A).max(axis=1)
                newly = g <= delta
                improved = newly & (gap > scan_gap)
                feas_t[improved] = t
                scan_gap[improved] = gap[improved]
                fresh_hi = (~newly) & (bracket_hi == 0.0) & (feas_t > 0)
                bracket_hi[fresh_hi] = t
            if scan_gap.max() > 0:
                best = max(best, float(scan_gap.max()))
            # bisect between the best feasible t and the next infeasible one;
            # when feasibility resumed past that sample, open up to the rim
            lo = feas_t.copy()
            hi = np.where(bracket_hi > feas_t, bracket_hi, t_max)
            alive = lo > 0
            if alive.any():
                lo_a = lo[alive]
                hi_a = hi[alive]
                A_a = A[alive]
                U_a = U[alive]
                wA_a = omega_A[alive]
                for _ in range(bisections):
                    mid = 0.5 * (lo_a + hi_a)
                    if straddle:
                        p1 = _clip_box(A_a - mid[:, None] * U_a, box)
                        p2 = _clip_box(A_a + mid[:, None] * U_a, box)
                        g = np.abs(omega_eval(p1)
                                   - omega_eval(p2)).max(axis=1)
                    else:
                        p2 = _clip_box(A_a + mid[:, None] * U_a, box)
                        g = np.abs(omega_eval(p2) - wA_a).max(axis=1)
                    took = g <= delta
                    lo_a = np.where(took, mid, lo_a)
                    hi_a = np.where(took, hi_a, mid)
                if straddle:
                    p1 = _clip_box(A_a - lo_a[:, None] * U_a, box)
                    p2 = _clip_box(A_a + lo_a[:, None] * U_a, box)
                else:
                    p1 = A_a
                    p2 = _clip_box(A_a + lo_a[:, None] * U_a, box)
                gap = np.abs(p1 - p2).max(axis=1)
                best = max(best, float(gap.max()))
        best_running = max(best_running, best)
        values.append(best_running)

    return PhiProfile(
        deltas=deltas, values=np.array(values),
        diagnostics={"anchors": len(anchor_pts), "directions": len(dirs),
                     "random_pairs": 4096,
                     "anchored": anchor is not None})


# =====================================================================
# the log-weighted integral and its convergence verdict
# =====================================================================

@dataclass
class IntegralReport:
    convergent: bool
    limit: float
    cutoffs: dict
    increment_ratio: float
    extrapolated_chart: bool

    def as_dict(self):
        return {
            "convergent": self.convergent,
            "limit": self.limit if math.isfinite(self.limit) else None,
            "cutoffs": {str(k): v for k, v in self.cutoffs.items()},
            "increment_ratio": self.increment_ratio,
            "extrapolated_chart": self.extrapolated_chart,
        }


def _chart_integral(w_knots, z_knots, w_lo, w_hi):
    """Exact integral of exp(z(w)) dw for the piecewise-linear chart,
    with linear extension beyond the last knot."""
    if w_hi <= w_lo:
        return 0.0, False
    total = 0.0
    extrapolated = False

    def seg(a, b, za, zb):
        if b <= a:
            return 0.0
        slope = (zb - za) / (b - a)
        if abs(slope) < 1e-14:
            return math.exp(0.5 * (za + zb)) * (b - a)
        return (math.exp(zb) - math.exp(za)) / slope

    knots = list(zip(w_knots, z_knots))
    # build the full knot path covering [w_lo, w_hi]
    def z_at(w):
        nonlocal extrapolated
        if w <= knots[0][0]:
            (w1, z1), (w2, z2) = knots[0], knots[1]
            extrapolated = extrapolated or w < w1 - 1e-12
            return z1 + (z2 - z1) * (w - w1) / (w2 - w1)
        if w >= knots[-1][0]:
            (w1, z1), (w2, z2) = knots[-2], knots[-1]
            extrapolated = extrapolated or w > knots[-1][0] + 1e-12
            return z2 + (z2 - z1) * (w - w2) / (w2 - w1)
        for (w1, z1), (w2, z2) in zip(knots, knots[1:]):
            if w1 <= w <= w2:
                return z1 + (z2 - z1) * (w - w1) / (w2 - w1)
        raise AssertionError  # pragma: no cover

    cuts = [w_lo] + [w for w, _ in knots if w_lo < w < w_hi] + [w_hi]
    for a, b in zip(cuts, cuts[1:]):
        total += seg(a, b, z_at(a), z_at(b))
    return total, extrapolated


def controllability_integral(profile=None, deltas=None, values=None,
                             phi_fn=None, tau_prime=0.5, ratio_cut=0.8,
                             min_points=20, min_decades=6.0):
    """Verdict on -integral_0^{tau'} phi(x)/(x ln x) dx.

    The cutoff trace J(k) integrates down to x = 10^{-k}; the decision
    compares decade-doubling increments r = (J12 - J6)/(J6 - J3), which is
    2^{-p} when the truncation tail decays like k^{-p}. r >= ratio_cut
    (p <= ~0.32) is the divergence verdict; otherwise the limit is the
    power-tail extrapolation J12 + (J12 - J6) r / (1 - r).
    """
    if not (0 < tau_prime <= 0.5):
        raise ValueError("tau_prime must lie in (0, 1/2]")
    if profile is not None:
        deltas = profile.deltas
        values = profile.values
    if phi_fn is not None:
        deltas = np.geomspace(1e-13, tau_prime, 121)
        values = np.array([float(phi_fn(x)) for x in deltas])
    deltas = np.asarray(deltas, dtype=float)
    values = np.asarray(values, dtype=float)
    if deltas.shape != values.shape or deltas.ndim != 1:
        raise ValueError("deltas and values must be matching 1-D arrays")
    keep = deltas < 1.0
    deltas, values = deltas[keep], values[keep]
    if deltas.size < min_points:
        raise InsufficientGrid(
            f"profile has {deltas.size} usable points, need {min_points}")
    span = math.log10(deltas.max() / deltas.min())
    if span < min_decades:
        raise InsufficientGrid(
            f"profile spans {span:.1f} decades, need {min_decades}")
    order = np.argsort(deltas)
    deltas, values = deltas[order], values[order]
    values = np.maximum.accumulate(values)  # monotone in ascending delta
    values = np.maximum(values, 1e-300)

    # chart knots, ascending in w = ln(-ln x) means descending in x
    w = np.log(-np.log(deltas))[::-1]
    z = np.log(values)[::-1]
    w, idx = np.unique(w, return_index=True)
    z = z[idx]
    if w.size < 4:
        raise InsufficientGrid("profile collapses to fewer than 4 chart knots")

    u0 = -math.log(tau_prime)
    cutoffs = {}
    extrapolated = False
    for k in (3, 6, 12):
        J, ext = _chart_integral(w, z, math.log(u0),
                                 math.log(k * math.log(10.0)))
        cutoffs[k] = J
        extrapolated = extrapolated or ext

    d_early = cutoffs[6] - cutoffs[3]
    d_late = cutoffs[12] - cutoffs[6]
    if d_early <= 0 or d_late <= 1e-300:
        return IntegralReport(True, cutoffs[12], cutoffs, 0.0, extrapolated)
    ratio = d_late / d_early
    if ratio >= ratio_cut:
        return IntegralReport(False, math.inf, cutoffs, ratio, extrapolated)
    limit = cutoffs[12] + d_late * ratio / (1.0 - ratio)
    return IntegralReport(True, limit, cutoffs, ratio, extrapolated)


# =====================================================================
# modulus-of-continuity envelope fitting
# =====================================================================

@dataclass
class ModulusFit:
    family: str
    exponent: float
    constant: float
    misfit: float
    table: list

    def as_dict(self):
        return {
            "family": self.family,
            "exponent": self.exponent,
            "constant": self.constant,
            "misfit": self.misfit,
            "table": [[float(a), float(b)] for a, b in self.table],
        }


def _envelope_misfit(t, d, shape):
    """Least constant C with d <= C * shape(t), plus mean log slack."""
    s = shape(t)
    if np.any(s <= 0):
        return math.inf, math.inf
    C = float(np.max(d / s))
    slack = np.log(C * s / d)
    return C, float(np.mean(slack))


def fit_modulus(gaps_in, gaps_out, bins=12, slack_factor=2.0):
    """Fit a modulus family to (input gap, output gap) pairs.

    Families: lipschitz d <= C t, holder d <= C t^alpha, log_holder
    d <= C (-ln t)^{-beta}. The winner minimizes mean log slack of the
    least dominating envelope over log-bin maxima; sub-factor-2 ties go to
    the simpler family, and a best slack above ln(slack_factor) returns the
    tabulated "custom" fit instead.
    """
    t = np.asarray(gaps_in, dtype=float)
    d = np.asarray(gaps_out, dtype=float)
    ok = (t > 0) & (d > 0)
    t, d = t[ok], d[ok]
    if t.size < 8:
        raise InsufficientGrid("need at least 8 positive gap pairs")
    if t.max() / t.min() < 10.0:
        raise InsufficientGrid("input gaps span less than one decade")

    edges = np.geomspace(t.min(), t.max() * (1 + 1e-12), bins + 1)
    bt, bd = [], []
    for a, b in zip(edges, edges[1:]):
        mask = (t >= a) & (t < b)
        if mask.any():
            i = np.argmax(d[mask])
            bt.append(t[mask][i])
            bd.append(d[mask][i])
    bt = np.array(bt)
    bd = np.array(bd)
    if bt.size < 4:
        raise InsufficientGrid("gap pairs collapse into fewer than 4 bins")

    fits = {}
    # holder: slope in the log-log chart, clamped to a sane range
    alpha = float(np.polyfit(np.log(bt), np.log(bd), 1)[0])
    alpha = min(max(alpha, 0.02), 1.5)
    C, mis = _envelope_misfit(bt, bd, lambda x: x ** alpha)
    fits["holder"] = (alpha, C, mis)
    C, mis = _envelope_misfit(bt, bd, lambda x: x)
    fits["lipschitz"] = (1.0, C, mis)
    if bt.max() < 1.0:
        lw = np.log(-np.log(bt))
        beta = float(-np.polyfit(lw, np.log(bd), 1)[0])
        beta = min(max(beta, 0.02), 50.0)
        C, mis = _envelope_misfit(bt, bd, lambda x: (-np.log(x)) ** (-beta))
        fits["log_holder"] = (beta, C, mis)

    order = ["lipschitz", "holder", "log_holder"]
    best = min((f for f in order if f in fits), key=lambda f: fits[f][2])
    # prefer the simpler family when nearly as tight
    for f in order:
        if f in fits and fits[f][2] <= fits[best][2] + 0.02:
            best = f
            break
    exponent, constant, misfit = fits[best]
    table = list(zip(bt.tolist(), bd.tolist()))
    if misfit > math.log(slack_factor):
        return ModulusFit("custom", math.nan, math.nan, misfit, table)
    return ModulusFit(best, exponent, constant, misfit, table)


# =====================================================================
# interiority probes
# =====================================================================

@dataclass
class InteriorReport:
    point_interior: bool
    point_margin: float
    image_interior: bool
    failed_directions: list
    probe_delta: float

    def as_dict(self):
        return {
            "point_interior": self.point_interior,
            "point_margin": self.point_margin,
            "image_interior": self.image_interior,
            "failed_directions": [[float(v) for v in d]
                                  for d in self.failed_directions],
            "probe_delta": self.probe_delta,
        }


def interiority_report(omega_eval, box, xi0, delta=1e-3):
    """Base-point and frequency-image interiority for the run hypothesis.

    The image check solves omega(xi) = omega(xi0) + delta * dir inside the
    box for every probe direction; any unsolvable direction means the
    target frequency is not interior to the image.
    """
    box = np.asarray(box, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    margin = float(np.minimum(xi0 - box[:, 0], box[:, 1] - xi0).min())
    target0 = np.asarray(omega_eval(xi0.reshape(1, -1)),
                         dtype=float).ravel()
    n = target0.shape[0]

    dirs = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        dirs.append(e.copy())
        dirs.append(-e)
    if n > 1:
        for signs in np.ndindex(*(2,) * n):
            dirs.append(np.array([1.0 if s else -1.0 for s in signs]))

    failed = []
    for d in dirs:
        try:
            res = solve_translation(omega_eval, target0 + delta * d, box,
                                    seed=xi0, tol=max(1e-12, 1e-6 * delta))
        except NoSolutionInBox:
            failed.append(d)
            continue
        if res.residual > 1e-6 * delta:
            failed.append(d)

    return InteriorReport(
        point_interior=bool(margin > 0),
        point_margin=margin,
        image_interior=not failed,
        failed_directions=failed,
        probe_delta=delta,
    )


def check_substitution_range(subs_eval, bar_box, target_box, samples=512):
    """Sampled range check xi_tilde(bar box) inside the target box."""
    bar_box = np.asarray(bar_box, dtype=float)
    target_box = np.asarray(target_box, dtype=float)
    pts = np.vstack([
        _halton_box(bar_box, samples, seed=2),
        np.array(np.meshgrid(*[[lo, hi] for lo, hi in bar_box],
                             indexing="ij")).reshape(bar_box.shape[0], -1).T,
    ])
    img = np.asarray(subs_eval(pts), dtype=float)
    lo_bad = img < target_box[:, 0]
    hi_bad = img > target_box[:, 1]
    if lo_bad.any() or hi_bad.any():
        i = int(np.argmax(lo_bad.any(axis=1) | hi_bad.any(axis=1)))
        raise SubstitutionRangeError(
            f"substitution leaves the target domain at bar parameter "
            f"{[round(float(v), 6) for v in pts[i]]} -> "
            f"{[round(float(v), 6) for v in img[i]]}")
    return True


# =====================================================================
# evaluator builders shared by the CLI and the corpus
# =====================================================================

def make_omega_evaluator(omega_trees, param_names):
    """Vector frequency map (B, m) -> (B, n) from expression trees."""
    from .expr import evaluate

    def omega(X):
        X = np.asarray(X, dtype=float)
        env = {nm: X[:, i] for i, nm in enumerate(param_names)}
        cols = []
        for tree in omega_trees:
            v = np.asarray(evaluate(tree, env), dtype=float)
            cols.append(np.broadcast_to(v, (X.shape[0],)))
        return np.stack(cols, axis=-1)

    return omega


def make_p_evaluator(p_tree, n, param_names, s, samples=24, seed=0):
    """Perturbation sampler (B, m) -> (B, S) over a fixed action/angle set."""
    from .expr import evaluate

    eng = qmc.Halton(d=2 * n, scramble=False, seed=seed)
    u = eng.random(samples)
    ys = s * (2 * u[:, :n] - 1)
    xs = 2 * np.pi * u[:, n:]
    fixed = {}
    for j in range(n):
        fixed[f"y{j + 1}"] = ys[:, j].reshape(1, -1)
        fixed[f"x{j + 1}"] = xs[:, j].reshape(1, -1)

    def p_eval(X):
        X = np.asarray(X, dtype=float)
        env = dict(fixed)
        for i, nm in enumerate(param_names):
            env[nm] = X[:, i].reshape(-1, 1)
        v = np.asarray(evaluate(p_tree, env), dtype=float)
        return np.broadcast_to(v, (X.shape[0], samples))

    return p_eval
