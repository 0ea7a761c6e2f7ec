"""Root solving for the frequency-translation equation.

The equation is f(xi) = freq(xi) + drift(xi) - target = 0 over a closed
parameter box, where drift collects the average-part frequency corrections
accumulated by the iteration. Strategy, in order:

  1. damped Newton from the seed (finite-difference Jacobian, least-squares
     step so near-singular Jacobians degrade instead of exploding);
  2. per-component bisection when the map is separable with one
     strictly-monotone input per output (catches flat-at-the-seed maps
     like mollifier frequencies where Newton's Jacobian vanishes);
  3. coarse-to-fine grid search with Newton polish.

A converged root is accepted only strictly inside the box. Roots found
outside are reported in the NoSolutionInBox diagnostics, never returned.
When several interior roots exist the one nearest the seed (sup distance)
wins; enumerate_candidates=True additionally returns every distinct
polished root on the coarse grid, sorted by distance from the seed.

All candidate maps are evaluated batched (B, m) -> (B, n) when the callable
supports it, with a row-loop fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoSolutionInBox

__all__ = ["TranslationResult", "solve_translation"]


@dataclass
class TranslationResult:
    xi: np.ndarray
    residual: float
    method: str
    iterations: int
    interior_margin: float
    gap_from_seed: float
    candidates: list = field(default_factory=list)

    def as_dict(self):
        return {
            "xi": [float(v) for v in self.xi],
            "residual": self.residual,
            "method": self.method,
            "iterations": self.iterations,
            "interior_margin": self.interior_margin,
            "gap_from_seed": self.gap_from_seed,
            "candidates": [[float(v) for v in c] for c in self.candidates],
        }


def _batch(fn, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    rows = X.reshape(1, -1) if single else X
    try:
        out = np.asarray(fn(rows), dtype=float)
        if out.shape[0] != rows.shape[0]:
            raise ValueError
    except Exception:
        out = np.stack([np.asarray(fn(row), dtype=float).ravel()
                        for row in rows])
    return out[0] if single else out


def _interior_margin(xi, box):
    lo = box[:, 0]
    hi = box[:, 1]
    return float(np.minimum(xi - lo, hi - xi).min())


class _Problem:
    def __init__(self, freq, drift, target, box, tol):
        self.freq = freq
        self.drift = drift
        self.target = np.asarray(target, dtype=float).ravel()
        self.box = np.asarray(box, dtype=float).reshape(-1, 2)
        self.tol = tol
        self.m = self.box.shape[0]
        self.widths = self.box[:, 1] - self.box[:, 0]
        self.center = 0.5 * (self.box[:, 0] + self.box[:, 1])
        self.evals = 0

    def residual(self, X):
        X = np.asarray(X, dtype=float)
        rows = X.reshape(1, -1) if X.ndim == 1 else X
        self.evals += rows.shape[0]
        out = _batch(self.freq, rows) - self.target
        if self.drift is not None:
            out = out + _batch(self.drift, rows)
        return out[0] if X.ndim == 1 else out

    def sup(self, X):
        r = self.residual(X)
        return float(np.abs(r).max()) if r.ndim == 1 else np.abs(r).max(axis=1)


def _newton(prob, start, max_iter=50):
    """Damped Newton; returns (point, residual_sup, iterations, converged)."""
    xi = np.asarray(start, dtype=float).copy()
    scale = np.maximum(1.0, np.abs(prob.widths))
    f = prob.residual(xi)
    best = (xi.copy(), float(np.abs(f).max()))
    wander = 10.0 * float(np.abs(prob.widths).max())
    for it in range(1, max_iter + 1):
        fn = float(np.abs(f).max())
        if fn <= prob.tol:
            return xi, fn, it - 1, True
        h = 1e-7 * scale
        probes = []
        for i in range(prob.m):
            e = np.zeros(prob.m)
            e[i] = h[i]
            probes.append(xi + e)
            probes.append(xi - e)
        vals = prob.residual(np.array(probes))
        J = np.empty((vals.shape[1], prob.m))
        for i in range(prob.m):
            J[:, i] = (vals[2 * i] - vals[2 * i + 1]) / (2 * h[i])
        try:
            step, *_ = np.linalg.lstsq(J, f, rcond=None)
        except np.linalg.LinAlgError:
            return best[0], best[1], it, False
        if not np.all(np.isfinite(step)) or float(np.abs(step).max()) == 0.0:
            return best[0], best[1], it, False
        lam = 1.0
        moved = False
        for _ in range(30):
            trial = xi - lam * step
            ft = prob.residual(trial)
            if float(np.abs(ft).max()) < fn:
                xi, f = trial, ft
                moved = True
                break
            lam *= 0.5
        if not moved:
            return best[0], best[1], it, False
        if float(np.abs(f).max()) < best[1]:
            best = (xi.copy(), float(np.abs(f).max()))
        if float(np.abs(xi - prob.center).max()) > wander:
            return best[0], best[1], it, False
    fn = float(np.abs(f).max())
    return (xi, fn, max_iter, fn <= prob.tol)


def _separable_permutation(prob):
    """Map output j -> input i when each output responds to exactly one
    input on center-anchored slices; None when that structure is absent."""
    c = prob.center
    f0 = prob.residual(c)
    n_out = f0.shape[0]
    if n_out != prob.m:
        return None
    spans = np.zeros((n_out, prob.m))
    for i in range(prob.m):
        ts = np.linspace(prob.box[i, 0], prob.box[i, 1], 9)
        pts = np.tile(c, (9, 1))
        pts[:, i] = ts
        vals = prob.residual(pts)
        spans[:, i] = vals.max(axis=0) - vals.min(axis=0)
    perm = {}
    for j in range(n_out):
        floor = 1e-9 * max(spans[j].max(), abs(f0[j]), 1e-30)
        deps = [i for i in range(prob.m) if spans[j, i] > floor]
        if len(deps) != 1:
            return None
        perm[j] = deps[0]
    if len(set(perm.values())) != n_out:
        return None
    return perm


def _bisect_component(prob, j, i):
    """Root of f_j along input i with the others fixed at the center;
    requires a sign change and sampled monotonicity."""
    lo, hi = prob.box[i]
    ts = np.linspace(lo, hi, 33)
    pts = np.tile(prob.center, (33, 1))
    pts[:, i] = ts
    vals = prob.residual(pts)[:, j]
    diffs = np.diff(vals)
    if not (np.all(diffs >= 0) or np.all(diffs <= 0)):
        return None
    if vals[0] == 0.0:
        return lo
    if vals[-1] == 0.0:
        return hi
    if vals[0] * vals[-1] > 0:
        return None
    a, b = lo, hi
    fa = vals[0]
    width = hi - lo
    probe = np.array(prob.center)
    for _ in range(200):
        mid = 0.5 * (a + b)
        probe[i] = mid
        fm = float(prob.residual(probe)[j])
        if fm == 0.0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
        if b - a <= 1e-17 * max(1.0, width):
            break
    return 0.5 * (a + b)


def _grid_axes(prob, level_box, points):
    return [np.linspace(level_box[i, 0], level_box[i, 1], points)
            for i in range(prob.m)]


def _grid_points(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def _grid_search(prob, levels=4):
    per_dim = {1: 65, 2: 33, 3: 11, 4: 7}.get(prob.m, 5)
    box = prob.box.copy()
    best_pt = None
    best_val = math.inf
    for _ in range(levels):
        axes = _grid_axes(prob, box, per_dim)
        pts = _grid_points(axes)
        vals = prob.sup(pts)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_pt = pts[i].copy()
        span = (box[:, 1] - box[:, 0]) / 3.0
        lo = np.maximum(prob.box[:, 0], best_pt - span / 2)
        hi = np.minimum(prob.box[:, 1], best_pt + span / 2)
        box = np.stack([lo, hi], axis=1)
    return best_pt, best_val


def _local_minima_roots(prob, per_dim):
    """Polish every local minimum of |f| on a coarse grid; return the
    distinct converged interior roots."""
    axes = _grid_axes(prob, prob.box, per_dim)
    pts = _grid_points(axes)
    vals = prob.sup(pts).reshape([per_dim] * prob.m)
    starts = []
    it = np.nditer(vals, flags=["multi_index"])
    for v in it:
        idx = it.multi_index
        is_min = True
        for d in range(prob.m):
            for step in (-1, 1):
                nb = list(idx)
                nb[d] += step
                if 0 <= nb[d] < per_dim and vals[tuple(nb)] < v:
                    is_min = False
                    break
            if not is_min:
                break
        if is_min:
            starts.append(np.array([axes[d][idx[d]] for d in range(prob.m)]))
    roots = []
    for s0 in starts:
        xi, fn, _, ok = _newton(prob, s0)
        if not ok or fn > prob.tol:
            continue
        if _interior_margin(xi, prob.box) <= 0:
            continue
        if any(float(np.abs(xi - r).max()) < 1e-8 * max(1.0, float(np.abs(prob.widths).max()))
               for r in roots):
            continue
        roots.append(xi)
    return roots


def solve_translation(freq, target, box, seed=None, drift=None, tol=1e-12,
                      enumerate_candidates=False, max_newton=50):
    """Solve freq(xi) + drift(xi) = target for xi strictly inside box."""
    prob = _Problem(freq, drift, target, box, tol)
    seed = prob.center.copy() if seed is None else \
        np.asarray(seed, dtype=float).ravel().copy()

    exterior_root = None
    best_pt, best_val = None, math.inf
    found = []  # (xi, residual, method, iterations)

    def note(pt, val):
        nonlocal best_pt, best_val
        if val < best_val and _interior_margin(pt, prob.box) >= 0:
            best_pt, best_val = np.array(pt), float(val)

    xi, fn, its, ok = _newton(prob, seed, max_newton)
    note(xi, fn)
    if ok:
        if _interior_margin(xi, prob.box) > 0:
            found.append((xi, fn, "newton", its))
        else:
            exterior_root = xi

    if not found:
        perm = _separable_permutation(prob)
        if perm is not None:
            xi = np.array(prob.center)
            complete = True
            for j, i in perm.items():
                root = _bisect_component(prob, j, i)
                if root is None:
                    complete = False
                    break
                xi[i] = root
            if complete:
                fn = prob.sup(xi)
                note(xi, fn)
                if fn <= tol and _interior_margin(xi, prob.box) > 0:
                    found.append((xi, fn, "bisection", 200))

    if not found:
        start, val = _grid_search(prob)
        note(start, val)
        xi, fn, its, ok = _newton(prob, start, max_newton)
        note(xi, fn)
        if ok and fn <= tol:
            if _interior_margin(xi, prob.box) > 0:
                found.append((xi, fn, "grid+newton", its))
            elif exterior_root is None:
                exterior_root = xi

    candidates = []
    if enumerate_candidates:
        per_dim = {1: 41, 2: 41, 3: 17}.get(prob.m, 9)
        candidates = _local_minima_roots(prob, per_dim)
        for c in candidates:
            fn = prob.sup(c)
            if not any(float(np.abs(c - f[0]).max()) < 1e-10 for f in found):
                found.append((c, fn, "grid+newton", 0))

    if not found:
        raise NoSolutionInBox(
            f"no root inside the box (best residual {best_val:.6e} at "
            f"{[round(float(v), 8) for v in best_pt]}"
            + (f"; a root exists outside the box at "
               f"{[round(float(v), 8) for v in exterior_root]}"
               if exterior_root is not None else "") + ")",
            best_point=best_pt, best_residual=best_val,
            exterior_root=exterior_root)

    found.sort(key=lambda t: (float(np.abs(t[0] - seed).max()),
                              tuple(t[0])))
    xi, fn, method, its = found[0]
    cand_sorted = sorted((c for c in candidates),
                         key=lambda c: (float(np.abs(c - seed).max()),
                                        tuple(c)))
    return TranslationResult(
        xi=xi, residual=fn, method=method, iterations=its,
        interior_margin=_interior_margin(xi, prob.box),
        gap_from_seed=float(np.abs(xi - seed).max()),
        candidates=cand_sorted,
    )
