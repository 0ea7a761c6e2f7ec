"""Fourier-Taylor series on the annulus: sums of c * y^l * exp(i<k, x>).

Sparse representation: a dict keyed by (k, l) where k is a length-n tuple of
Fourier integers (indexed by the sup norm) and l a length-n tuple of
non-negative Taylor powers (graded by total degree). Angle variables live on
the n-torus, action variables near 0 in C^n.

Conventions that matter elsewhere:

  * reality: a real-valued series satisfies c[-k, l] = conj(c[k, l]);
    `hermitianize` enforces it, `reality_defect` measures violation.
  * the Poisson bracket here is {F, G} = sum_j (dF/dy_j dG/dx_j -
    dF/dx_j dG/dy_j), so d/dt (g o flow_F^t) = {F, g} o flow_F^t.
  * sup-norm bounds on the domain |Im x_j| <= r, |y_j| <= s weight each term
    by s^{|l|_1} e^{|k|_1 r}; the l1 weight on k is the honest contour-shift
    bound (the sup-norm weight would undercount multi-axis modes).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import AliasingError
from .expr import differentiate, evaluate

__all__ = [
    "FourierTaylorSeries", "SeriesNorm", "expand", "poisson_bracket",
    "series_from_json", "series_to_json",
]


def _zero_tuple(n):
    return (0,) * n


def _unit(n, j):
    t = [0] * n
    t[j] = 1
    return tuple(t)


@dataclass
class SeriesNorm:
    """Sup-norm information for a series on D(r, s).

    `value` is the number downstream inequalities consume; `source` says
    which of the two routes produced it ("coeff_bound" upper bound, or
    "sampled" when sampling found nothing smaller than the bound would
    suggest -- value stays the bound unless the series is empty).
    """
    value: float
    sampled: float
    coeff_bound: float
    source: str


class FourierTaylorSeries:

    __slots__ = ("n", "coeffs")

    def __init__(self, n, coeffs=None):
        self.n = int(n)
        self.coeffs = {}
        if coeffs:
            for (k, l), c in coeffs.items():
                c = complex(c)
                if c != 0:
                    self.coeffs[(tuple(k), tuple(l))] = c

    # ---- constructors ----

    @classmethod
    def zero(cls, n):
        return cls(n)

    @classmethod
    def constant(cls, n, value):
        return cls(n, {(_zero_tuple(n), _zero_tuple(n)): value})

    @classmethod
    def linear_in_y(cls, coeff_vector):
        v = np.asarray(coeff_vector)
        n = v.shape[0]
        return cls(n, {(_zero_tuple(n), _unit(n, j)): v[j]
                       for j in range(n) if v[j] != 0})

    @classmethod
    def monomial(cls, n, k, l, c=1.0):
        return cls(n, {(tuple(k), tuple(l)): c})

    # ---- bookkeeping ----

    def copy(self):
        s = FourierTaylorSeries(self.n)
        s.coeffs = dict(self.coeffs)
        return s

    def __len__(self):
        return len(self.coeffs)

    def is_zero(self):
        return not self.coeffs

    def terms(self):
        """Deterministic iteration order: lexicographic in (k, l)."""
        return sorted(self.coeffs.items())

    def kmax(self):
        return max((max(abs(v) for v in k) for (k, _) in self.coeffs),
                   default=0)

    def degmax(self):
        return max((sum(l) for (_, l) in self.coeffs), default=0)

    def __repr__(self):
        return (f"<FourierTaylorSeries n={self.n} terms={len(self.coeffs)} "
                f"kmax={self.kmax()} degmax={self.degmax()}>")

    # ---- linear algebra ----

    def _accum(self, other, factor):
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            v = out.get(key, 0j) + factor * c
            if v == 0:
                out.pop(key, None)
            else:
                out[key] = v
        s = FourierTaylorSeries(self.n)
        s.coeffs = out
        return s

    def __add__(self, other):
        return self._accum(other, 1.0)

    def __sub__(self, other):
        return self._accum(other, -1.0)

    def scale(self, factor):
        if factor == 0:
            return FourierTaylorSeries(self.n)
        s = FourierTaylorSeries(self.n)
        s.coeffs = {key: factor * c for key, c in self.coeffs.items()}
        return s

    def __neg__(self):
        return self.scale(-1.0)

    # ---- calculus ----

    def partial_y(self, j):
        out = {}
        for (k, l), c in self.coeffs.items():
            if l[j] == 0:
                continue
            l2 = list(l)
            l2[j] -= 1
            key = (k, tuple(l2))
            out[key] = out.get(key, 0j) + l[j] * c
        s = FourierTaylorSeries(self.n)
        s.coeffs = {key: c for key, c in out.items() if c != 0}
        return s

    def partial_x(self, j):
        s = FourierTaylorSeries(self.n)
        s.coeffs = {(k, l): 1j * k[j] * c
                    for (k, l), c in self.coeffs.items() if k[j] != 0}
        return s

    def mul(self, other, k_cap=None, l_cap=None):
        """Product with optional truncation to |k|_inf <= k_cap, |l| <= l_cap.

        Returns (product, dropped_weight) where dropped_weight is the plain
        sum of |cA*cB| over discarded key pairs (domain weights are applied
        by the caller that knows the target radii).
        """
        if not self.coeffs or not other.coeffs:
            return FourierTaylorSeries(self.n), 0.0
        ka, la, va = _to_arrays(self)
        kb, lb, vb = _to_arrays(other)
        kk = ka[:, None, :] + kb[None, :, :]
        ll = la[:, None, :] + lb[None, :, :]
        vv = va[:, None] * vb[None, :]
        keep = np.ones(vv.shape, dtype=bool)
        if k_cap is not None:
            keep &= np.abs(kk).max(axis=2) <= k_cap
        if l_cap is not None:
            keep &= ll.sum(axis=2) <= l_cap
        dropped = float(np.abs(vv[~keep]).sum())
        kk = kk[keep]
        ll = ll[keep]
        vv = vv[keep]
        return _from_arrays(self.n, np.hstack([kk, ll]), vv), dropped

    def __mul__(self, other):
        return self.mul(other)[0]

    # ---- projections ----

    def angle_average(self):
        """The k = 0 part [.] (integral over the torus)."""
        s = FourierTaylorSeries(self.n)
        zero = _zero_tuple(self.n)
        s.coeffs = {(k, l): c for (k, l), c in self.coeffs.items() if k == zero}
        return s

    def oscillating_part(self):
        s = FourierTaylorSeries(self.n)
        zero = _zero_tuple(self.n)
        s.coeffs = {(k, l): c for (k, l), c in self.coeffs.items() if k != zero}
        return s

    def const_coeff(self):
        return self.coeffs.get((_zero_tuple(self.n), _zero_tuple(self.n)), 0j)

    def linear_y_coeffs(self):
        zero = _zero_tuple(self.n)
        return np.array([self.coeffs.get((zero, _unit(self.n, j)), 0j)
                         for j in range(self.n)])

    def truncate(self, k_cap, l_cap, s_tail, r_tail):
        """Split into (kept, tail_weight). tail_weight bounds the sup of the
        dropped part on D(r_tail, s_tail)."""
        kept = {}
        tail = 0.0
        for (k, l), c in self.coeffs.items():
            if max((abs(v) for v in k), default=0) <= k_cap and sum(l) <= l_cap:
                kept[(k, l)] = c
            else:
                tail += abs(c) * s_tail ** sum(l) * math.exp(
                    sum(abs(v) for v in k) * r_tail)
        s = FourierTaylorSeries(self.n)
        s.coeffs = kept
        return s, tail

    def drop_small(self, rel_tol=1e-14):
        if not self.coeffs:
            return self
        top = max(abs(c) for c in self.coeffs.values())
        cut = rel_tol * top
        s = FourierTaylorSeries(self.n)
        s.coeffs = {key: c for key, c in self.coeffs.items() if abs(c) > cut}
        return s

    # ---- reality ----

    def hermitianize(self):
        out = {}
        for (k, l), c in self.coeffs.items():
            mk = tuple(-v for v in k)
            mirror = self.coeffs.get((mk, l), 0j)
            out[(k, l)] = 0.5 * (c + mirror.conjugate())
        s = FourierTaylorSeries(self.n)
        s.coeffs = {key: c for key, c in out.items() if c != 0}
        return s

    def reality_defect(self):
        worst = 0.0
        for (k, l), c in self.coeffs.items():
            mk = tuple(-v for v in k)
            mirror = self.coeffs.get((mk, l), 0j)
            worst = max(worst, abs(c - mirror.conjugate()))
        return worst

    # ---- evaluation and norms ----

    def evaluate(self, y, x):
        """Complex value at actions y and angles x, shapes (..., n)."""
        y = np.asarray(y, dtype=complex)
        x = np.asarray(x, dtype=complex)
        batch = np.broadcast(y[..., 0], x[..., 0]).shape
        total = np.zeros(batch, dtype=complex)
        for (k, l), c in self.coeffs.items():
            term = np.full(batch, c, dtype=complex)
            for j in range(self.n):
                if l[j]:
                    term = term * y[..., j] ** l[j]
                if k[j]:
                    term = term * np.exp(1j * k[j] * x[..., j])
            total += term
        return total

    def evaluate_real(self, y, x, tol=1e-8):
        v = self.evaluate(y, x)
        return np.real(v)

    def norm(self, s, r, samples=256):
        """Sup-norm data on D(r, s); `value` is the coefficient upper bound."""
        bound = 0.0
        for (k, l), c in self.coeffs.items():
            bound += abs(c) * s ** sum(l) * math.exp(
                r * sum(abs(v) for v in k))
        sampled = self._sampled_sup(s, r, samples) if self.coeffs else 0.0
        return SeriesNorm(value=bound, sampled=sampled, coeff_bound=bound,
                          source="coeff_bound")

    def _sampled_sup(self, s, r, samples):
        n = self.n
        # Halton points across action moduli/phases and angle strips
        eng = qmc.Halton(d=4 * n, scramble=False, seed=0)
        u = eng.random(samples)
        y = s * u[:, 0:n] * np.exp(2j * np.pi * u[:, n:2 * n])
        x = 2 * np.pi * u[:, 2 * n:3 * n] + 1j * r * (2 * u[:, 3 * n:4 * n] - 1)
        best = float(np.abs(self.evaluate(y, x)).max())
        # deterministic extreme corners: |y_j| = s, Im x_j = +- r
        for signs in itertools.product((-1.0, 1.0), repeat=n):
            yc = np.full(n, s, dtype=complex)
            xc = 1j * r * np.array(signs)
            best = max(best, float(abs(self.evaluate(yc, xc))))
            best = max(best, float(abs(self.evaluate(-yc, xc))))
        return best


def _to_arrays(series):
    items = series.terms()
    n = series.n
    keys = np.array([list(k) + list(l) for (k, l), _ in items], dtype=np.int64)
    vals = np.array([c for _, c in items], dtype=complex)
    return keys[:, :n], keys[:, n:], vals


def _from_arrays(n, keys, vals):
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    re = np.bincount(inv, weights=vals.real, minlength=len(uniq))
    im = np.bincount(inv, weights=vals.imag, minlength=len(uniq))
    s = FourierTaylorSeries(n)
    for row, a, b in zip(uniq, re, im):
        if a != 0 or b != 0:
            s.coeffs[(tuple(int(v) for v in row[:n]),
                      tuple(int(v) for v in row[n:]))] = complex(a, b)
    return s


def poisson_bracket(f, g, k_cap=None, l_cap=None):
    """{f, g} = sum_j df/dy_j dg/dx_j - df/dx_j dg/dy_j, truncated to caps.

    Returns (bracket, dropped_weight).
    """
    n = f.n
    out = FourierTaylorSeries(n)
    dropped = 0.0
    for j in range(n):
        a, da = f.partial_y(j).mul(g.partial_x(j), k_cap, l_cap)
        b, db = f.partial_x(j).mul(g.partial_y(j), k_cap, l_cap)
        out = out + a - b
        dropped += da + db
    return out, dropped


# ---- expansion of a symbolic perturbation ----

_DERIV_CACHE = {}


def _y_derivative(expr_tree, l, n):
    """d^l expr / dy^l, cached; differentiation order is fixed for
    reproducibility."""
    key = (expr_tree, tuple(l))
    hit = _DERIV_CACHE.get(key)
    if hit is not None:
        return hit
    if len(_DERIV_CACHE) > 4096:
        _DERIV_CACHE.clear()
    if sum(l) == 0:
        out = expr_tree
    else:
        j = next(i for i in range(n) if l[i] > 0)
        lower = list(l)
        lower[j] -= 1
        out = differentiate(_y_derivative(expr_tree, lower, n), f"y{j + 1}")
    _DERIV_CACHE[key] = out
    return out


def _multi_indices(n, max_total):
    out = []
    for l in itertools.product(range(max_total + 1), repeat=n):
        if sum(l) <= max_total:
            out.append(l)
    out.sort(key=lambda l: (sum(l), l))
    return out


def _fft_coefficients(values, k_cap):
    """Map an n-dim grid of samples to {k tuple: coefficient}, |k|_inf<=k_cap."""
    n = values.ndim
    N = values.shape[0]
    c = np.fft.fftn(values) / (N ** n)
    band = [(k, k % N) for k in range(-k_cap, k_cap + 1)]
    out = {}
    for combo in itertools.product(band, repeat=n):
        k = tuple(v for v, _ in combo)
        idx = tuple(i for _, i in combo)
        out[k] = c[idx]
    return out


def _expand_once(expr_tree, n, param_env, k_cap, deg_cap, y_center, N):
    theta = 2 * np.pi * np.arange(N) / N
    grids = np.meshgrid(*([theta] * n), indexing="ij")
    env = dict(param_env)
    for j in range(n):
        env[f"x{j + 1}"] = grids[j]
        env[f"y{j + 1}"] = float(y_center[j])
    coeffs = {}
    for l in _multi_indices(n, deg_cap):
        tree = _y_derivative(expr_tree, l, n)
        fact = 1.0
        for v in l:
            fact *= math.factorial(v)
        vals = np.asarray(evaluate(tree, env), dtype=float)
        if vals.shape != grids[0].shape:
            vals = np.broadcast_to(vals, grids[0].shape)
        for k, c in _fft_coefficients(vals / fact, k_cap).items():
            if c != 0:
                coeffs[(k, l)] = coeffs.get((k, l), 0j) + c
    return coeffs


def expand(expr_tree, n, params=None, k_cap=8, deg_cap=4, y_center=None,
           grid_size=None, aliasing_tol=1e-10, drop_tol=1e-14):
    """Expand P(y, x, params) into a Fourier-Taylor series around y_center.

    Taylor part: symbolic y-derivatives up to total degree deg_cap, evaluated
    at y_center. Fourier part: FFT on an odd grid of at least 4*k_cap + 1
    points per angle; the expansion is recomputed on a doubled grid and a
    relative coefficient change above aliasing_tol raises AliasingError.

    Returns (series, info dict).
    """
    if y_center is None:
        y_center = np.zeros(n)
    y_center = np.asarray(y_center, dtype=float)
    N = grid_size if grid_size else 4 * k_cap + 1
    N = max(N, 4 * k_cap + 1)
    if N % 2 == 0:
        N += 1
    param_env = {k: float(v) for k, v in (params or {}).items()}

    first = _expand_once(expr_tree, n, param_env, k_cap, deg_cap, y_center, N)
    second = _expand_once(expr_tree, n, param_env, k_cap, deg_cap, y_center,
                          2 * N + 1)
    keys = set(first) | set(second)
    top = max((max(abs(first.get(k, 0j)), abs(second.get(k, 0j)))
               for k in keys), default=0.0)
    worst = 0.0
    for key in keys:
        worst = max(worst, abs(first.get(key, 0j) - second.get(key, 0j)))
    rel = worst / top if top > 0 else 0.0
    if top > 0 and rel > aliasing_tol:
        raise AliasingError(
            f"Fourier coefficients moved by {rel:.3e} relative under grid "
            f"doubling (N = {N} -> {2 * N + 1}); raise k_cap or grid_size")

    series = FourierTaylorSeries(n, second)
    series = series.hermitianize().drop_small(drop_tol)
    # snap FFT rounding junk in individual components
    snapped = {}
    for key, c in series.coeffs.items():
        mag = abs(c)
        re = 0.0 if abs(c.real) < 1e-14 * mag else c.real
        im = 0.0 if abs(c.imag) < 1e-14 * mag else c.imag
        snapped[key] = complex(re, im)
    series.coeffs = snapped
    info = {"grid": N, "grid_check": 2 * N + 1, "aliasing_rel_change": rel}
    return series, info


# ---- serialization ----

def series_to_json(series, s=None, r=None):
    return {
        "n": series.n,
        "kmax": series.kmax(),
        "degmax": series.degmax(),
        "s": s,
        "r": r,
        "coeffs": [[list(k), list(l), c.real, c.imag]
                   for (k, l), c in series.terms()],
    }


def series_from_json(doc):
    n = int(doc["n"])
    coeffs = {}
    for k, l, re, im in doc["coeffs"]:
        coeffs[(tuple(int(v) for v in k), tuple(int(v) for v in l))] = \
            complex(re, im)
    return FourierTaylorSeries(n, coeffs)
