"""Quasi-linear normal-form step algebra.

Two pieces, both operating on Fourier-Taylor series:

solve_homological: given the truncated perturbation R, the pinned frequency
omega0 and the accumulated average correction hbar(y), solve

    (i<k, omega0> + i<k, d_y hbar(y)>) F_k(y) = R_k(y),   0 < |k| <= K

for each Fourier mode as a Neumann series in the polynomial part
b_k(y) = i<k, d_y hbar>: F_k = (R_k/d_k) sum_m (-b_k/d_k)^m, truncated at
Taylor degree 4. Because hbar starts at degree 2, b_k raises degree, so the
series terminates after at most four corrections; the degree >= 5 defect
R - [R] - {N, F} is returned explicitly as `residual` rather than silently
dropped. Divisors, including the y-dependent part, are guarded against the
threshold gamma_div / (3 |k|^tau) on sampled real actions.

lie_transform: pushes the Hamiltonian through the time-1 flow of F and
returns the next perturbation assembled cancellation-free:

    P_next = residual + sum_{j>=2} ad^j N / j! + sum_{j>=1} ad^j R / j!
             + exp(ad)(P - R),        ad g = {F, g}

which equals (N + P) o flow - (N + [R]) exactly, with no subtraction of the
nearly-cancelling first-order terms. Chains stop on term-norm decay and
raise LieDivergence after three consecutive growing orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import LieDivergence, NeumannDivergence, SmallDivisorBreach
from .series import FourierTaylorSeries, poisson_bracket

__all__ = [
    "HomologicalSolution", "LieResult", "solve_homological", "lie_transform",
    "hamiltonian_vector_field",
]


# ---- small dense helpers for per-mode polynomials in y ----

def _poly_scale(p, c):
    return {l: v * c for l, v in p.items()}


def _poly_mul(a, b, deg_cap):
    out = {}
    for la, va in a.items():
        for lb, vb in b.items():
            l = tuple(x + y for x, y in zip(la, lb))
            if sum(l) > deg_cap:
                continue
            out[l] = out.get(l, 0j) + va * vb
    return {l: v for l, v in out.items() if v != 0}


def _poly_max(p):
    return max((abs(v) for v in p.values()), default=0.0)


def _poly_eval(p, y):
    """y: (m, n) real points -> (m,) complex values."""
    total = np.zeros(y.shape[0], dtype=complex)
    for l, v in p.items():
        term = np.full(y.shape[0], v, dtype=complex)
        for j, lj in enumerate(l):
            if lj:
                term *= y[:, j] ** lj
        total += term
    return total


def _action_samples(n, s, count=32):
    eng = qmc.Halton(d=n, scramble=False, seed=0)
    pts = s * (2.0 * eng.random(count) - 1.0)
    corners = s * np.array(
        np.meshgrid(*([[-1.0, 1.0]] * n), indexing="ij")
    ).reshape(n, -1).T
    return np.vstack([np.zeros((1, n)), pts, corners])


@dataclass
class HomologicalSolution:
    F: FourierTaylorSeries
    residual: FourierTaylorSeries
    residual_norm: float
    divisor_min: float          # min sampled |divisor| * 3|k|^tau / gamma_div
    neumann_orders: int


def solve_homological(R, omega0, hbar, tau, gamma_div, s, r,
                      deg_cap=4, max_orders=50):
    """Solve the homological equation mode by mode. R may include its angle
    average; only the oscillating part is used."""
    n = R.n
    omega0 = np.asarray(omega0, dtype=float)

    # group oscillating coefficients per Fourier mode
    modes = {}
    zero = (0,) * n
    for (k, l), c in R.coeffs.items():
        if k == zero:
            continue
        modes.setdefault(k, {})[l] = c

    # gradient of hbar as per-component polynomials
    grads = []
    for j in range(n):
        gj = {}
        for (k, l), c in hbar.partial_y(j).coeffs.items():
            gj[l] = gj.get(l, 0j) + c
        grads.append(gj)

    y_pts = _action_samples(n, s)
    F = FourierTaylorSeries(n)
    divisor_min = math.inf
    max_used = 0

    for k in sorted(modes):
        Rk = modes[k]
        d = 1j * float(np.dot(k, omega0))
        bk = {}
        for j in range(n):
            if k[j] == 0:
                continue
            for l, c in grads[j].items():
                bk[l] = bk.get(l, 0j) + 1j * k[j] * c

        knorm = max(abs(v) for v in k)
        floor = gamma_div / (3.0 * knorm ** tau)
        div_samples = np.abs(d + _poly_eval(bk, y_pts)) if bk else \
            np.full(y_pts.shape[0], abs(d))
        worst = float(div_samples.min())
        divisor_min = min(divisor_min, worst / floor)
        if worst <= floor:
            raise SmallDivisorBreach(
                f"divisor |i<k, omega> + i<k, dh>| = {worst:.3e} at k = {k} "
                f"fell under gamma_div/(3|k|^tau) = {floor:.3e}",
                k=k, magnitude=worst, bound=floor)

        term = _poly_scale(Rk, 1.0 / d)
        Fk = dict(term)
        prev = _poly_max(term)
        grew = 0
        for order in range(1, max_orders + 1):
            if not bk:
                break
            term = _poly_scale(_poly_mul(bk, term, deg_cap), -1.0 / d)
            if not term:
                max_used = max(max_used, order)
                break
            for l, v in term.items():
                Fk[l] = Fk.get(l, 0j) + v
            cur = _poly_max(term)
            if cur <= 1e-17 * _poly_max(Fk):
                max_used = max(max_used, order)
                break
            grew = grew + 1 if cur > prev else 0
            if grew >= 3:
                raise NeumannDivergence(
                    f"Neumann corrections growing at k = {k}: "
                    f"|term| reached {cur:.3e}")
            prev = cur
        else:
            raise NeumannDivergence(
                f"Neumann series did not settle within {max_orders} orders "
                f"at k = {k}")
        for l, v in Fk.items():
            if v != 0:
                F.coeffs[(k, l)] = v

    # defect: R_osc - {N, F} with N = <omega0, y> + hbar
    N_full = FourierTaylorSeries.linear_in_y(omega0) + hbar
    NF, _ = poisson_bracket(N_full, F)
    residual = R.oscillating_part() - NF
    residual = residual.drop_small(1e-15)
    res_norm = residual.norm(s, r).value
    if not modes:
        divisor_min = math.inf
    return HomologicalSolution(
        F=F, residual=residual, residual_norm=res_norm,
        divisor_min=divisor_min, neumann_orders=max_used)


@dataclass
class LieResult:
    P_next: FourierTaylorSeries
    chain_norms: dict
    orders: dict
    dropped: float


def _exp_ad_chain(F, g, start_order, s, r, k_cap, l_cap, base, max_order):
    """sum_{j >= start_order} ad_F^j(g)/j! with term-norm stopping.

    Returns (sum series, norm trace, orders used, dropped weight)."""
    n = F.n
    total = FourierTaylorSeries(n)
    if g.is_zero():
        return total, [], 0, 0.0
    term = g
    dropped = 0.0
    # build term_j = ad^j(g)/j! incrementally
    for j in range(1, start_order):
        term, dw = poisson_bracket(F, term, k_cap, l_cap)
        term = term.scale(1.0 / j)
        dropped += dw
    if start_order == 0:
        total = total + term  # j = 0 term is g itself
    trace = []
    grew = 0
    prev = None
    j = max(start_order, 1)
    tol = 1e-16 * base
    while j <= max_order:
        term, dw = poisson_bracket(F, term, k_cap, l_cap)
        term = term.scale(1.0 / j)
        dropped += dw
        if j >= start_order:
            total = total + term
            tn = term.norm(s, r).value
            trace.append(tn)
            if term.is_zero() or tn <= tol:
                return total, trace, j, dropped
            if prev is not None and tn > prev:
                grew += 1
                if grew >= 3 and tn > base:
                    raise LieDivergence(
                        f"Lie chain terms growing: order {j} norm {tn:.3e} "
                        f"(start {trace[0]:.3e})")
            else:
                grew = 0
            prev = tn
        j += 1
    if trace and trace[-1] > tol:
        raise LieDivergence(
            f"Lie chain did not settle within {max_order} orders "
            f"(last term norm {trace[-1]:.3e})")
    return total, trace, min(j, max_order), dropped


def lie_transform(P, R, F, N_full, residual, s, r, k_cap=None, l_cap=8,
                  max_order=30):
    """Assemble the transformed perturbation after the time-1 flow of F."""
    base = max(P.norm(s, r).value, R.norm(s, r).value, 1e-300)
    chains = {}
    orders = {}
    dropped = 0.0

    sN, trN, oN, dN = _exp_ad_chain(F, N_full, 2, s, r, k_cap, l_cap, base,
                                    max_order)
    sR, trR, oR, dR = _exp_ad_chain(F, R, 1, s, r, k_cap, l_cap, base,
                                    max_order)
    tail = P - R
    sT, trT, oT, dT = _exp_ad_chain(F, tail, 0, s, r, k_cap, l_cap, base,
                                    max_order)
    chains["avg_part"] = trN
    chains["resonant_part"] = trR
    chains["taylor_tail"] = trT
    orders = {"avg_part": oN, "resonant_part": oR, "taylor_tail": oT}
    dropped = dN + dR + dT

    P_next = residual + sN + sR + sT
    P_next = P_next.hermitianize().drop_small(1e-15)
    return LieResult(P_next=P_next, chain_norms=chains, orders=orders,
                     dropped=dropped)


def hamiltonian_vector_field(F):
    """Real vector field of the generator: z = (y, x) -> (dy/dt, dx/dt)
    with dy/dt = -dF/dx, dx/dt = +dF/dy."""
    n = F.n
    dFdx = [F.partial_x(j) for j in range(n)]
    dFdy = [F.partial_y(j) for j in range(n)]

    def field(t, z):
        z = np.asarray(z, dtype=float)
        y = z[:n].reshape(1, n)
        x = z[n:].reshape(1, n)
        dy = np.array([-float(np.real(d.evaluate(y, x)[0])) for d in dFdx])
        dx = np.array([float(np.real(d.evaluate(y, x)[0])) for d in dFdy])
        return np.concatenate([dy, dx])

    return field
