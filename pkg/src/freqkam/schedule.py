"""Iteration schedule: radii, smallness thresholds and their recursions.

All sequences are evaluated with mpmath at 50 significant digits and rounded
to float64 once on the way out, so the recursion and its closed form can be
compared as formulas rather than as accumulations of float rounding. Modes:

  * "practical": the size recursion mu -> mu^{1+rho} carries no prefactor,
    so decay is visible at workstation-scale epsilon;
  * "paper_faithful": the full 8^4 * c0 prefactor and every smallness
    condition treated as a hard requirement. At workstation-scale epsilon
    these conditions fail (they hold only for astronomically small eps);
    the engine then refuses to iterate instead of warning.

The step at index nu consumes (r_nu, s_nu, mu_nu) and produces the nu+1
values; the Fourier cutoff K_{nu+1} used by the step's truncation follows
the iteration formula (floor(-ln mu_nu) + 1)^{3 eta}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp
from scipy.special import gammaincc, gammaln

from .errors import InvalidTau, ScheduleUnsatisfied
from .diophantine import tau_floor

__all__ = ["KamSchedule", "truncation_decay_integral"]

MODES = ("practical", "paper_faithful")

RHO = mp.mpf(1) / 10


def _eta():
    """Smallest integer with (1 + rho)^eta > 2."""
    eta = 1
    while (1 + RHO) ** eta <= 2:
        eta += 1
    return eta


def truncation_decay_integral(n, a, K):
    """integral_K^inf t^n e^{-a t} dt for integer n >= 0, a > 0."""
    n = int(n)
    # a^{-(n+1)} Gamma(n+1) Q(n+1, aK), Q the regularized upper gamma
    logpart = gammaln(n + 1) - (n + 1) * math.log(a)
    return float(math.exp(logpart) * gammaincc(n + 1, a * K))


@dataclass
class KamSchedule:
    n: int
    tau: float
    epsilon: float
    r0: float = 1.0
    s_base: float = 1.0
    mode: str = "practical"
    c0: float = 1.0
    m_star: float = 0.0

    rho: float = field(init=False)
    eta: int = field(init=False)
    gamma0: float = field(init=False)
    mu0: float = field(init=False)
    k1: int = field(init=False)
    s0: float = field(init=False)
    rho0: float = field(init=False)
    mu_prefactor: float = field(init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if not (0.0 < self.r0 <= 2.0):
            raise ValueError("r0 must lie in (0, 2]")
        if self.s_base <= 0:
            raise ValueError("s_base must be positive")
        if self.tau <= tau_floor(self.n):
            raise InvalidTau(
                f"tau = {self.tau} must exceed max(n - 1, 1) = "
                f"{tau_floor(self.n)} for n = {self.n}")

        with mp.workdps(50):
            eps = mp.mpf(self.epsilon)
            self.rho = float(RHO)
            self.eta = _eta()
            g0 = eps ** (mp.mpf(1) / (24 * self.n))
            m0 = eps ** (mp.mpf(1) / (40 * self.eta * (self.tau + 1)))
            k1 = int(mp.floor(-mp.log(m0)) + 1) ** (3 * self.eta)
            s0 = (mp.mpf(self.s_base) * g0
                  / (16 * (self.m_star + 2) * mp.mpf(k1) ** (self.tau + 1)))
            self.gamma0 = float(g0)
            self.mu0 = float(m0)
            self.k1 = k1
            self.s0 = float(s0)
            self.rho0 = float(s0 ** (mp.mpf(1) / 3))
        self.mu_prefactor = (8.0 ** 4 * self.c0
                             if self.mode == "paper_faithful" else 1.0)
        self._recursion_cache = {}

    # ---- recursion route ----

    def _recursion(self, count):
        """(r, s, mu, K) lists for nu = 0..count, via the step recursions."""
        hit = self._recursion_cache.get(count)
        if hit is not None:
            return hit
        with mp.workdps(50):
            r0 = mp.mpf(self.r0)
            pref = mp.mpf(self.mu_prefactor)
            r = [r0]
            s = [mp.mpf(self.s0)]
            mu = [mp.mpf(self.mu0)]
            K = [self.k1]
            for _ in range(count):
                alpha = mu[-1] ** (2 * RHO)
                K.append(int(mp.floor(-mp.log(mu[-1])) + 1) ** (3 * self.eta)
                         if mu[-1] < 1 else 1)
                r.append(r[-1] / 2 + r0 / 4)
                s.append(s[-1] * alpha / 8)
                mu.append(pref * mu[-1] ** (1 + RHO))
            out = (r, s, mu, K)
        self._recursion_cache[count] = out
        return out

    # ---- closed forms ----

    def _closed_r(self, nu):
        with mp.workdps(50):
            return mp.mpf(self.r0) * (mp.mpf(2) ** (-nu - 1) + mp.mpf(1) / 2)

    def _closed_mu(self, nu):
        with mp.workdps(50):
            A = ((1 + RHO) ** nu - 1) / RHO
            return (mp.mpf(self.mu_prefactor) ** A
                    * mp.mpf(self.mu0) ** ((1 + RHO) ** nu))

    def _closed_s(self, nu):
        with mp.workdps(50):
            A = ((1 + RHO) ** nu - 1) / RHO
            return (mp.mpf(self.s0) * mp.mpf(8) ** (-nu)
                    * mp.mpf(self.mu0) ** (2 * RHO * A)
                    * mp.mpf(self.mu_prefactor) ** (2 * (A - nu)))

    # ---- public accessors (floats) ----

    def r_seq(self, count):
        return [float(v) for v in self._recursion(count)[0]]

    def s_seq(self, count):
        return [float(v) for v in self._recursion(count)[1]]

    def mu_seq(self, count):
        return [float(v) for v in self._recursion(count)[2]]

    def k_seq(self, count):
        return list(self._recursion(count)[3])

    def closed_form_seqs(self, count):
        r = [float(self._closed_r(nu)) for nu in range(count + 1)]
        s = [float(self._closed_s(nu)) for nu in range(count + 1)]
        mu = [float(self._closed_mu(nu)) for nu in range(count + 1)]
        return r, s, mu

    def identity_report(self, count=10):
        """Max relative gap between recursion and closed form, per sequence."""
        rr, rs, rmu, _ = self._recursion(count)
        worst = {"r": 0.0, "s": 0.0, "mu": 0.0}
        for nu in range(count + 1):
            for name, rec, clo in (
                ("r", float(rr[nu]), float(self._closed_r(nu))),
                ("s", float(rs[nu]), float(self._closed_s(nu))),
                ("mu", float(rmu[nu]), float(self._closed_mu(nu))),
            ):
                scale = max(abs(rec), abs(clo))
                if scale > 0:
                    worst[name] = max(worst[name], abs(rec - clo) / scale)
        return worst

    def step_params(self, nu):
        """Everything the engine needs to run step nu."""
        r, s, mu, K = self._recursion(nu + 1)
        return {
            "nu": nu,
            "r": float(r[nu]),
            "r_next": float(r[nu + 1]),
            "s": float(s[nu]),
            "s_next": float(s[nu + 1]),
            "mu": float(mu[nu]),
            "mu_next": float(mu[nu + 1]),
            "alpha": float(mu[nu] ** (2 * RHO)),
            "k_next": K[nu + 1],
        }

    def entry_smallness_threshold(self):
        """Upper bound required of the initial perturbation sup-norm."""
        with mp.workdps(50):
            g0 = mp.mpf(self.gamma0)
            return float(g0 ** (self.n + 6) * mp.mpf(self.s0) ** 4
                         * mp.mpf(self.mu0))

    def check_entry_smallness(self, p0_norm):
        """Returns (ok, threshold); raises in paper_faithful mode when the
        initial norm is too large."""
        thr = self.entry_smallness_threshold()
        ok = p0_norm <= thr
        if not ok and self.mode == "paper_faithful":
            raise ScheduleUnsatisfied(
                f"initial perturbation norm {p0_norm:.6e} exceeds the "
                f"entry threshold {thr:.6e}; paper_faithful mode refuses "
                "to iterate (reachable only at far smaller epsilon)")
        return ok, thr

    def step_domain_ok(self, nu):
        """s_nu below the divisor-safety width gamma0/(6 (M*+2) K^{tau+1})."""
        p = self.step_params(nu)
        bound = self.gamma0 / (6 * (self.m_star + 2)
                               * p["k_next"] ** (self.tau + 1))
        return p["s"] <= bound, bound

    def truncation_condition(self, nu):
        """Decay integral of the dropped Fourier tail vs mu_nu."""
        p = self.step_params(nu)
        a = (p["r"] - p["r_next"]) / 16.0
        value = truncation_decay_integral(self.n, a, p["k_next"])
        return value <= p["mu"], value

    def loglog_mu_slopes(self, count=8):
        """Successive differences of log log(1/mu_nu); in practical mode
        these all equal log(1 + rho)."""
        mu = self.mu_seq(count)
        logs = []
        for v in mu:
            if 0 < v < 1:
                logs.append(math.log(math.log(1.0 / v)))
            else:
                logs.append(math.nan)
        return [logs[i + 1] - logs[i] for i in range(len(logs) - 1)]

    def as_dict(self):
        return {
            "n": self.n, "tau": self.tau, "epsilon": self.epsilon,
            "r0": self.r0, "s_base": self.s_base, "mode": self.mode,
            "c0": self.c0, "m_star": self.m_star, "rho": self.rho,
            "eta": self.eta, "gamma0": self.gamma0, "mu0": self.mu0,
            "k1": self.k1, "s0": self.s0, "rho0": self.rho0,
            "mu_prefactor": self.mu_prefactor,
        }
