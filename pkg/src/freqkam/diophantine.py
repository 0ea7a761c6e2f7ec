"""Diophantine certificates for frequency vectors.

certify() scans every lattice vector 0 < |k|_inf <= k_max (one representative
per {k, -k} pair) and checks |<k, omega>| >= gamma / |k|_inf^tau. It also
reports the best constant gamma_star = min |<k, omega>| * |k|^tau seen on the
scanned window, which is what the engine uses to temper runtime divisor
thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidTau

__all__ = ["DiophantineCertificate", "certify", "tau_floor"]


def tau_floor(n):
    return max(n - 1, 1)


@dataclass
class DiophantineCertificate:
    ok: bool
    gamma: float
    tau: float
    k_max: int
    gamma_star: float
    worst_k: tuple
    worst_margin: float
    checked: int

    def as_dict(self):
        return {
            "ok": self.ok,
            "gamma": self.gamma,
            "tau": self.tau,
            "k_max": self.k_max,
            "gamma_star": self.gamma_star,
            "worst_k": list(self.worst_k),
            "worst_margin": self.worst_margin,
            "checked": self.checked,
        }


def _half_space_blocks(n, k_max):
    """Yield integer blocks covering one representative of each +-k pair,
    in deterministic lexicographic order."""
    rng = np.arange(-k_max, k_max + 1)
    if n == 1:
        yield np.arange(1, k_max + 1).reshape(-1, 1)
        return
    tail = np.stack(
        np.meshgrid(*([rng] * (n - 1)), indexing="ij"), axis=-1
    ).reshape(-1, n - 1)
    # k1 = 0: recurse into the remaining coordinates' half space
    for block in _half_space_blocks(n - 1, k_max):
        lead = np.zeros((block.shape[0], 1), dtype=block.dtype)
        yield np.hstack([lead, block])
    # k1 > 0: everything goes
    for k1 in range(1, k_max + 1):
        lead = np.full((tail.shape[0], 1), k1, dtype=tail.dtype)
        yield np.hstack([lead, tail])


def certify(omega, gamma, tau, k_max=100):
    """Scan the lattice window and certify the Diophantine lower bound.

    Raises InvalidTau when tau <= max(n - 1, 1).
    """
    omega = np.asarray(omega, dtype=float).ravel()
    n = omega.shape[0]
    if tau <= tau_floor(n):
        raise InvalidTau(
            f"tau = {tau} must exceed max(n - 1, 1) = {tau_floor(n)} for n = {n}")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")

    gamma_star = np.inf
    worst_margin = np.inf
    worst_k = None
    checked = 0
    for block in _half_space_blocks(n, k_max):
        if block.size == 0:
            continue
        dots = np.abs(block @ omega)
        norms = np.abs(block).max(axis=1)
        checked += block.shape[0]
        products = dots * norms.astype(float) ** tau
        i = int(np.argmin(products))
        if products[i] < gamma_star:
            gamma_star = float(products[i])
        margins = dots - gamma * norms.astype(float) ** (-tau)
        j = int(np.argmin(margins))
        if margins[j] < worst_margin:
            worst_margin = float(margins[j])
            worst_k = tuple(int(v) for v in block[j])

    return DiophantineCertificate(
        ok=bool(worst_margin > 0.0),
        gamma=float(gamma),
        tau=float(tau),
        k_max=int(k_max),
        gamma_star=gamma_star,
        worst_k=worst_k,
        worst_margin=worst_margin,
        checked=checked,
    )
