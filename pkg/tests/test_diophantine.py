import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqkam.diophantine import certify, tau_floor
from freqkam.errors import InvalidTau

GOLDEN = (1 + math.sqrt(5)) / 2


def brute_force_gamma_star(omega, tau, k_max):
    """Independent oracle: plain python loop over the full window."""
    best = math.inf
    n = len(omega)
    for k in itertools.product(range(-k_max, k_max + 1), repeat=n):
        if all(v == 0 for v in k):
            continue
        dot = abs(sum(ki * wi for ki, wi in zip(k, omega)))
        best = min(best, dot * max(abs(v) for v in k) ** tau)
    return best


def test_golden_pair_gamma_star_frozen_value():
    # worst resonance of (1, golden) on any window is k = (1, -1):
    # |1 - golden| * 1^tau = golden - 1
    cert = certify([1.0, GOLDEN], gamma=0.3, tau=1.2, k_max=60)
    assert cert.gamma_star == pytest.approx(GOLDEN - 1, rel=1e-14)
    assert cert.ok
    assert cert.worst_margin > 0


def test_matches_brute_force_oracle():
    omega = [1.0, GOLDEN]
    for tau in (1.2, 1.7):
        cert = certify(omega, gamma=0.1, tau=tau, k_max=12)
        assert cert.gamma_star == pytest.approx(
            brute_force_gamma_star(omega, tau, 12), rel=1e-13)


def test_three_dim_matches_brute_force():
    omega = [1.0, GOLDEN, math.sqrt(2)]
    cert = certify(omega, gamma=0.01, tau=2.5, k_max=6)
    assert cert.gamma_star == pytest.approx(
        brute_force_gamma_star(omega, 2.5, 6), rel=1e-13)
    assert cert.checked == ((2 * 6 + 1) ** 3 - 1) // 2


def test_one_dim_gamma_star_is_abs_omega():
    # |k w| k^tau grows in k, so the minimum sits at k = 1
    for k_max in (1, 7, 40):
        cert = certify([GOLDEN], gamma=0.5, tau=1.5, k_max=k_max)
        assert cert.gamma_star == pytest.approx(GOLDEN, rel=1e-15)
        assert cert.checked == k_max


def test_resonant_vector_fails():
    cert = certify([1.0, 0.5], gamma=1e-6, tau=1.2, k_max=5)
    assert not cert.ok
    assert cert.gamma_star == pytest.approx(0.0, abs=1e-12)
    assert cert.worst_k == (1, -2)


def test_failure_when_gamma_too_ambitious():
    cert = certify([1.0, GOLDEN], gamma=0.7, tau=1.2, k_max=10)
    # gamma above gamma_star must fail at the worst k
    assert not cert.ok
    assert cert.worst_margin < 0


def test_invalid_tau():
    with pytest.raises(InvalidTau):
        certify([1.0, GOLDEN], gamma=0.1, tau=1.0, k_max=5)
    with pytest.raises(InvalidTau):
        certify([1.0, GOLDEN, 2.0], gamma=0.1, tau=1.9, k_max=5)
    assert tau_floor(4) == 3


@given(
    w2=st.floats(min_value=1.05, max_value=3.0, allow_nan=False),
    k_max=st.integers(min_value=2, max_value=10),
)
@settings(max_examples=60, deadline=None)
def test_gamma_star_monotone_under_window_growth(w2, k_max):
    a = certify([1.0, w2], gamma=1e-9, tau=1.3, k_max=k_max)
    b = certify([1.0, w2], gamma=1e-9, tau=1.3, k_max=2 * k_max)
    assert b.gamma_star <= a.gamma_star * (1 + 1e-12)


def test_certificate_dict_shape():
    d = certify([1.0, GOLDEN], gamma=0.3, tau=1.2, k_max=8).as_dict()
    assert set(d) == {"ok", "gamma", "tau", "k_max", "gamma_star",
                      "worst_k", "worst_margin", "checked"}
    assert isinstance(d["worst_k"], list)
