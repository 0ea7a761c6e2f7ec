"""Catalogue oracles: closed forms the entries must reproduce exactly.

Each numeric target here is computed independently of the catalogue code
(logarithms and roots by hand, the lacunary cosine sum by re-summation at
a tighter truncation) so a regression in either the entries or the
verifier trips a frozen constant rather than a self-consistent pair.
"""

import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from freqkam import corpus
from freqkam.engine import HamiltonianSystem, run
from freqkam.errors import MismatchError, NoSolutionInBox
from freqkam.expr import parse
from freqkam.scales import weierstrass
from freqkam.series import FourierTaylorSeries

GOLDEN = 1.618033988749895


def entry_ids():
    return [e.id for e in corpus.list_entries()]


class TestCatalogue:
    def test_at_least_fifteen_entries(self):
        assert len(corpus.list_entries()) >= 15

    def test_ids_unique_and_sorted(self):
        ids = entry_ids()
        assert ids == sorted(ids)
        assert len(set(ids)) == len(ids)

    def test_entries_carry_title_and_notes(self):
        for e in corpus.list_entries():
            assert e.title
            assert e.notes

    def test_get_entry_unknown_id_lists_known(self):
        with pytest.raises(KeyError, match="cubic-root"):
            corpus.get_entry("not-a-real-entry")

    def test_epsilon_outside_validity_range(self):
        with pytest.raises(ValueError, match="validity range"):
            corpus.verify_entry("cubic-root", epsilon=0.5)


class TestClosedForms:
    def test_cube_root_response(self):
        eps = 1e-3
        v = corpus.verify_entry("cubic-root", epsilon=eps, conditions=False)
        assert v["ok"]
        np.testing.assert_allclose(v["xi_star"], [0.0, eps ** (1 / 3)],
                                   rtol=0, atol=1e-9)

    def test_flat_mollifier_log_inverse(self):
        # omega - 1 = exp(-1/xi) equals eps at xi = (-ln eps)^(-1); at
        # eps = 1e-4 that is 1 / (4 ln 10) = 0.10857362...
        v = corpus.verify_entry("mollifier-flat", epsilon=1e-4,
                                conditions=False)
        assert abs(v["xi_star"][0] - 0.10857362047581294) < 1e-9
        assert abs(v["xi_star"][0] - 1 / math.log(1e4)) < 1e-9

    def test_weierstrass_drift_coefficient(self):
        eps = 1e-2
        v = corpus.verify_entry("weierstrass-drift", epsilon=eps,
                                conditions=False)
        assert abs(v["xi_star"][1] - eps * weierstrass(eps)) < 1e-12

    def test_weierstrass_truncation_stable(self):
        # halving weights make the dropped tail <= 2 * tol; tightening the
        # cutoff by fifteen decades must not move the value visibly
        w_default = weierstrass(0.01)
        w_tight = weierstrass(0.01, tol=1e-30)
        assert abs(w_default - w_tight) < 1e-14

    def test_level_set_family_all_levels(self):
        v = corpus.verify_entry("linear-level-sets", conditions=False)
        labels = {c["name"] for c in v["checks"]}
        assert sum(1 for name in labels if name.startswith("xi-star[")) == 5

    @pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
    def test_closed_form_entries_across_decades(self, eps):
        for e in corpus.list_entries():
            if e.expected.get("kind") != "closed_form":
                continue
            if eps > e.eps_max:
                continue
            v = corpus.verify_entry(e, epsilon=eps, conditions=False)
            assert v["ok"], (e.id, eps)


class TestRateAsymptotics:
    def test_flat_mollifier_rate_over_four_decades(self):
        gaps = []
        for eps in (1e-2, 1e-3, 1e-4, 1e-5):
            v = corpus.verify_entry("mollifier-flat", epsilon=eps,
                                    conditions=False)
            gaps.append(v["xi_star"][0])
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        for eps, gap in zip((1e-2, 1e-3, 1e-4, 1e-5), gaps):
            ratio = gap / (-math.log(eps)) ** -1.0
            assert 1 / 1.01 <= ratio <= 1.01

    def test_cubic_rate_variant(self):
        eps = 1e-3
        v = corpus.verify_entry("mollifier-cubic-rate", epsilon=eps,
                                conditions=False)
        assert abs(v["xi_star"][0] - eps ** 3) < 1e-13


class TestNegativeCases:
    def test_edge_exit_reports_exterior_root(self):
        eps = 1e-3
        entry = corpus.get_entry("edge-exit")
        cfg = entry.config(eps)
        with pytest.raises(NoSolutionInBox) as exc:
            run(cfg.system(), eps, **cfg.run_kwargs())
        np.testing.assert_allclose(exc.value.exterior_root, [0.0, -eps],
                                   rtol=0, atol=1e-9)

    def test_collapsed_product_has_no_solution(self):
        v = corpus.verify_entry("collapsed-product", conditions=False)
        assert v["kind"] == "no_solution"
        assert v["ok"]

    def test_rational_gap_excises_rational_root(self):
        v = corpus.verify_entry("rational-gap", epsilon=Fraction(1, 1000),
                                conditions=False)
        assert v["ok"]
        assert abs(v["xi_star"][1] - Fraction(1, 999)) < 1e-12

    def test_no_real_root_best_residual_is_eps(self):
        v = corpus.verify_entry("no-real-root", epsilon=1e-3,
                                conditions=False)
        by_name = {c["name"]: c for c in v["checks"]}
        assert by_name["best-residual"]["ok"]


class TestCandidateRule:
    def test_sine_fold_returns_nearest_candidate(self):
        eps = 1e-3
        v = corpus.verify_entry("sine-fold", epsilon=eps, conditions=False)
        assert v["ok"]
        assert abs(v["xi_star"][1] - (math.pi - math.asin(eps))) < 1e-9

    def test_sine_fold_grid_sees_four_folds(self):
        eps = 1e-3
        entry = corpus.get_entry("sine-fold")
        cfg = entry.config(eps)
        rep = run(cfg.system(), eps, enumerate_candidates=True,
                  **cfg.run_kwargs())
        second = sorted(c[1] for c in rep.candidates)
        targets = [math.asin(eps), math.pi - math.asin(eps),
                   2 * math.pi + math.asin(eps),
                   3 * math.pi - math.asin(eps)]
        assert len(second) == 4
        np.testing.assert_allclose(second, targets, rtol=0, atol=1e-6)


class TestConditionCalibration:
    def test_every_entry_matches_expected_verdicts(self):
        # the catalogue is the calibration suite for the hypothesis
        # verifiers: every verdict row must match, entry by entry
        for e in corpus.list_entries():
            v = corpus.verify_entry(e, conditions=True)
            assert v["ok"], e.id

    def test_borderline_integral_closed_form(self):
        v = corpus.verify_entry("borderline-mollifier", conditions=True)
        by_name = {c["name"]: c for c in v["checks"]}
        row = by_name["h3-closed-form-integral"]
        assert abs(row["actual"] - 1 / math.log(2)) < 1e-10


class TestRotation:
    def test_closed_form_rotation_recovers_target(self):
        # at the matched parameter the linear flow runs exactly at the
        # seed frequency: omega(xi*) + eps dP/dy = omega(xi0)
        eps = 1e-3
        system = corpus.get_entry("cubic-root").config(eps).system()
        rot = corpus.measure_rotation(system, xi=[0.0, eps ** (1 / 3)],
                                      epsilon=eps)
        assert rot.method == "closed_form"
        np.testing.assert_allclose(rot.rotation, [1.0, GOLDEN],
                                   rtol=0, atol=1e-12)

    def test_angle_free_final_form_is_pure_linear(self):
        # the drift is absorbed into the translation, so the surviving
        # normal form rotates exactly at the seed frequency
        eps = 1e-3
        cfg = corpus.get_entry("sine-fold").config(eps)
        rep = run(cfg.system(), eps, **cfg.run_kwargs())
        rot = corpus.measure_rotation(rep)
        np.testing.assert_allclose(rot.rotation, rep.omega0,
                                   rtol=0, atol=1e-12)

    def test_post_iteration_rotation_matches_seed_frequency(self):
        # pendulum-style coupling: after a few steps the remainder is
        # tiny, so the integrated rotation of the final normal form sits
        # on the seed frequency
        eps = 1e-3
        sys = HamiltonianSystem(
            n=1, param_names=("xi1",), omega_trees=[parse("1 + xi1")],
            p_tree=parse("y1 * cos(x1) + cos(x1)"),
            box=np.array([[-1.0, 1.0]]), xi0=np.array([0.0]))
        rep = run(sys, eps, gamma=0.5, max_steps=4)
        rot = corpus.measure_rotation(rep)
        np.testing.assert_allclose(rot.rotation, rep.omega0,
                                   rtol=0, atol=1e-8)

    def test_bare_series_rotation(self):
        series = FourierTaylorSeries.linear_in_y(np.array([1.0, GOLDEN]))
        rot = corpus.measure_rotation(series, T=50.0)
        np.testing.assert_allclose(rot.rotation, [1.0, GOLDEN],
                                   rtol=0, atol=1e-10)


class TestMismatchReporting:
    def test_mismatch_carries_both_sides(self):
        entry = corpus.get_entry("cubic-root")
        tampered = dataclasses.replace(
            entry, expected={**entry.expected, "xi_star": ["0", "2 * eps"]})
        with pytest.raises(MismatchError) as exc:
            corpus.verify_entry(tampered, epsilon=1e-3, conditions=False)
        assert exc.value.expected is not None
        assert exc.value.actual is not None

    def test_raise_on_mismatch_off_returns_verdict(self):
        entry = corpus.get_entry("cubic-root")
        tampered = dataclasses.replace(
            entry, expected={**entry.expected, "xi_star": ["0", "2 * eps"]})
        v = corpus.verify_entry(tampered, epsilon=1e-3, conditions=False,
                                raise_on_mismatch=False)
        assert not v["ok"]
        assert any(not c["ok"] for c in v["checks"])


class TestRationalEntries:
    def test_dirichlet_entry_exact_at_any_rational(self):
        for eps in (Fraction(1, 100), Fraction(1, 1000), Fraction(3, 400)):
            v = corpus.verify_entry("dirichlet-null", epsilon=eps,
                                    conditions=False)
            assert v["ok"]
            assert v["xi_star"] == [0.0, 0.0]

    def test_dirichlet_scale_vanishes(self):
        entry = corpus.get_entry("dirichlet-null")
        assert entry.scale_value(Fraction(2, 7)) == 0.0

    def test_requires_rational_flag(self):
        flags = {e.id: e.requires_rational for e in corpus.list_entries()}
        assert flags["dirichlet-null"]
        assert flags["rational-gap"]
        assert not flags["cubic-root"]
