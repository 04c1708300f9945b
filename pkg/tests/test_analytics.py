import math

import numpy as np
import pytest
from scipy import integrate

from hybrid_teleport import analytics as an
from hybrid_teleport.analytics import Quadrature, SweepSpec


def test_low_case_probabilities_basis_qubit():
    alpha = 1.3
    x = math.exp(-alpha**2)
    p = an.eval_formula("Eq16_17_probs", 1.0, 0.0, alpha)
    assert p["i"] == pytest.approx(1 / (4 * (1 + x**2)), abs=1e-15)
    assert p["i"] == p["ii"] == p["iii"] == p["iv"]


def test_bloch_closed_form_limits_and_value_at_five():
    assert an.eval_formula("Eq21_Fbar", 1, 0, 30.0) == pytest.approx(1.0, abs=1e-3)
    assert an.eval_formula("Eq21_Fbar", 1, 0, 300.0) == pytest.approx(1.0, abs=1e-5)
    f5 = an.eval_formula("Eq21_Fbar", 1, 0, math.sqrt(5))
    x2, d2 = math.exp(-10), math.pi**2 / 80
    assert f5 == pytest.approx((1 + math.exp(-d2) * (1 - x2**2 / 3) + x2 * (1 - x2)) / (2 * (1 + x2)), abs=1e-15)
    assert f5 == pytest.approx(0.941948, abs=1e-6)


def test_unknown_formula_and_bad_alpha():
    with pytest.raises(an.AnalyticsError):
        an.eval_formula("Eq99", 1, 0, 1)
    with pytest.raises(an.AnalyticsError):
        an.eval_formula("P0", 1, 0, 0.0)


def test_formulas_broadcast():
    a, b = an.qubit_amplitudes(np.linspace(0, math.pi, 7), np.linspace(0, 6, 7))
    out = an.eval_formula("Eq20_Favg", a, b, 1.1)
    assert out.shape == (7,) and np.all(np.isfinite(out))


def test_printed_failure_probabilities_violate_completeness():
    alpha = math.sqrt(2.0)
    for th, ph in ((0.0, 0.0), (1.0, 2.0), (2.5, 4.0)):
        a, b = an.qubit_amplitudes(th, ph)
        base = sum(an.eval_formula("Eq16_17_probs", a, b, alpha).values())
        good = base + sum(an.eval_formula("Eq18_probs_sum_consistent", a, b, alpha).values())
        bad = base + sum(an.eval_formula("Eq18_probs_as_printed", a, b, alpha).values())
        assert good == pytest.approx(1.0, abs=1e-12)
        assert abs(bad - 1.0) > 1e-3


def test_weighted_sum_equals_substituted_form_random_points():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        th, ph = math.acos(1 - 2 * rng.random()), 2 * math.pi * rng.random()
        alpha = math.sqrt(rng.uniform(0.2, 9.0))
        a, b = an.qubit_amplitudes(th, ph)
        e19 = an.eval_formula("Eq19_Favg", a, b, alpha)
        e20 = an.eval_formula("Eq20_Favg", a, b, alpha)
        assert e19 == pytest.approx(e20, abs=1e-12)


def test_bloch_average_examples():
    assert an.bloch_average(lambda th, ph: np.ones_like(th)) == pytest.approx(1.0, abs=1e-12)
    x = math.exp(-1.5)
    f = lambda a, b: (2 * x**2 * np.real(np.conj(a) * b)) ** 2
    assert an.bloch_average_ab(f) == pytest.approx(x**4 / 3, abs=1e-9)
    assert an.bloch_average_ab(lambda a, b: np.abs(a - b) ** 2) == pytest.approx(1.0, abs=1e-9)


def test_bloch_average_against_scipy():
    # oracle: adaptive 2-D integration of sin(theta) f / (4 pi)
    f = lambda th, ph: np.cos(th) ** 4 * (1 + np.sin(ph) ** 2) + np.sin(th) * np.cos(3 * ph)
    ref, _ = integrate.dblquad(lambda th, ph: f(th, ph) * math.sin(th), 0, 2 * math.pi, 0, math.pi)
    assert an.bloch_average(f) == pytest.approx(ref / (4 * math.pi), abs=1e-9)


def test_quadrature_validation_and_weights():
    with pytest.raises(an.AnalyticsError):
        Quadrature(1, 8)
    th, ph, w = Quadrature(5, 7).nodes()
    assert th.shape == ph.shape == w.shape == (35,)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("fid", ["Eq14_F", "F0", "Eq19_Favg", "Eq20_Favg", "P0"])
def test_quadrature_converged(fid):
    alpha = 1.2
    lo = an.formula_bloch_average(fid, alpha, Quadrature(64, 64))
    hi = an.formula_bloch_average(fid, alpha, Quadrature(128, 128))
    assert abs(lo - hi) < 1e-9


@pytest.mark.parametrize("alpha2", [1.0, 5.0, 8.0])
def test_bloch_average_of_favg_is_closed_form(alpha2):
    alpha = math.sqrt(alpha2)
    assert an.formula_bloch_average("Eq20_Favg", alpha) == pytest.approx(
        an.eval_formula("Eq21_Fbar", 1, 0, alpha), abs=1e-12
    )


def test_failure_fidelity_bloch_average():
    alpha = 0.9
    x2 = math.exp(-2 * alpha**2)
    assert an.formula_bloch_average("F0", alpha) == pytest.approx((1 - x2) / 2, abs=1e-12)


def test_parse_grid():
    assert an.parse_grid("1:2:0.5") == [1.0, 1.5, 2.0]
    assert an.parse_grid("1:8:0.5")[-1] == 8.0 and len(an.parse_grid("1:8:0.5")) == 15
    assert an.parse_grid("1, 5") == [1.0, 5.0]
    for bad in ("1:2", "a:b:c", "2:1:0.5", "1:2:0"):
        with pytest.raises(an.AnalyticsError):
            an.parse_grid(bad)


def test_sweep_spec_validation():
    for bad in ([], [1, 1], [2, 1], [0, 1]):
        with pytest.raises(an.AnalyticsError):
            SweepSpec(bad)
    with pytest.raises(an.AnalyticsError):
        an.sweep(SweepSpec([1.0]), "Bogus")


def test_sweep_examples():
    rows = an.sweep(SweepSpec([1, 2, 3, 4, 5, 6]), "Both")
    oracle = [r["fbar_oracle"] for r in rows]
    assert all(b > a for a, b in zip(oracle, oracle[1:]))
    assert all(set(r) == set(an.SWEEP_COLUMNS) for r in rows)
    (row,) = an.sweep(SweepSpec([5]), "Formula")
    assert row["fbar_formula_eq21"] == an.eval_formula("Eq21_Fbar", 1, 0, math.sqrt(5))
    assert row["fbar_oracle"] is None and row["abs_dev"] is None
    rows = an.sweep(SweepSpec([1, 5]), "Both")
    assert all(r["abs_dev"] is not None for r in rows)
    # at |alpha|^2=5 the closed form tracks the full state closely; at 1 the case-i closed-form gap shows
    assert rows[1]["abs_dev"] < 1e-6
    assert rows[0]["abs_dev"] > 1e-3
    (row,) = an.sweep(SweepSpec([2.0]), "Oracle")
    assert row["fbar_formula_eq21"] is None and 0 < row["fbar_oracle"] < 1
