import numpy as np
import pytest

from twoscale.catalogue import (coefficient_preset, list_catalogue_text,
                                observation_preset, parse_term)


def test_round_trip_ids():
    ids = [
        "9",
        "x1",
        "x1^2",
        "(1+x1)",
        "sin(2pi*y1)",
        "0.25*cos(4pi*y2)",
        "(1+x1)*(1+x2)*sin(2pi*y1)*cos(6pi*y2)*e2",
        "(1+sin(4pi*x1))",
        "1000*(1+sin(2pi*x1))*(1+cos(4pi*y2))*e1",
    ]
    for text in ids:
        term = parse_term(text)
        assert parse_term(term.id).id == term.id


def test_evaluation_matches_closed_forms():
    t = parse_term("0.5*(1+x1)*sin(2pi*y1)")
    x = np.array([[0.5]])
    y = np.array([[0.25]])
    assert t.eval_xy(x, y)[0] == pytest.approx(0.5 * 1.5 * 1.0)
    t2 = parse_term("x1^2*cos(2pi*y1)")
    assert t2.eval_xy(np.array([[0.3]]), np.array([[0.5]]))[0] == pytest.approx(0.09 * -1.0)


def test_sup_norms_are_products_of_factor_sups():
    assert parse_term("(1+x1)*sin(2pi*y1)").sup() == pytest.approx(2.0)
    assert parse_term("0.25*(1+x1)*(1+x2)*sin(4pi*y1)*cos(2pi*y2)").sup() == pytest.approx(1.0)
    assert parse_term("7").sup() == pytest.approx(7.0)


def test_sup_matches_dense_sampling():
    rng = np.random.default_rng(0)
    for text in ["(1+x1)*sin(2pi*y1)", "x1^2*cos(4pi*y1)", "0.3*(1+sin(2pi*y1))"]:
        t = parse_term(text)
        x = rng.uniform(0, 1, size=(4000, 1))
        y = rng.uniform(0, 1, size=(4000, 1))
        sampled = np.abs(t.eval_xy(x, y)).max()
        assert sampled <= t.sup() + 1e-12
        assert sampled >= 0.95 * t.sup()


def test_one_factor_per_axis_enforced():
    with pytest.raises(ValueError):
        parse_term("(1+x1)*sin(2pi*x1)")


def test_odd_pi_multiples_rejected():
    with pytest.raises(ValueError):
        parse_term("sin(3pi*y1)")


def test_antiderivative():
    xs = np.linspace(0, 1, 7)
    assert np.allclose(parse_term("2").antiderivative_1d(xs), 2 * xs)
    assert np.allclose(parse_term("x1^2").antiderivative_1d(xs), xs**3 / 3)
    assert np.allclose(parse_term("(1+x1)").antiderivative_1d(xs), xs + xs**2 / 2)


def test_presets_have_documented_sizes():
    assert len(coefficient_preset("1d_sincos")) == 2
    assert len(coefficient_preset("2d_uniform_16")) == 16
    assert len(coefficient_preset("2d_lognormal_80")) == 80
    assert len(observation_preset("1d_macro")) == 2
    assert len(observation_preset("2d_uniform_72")) == 72
    assert len(observation_preset("2d_lognormal_1250")) == 1250


def test_2d_uniform_family_formulas():
    # includes the quarter-amplitude double-frequency entries
    ids = [t.id for t in coefficient_preset("2d_uniform_16")]
    assert "0.25*(1+x1)*(1+x2)*sin(2pi*y1)*sin(2pi*y2)" in ids
    assert any("0.25*sin(4pi*y1)" in i or "0.0625*" in i for i in ids)
    sups = [t.sup() for t in coefficient_preset("2d_uniform_16")]
    assert sum(sups) == pytest.approx(6.25)


def test_lognormal_weights_follow_eigenvalue_sums():
    terms = coefficient_preset("2d_lognormal_80")
    w2 = 4 * np.pi**2
    # constant-x eigenfunction paired with the lowest y mode
    expected = 1.0 / w2**2
    assert any(abs(t.scale - expected) < 1e-15 for t in terms)
    assert max(t.sup() for t in terms) == pytest.approx(expected)


def test_catalogue_listing_stable_and_parseable():
    text1 = list_catalogue_text()
    text2 = list_catalogue_text()
    assert text1 == text2
    for line in text1.splitlines():
        line = line.strip()
        if line.startswith(("0.", "1000*", "(1+x1)*")) or line.startswith("x1"):
            assert parse_term(line).id == line


def test_smoothness_bound_positive_and_monotone_in_frequency():
    low = parse_term("sin(2pi*y1)").smoothness_bound()
    high = parse_term("sin(4pi*y1)").smoothness_bound()
    assert 0 < low < high
