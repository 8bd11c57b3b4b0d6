import json
import math

import numpy as np
import pytest

from quakeval import (Circle, ConvexPolygon, FitError, KernelDensity,
                      ParametricDensity, Rectangle, ValidationError,
                      fit_kde, fit_parametric, load_density, sample,
                      save_density)

REGION = Rectangle(0.0, 200.0, 0.0, 200.0)
Q = np.array([[0.004, 0.001], [0.001, 0.003]])


def test_uniform_density():
    d = ParametricDensity.uniform(REGION)
    assert d.p0 == pytest.approx(1.0 / REGION.area, rel=1e-15)
    assert d.weight == 0.0
    vals = d.evaluate([[10.0, 10.0], [150.0, 40.0]])
    assert np.allclose(vals, 1.0 / REGION.area)
    assert d.integrate(Rectangle(0, 100, 0, 200)) == pytest.approx(0.5, rel=1e-12)
    assert d.integrate(REGION) == pytest.approx(1.0, rel=1e-12)


def test_mixture_normalizes_to_one():
    rng = np.random.default_rng(5)
    for _ in range(5):
        cx, cy = rng.uniform(40, 160, 2)
        scale = rng.uniform(0.001, 0.02)
        q = np.array([[2.0 * scale, 0.3 * scale], [0.3 * scale, scale]])
        w = rng.uniform(0.0, 1.0)
        d = ParametricDensity.from_mixture([cx, cy], q, w, REGION)
        assert d.weight == pytest.approx(w, rel=1e-9)
        assert d.integrate(REGION) == pytest.approx(1.0, abs=1e-8)
        assert d.p0 == pytest.approx((1.0 - w) / REGION.area, rel=1e-9)


def test_density_positive_and_peaked_at_centre():
    d = ParametricDensity.from_mixture([100.0, 100.0], Q, 0.7, REGION)
    centre = d.evaluate([[100.0, 100.0]])[0]
    corner = d.evaluate([[5.0, 5.0]])[0]
    assert centre > corner > 0.0


def test_evaluate_outside_region_rejected():
    d = ParametricDensity.uniform(REGION)
    with pytest.raises(ValidationError, match="outside"):
        d.evaluate([[250.0, 10.0]])
    with pytest.raises(ValidationError):
        d.integrate(Rectangle(150.0, 250.0, 0.0, 10.0))


def test_bad_parameters_rejected():
    with pytest.raises(ValidationError):
        ParametricDensity([0, 0], np.array([[1.0, 2.0], [2.0, 1.0]]), 0.1, REGION)
    with pytest.raises(ValidationError):
        ParametricDensity([0, 0], np.array([[1.0, 0.5], [0.4, 1.0]]), 0.1, REGION)
    with pytest.raises(ValidationError):
        ParametricDensity([0, 0], np.eye(2), -0.1, REGION)
    with pytest.raises(ValidationError):
        ParametricDensity.from_mixture([0, 0], np.eye(2), 1.2, REGION)


def test_amplitude_overflow_rejected():
    # p1 large enough that the bump alone carries more than unit mass
    with pytest.raises(ValidationError, match="reduce p1"):
        ParametricDensity([100.0, 100.0], np.array([[1e-4, 0.0], [0.0, 1e-4]]),
                          1.0, REGION)


def test_sampling_deterministic_and_inside():
    d = ParametricDensity.from_mixture([100.0, 100.0], Q, 0.6, REGION)
    a = d.sample(1000, seed=21)
    b = d.sample(1000, seed=21)
    c = d.sample(1000, seed=22)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert bool(np.all(REGION.contains(a[:, 0], a[:, 1])))
    assert np.array_equal(sample(d, 50, seed=1), d.sample(50, seed=1))


def test_sampling_respects_mixture_weight():
    d = ParametricDensity.from_mixture([100.0, 100.0], Q, 0.6, REGION)
    pts = d.sample(20000, seed=4)
    # mass observed in a 30 km disc around the bump centre
    disc = Circle(100.0, 100.0, 30.0)
    frac = float(np.mean(np.asarray(disc.contains(pts[:, 0], pts[:, 1]))))
    expected = d.integrate(disc)
    assert frac == pytest.approx(expected, abs=0.015)


def test_kde_normalizes_over_region():
    rng = np.random.default_rng(9)
    pts = rng.uniform(20, 180, (200, 2))
    kde = fit_kde(pts, REGION)
    assert kde.integrate(REGION) == pytest.approx(1.0, abs=1e-8)
    left = kde.integrate(Rectangle(0, 100, 0, 200))
    right = kde.integrate(Rectangle(100, 200, 0, 200))
    assert left + right == pytest.approx(1.0, abs=1e-7)


def test_kde_bandwidth_formula():
    rng = np.random.default_rng(2)
    pts = rng.normal([100, 100], [20, 30], (400, 2))
    pts = pts[np.asarray(REGION.contains(pts[:, 0], pts[:, 1]))]
    kde = fit_kde(pts, REGION)
    n = len(pts)
    hx = float(np.std(pts[:, 0], ddof=1)) * n ** (-1.0 / 6.0)
    hy = float(np.std(pts[:, 1], ddof=1)) * n ** (-1.0 / 6.0)
    assert kde.bandwidth[0, 0] == pytest.approx(hx * hx, rel=1e-12)
    assert kde.bandwidth[1, 1] == pytest.approx(hy * hy, rel=1e-12)
    assert kde.bandwidth[0, 1] == 0.0


def test_kde_erf_and_quadrature_paths_agree():
    """The rectangle fast path must match plain quadrature."""
    rng = np.random.default_rng(14)
    pts = rng.uniform(30, 170, (60, 2))
    rect_kde = fit_kde(pts, REGION)
    square = ConvexPolygon([[0, 0], [200, 0], [200, 200], [0, 200]])
    poly_kde = KernelDensity(pts, rect_kde.bandwidth, square)
    assert rect_kde.normalization == pytest.approx(poly_kde.normalization,
                                                   rel=1e-8)
    probe = np.array([[100.0, 100.0], [45.0, 160.0]])
    assert np.allclose(rect_kde.evaluate(probe), poly_kde.evaluate(probe),
                       rtol=1e-8)


def test_kde_degenerate_inputs():
    with pytest.raises(ValidationError):
        fit_kde(np.array([[1.0, 2.0]]), REGION)
    flat = np.column_stack([np.full(20, 50.0), np.linspace(10, 90, 20)])
    with pytest.raises(ValidationError, match="spread"):
        fit_kde(flat, REGION)


def test_kde_sampling_inside_region():
    rng = np.random.default_rng(6)
    kde = fit_kde(rng.uniform(50, 150, (80, 2)), REGION)
    pts = kde.sample(500, seed=8)
    assert pts.shape == (500, 2)
    assert bool(np.all(REGION.contains(pts[:, 0], pts[:, 1])))
    assert np.array_equal(pts, kde.sample(500, seed=8))


def test_fit_parametric_recovers_planted_bump():
    truth = ParametricDensity.from_mixture([120.0, 80.0], Q, 0.6, REGION)
    pts = truth.sample(2000, seed=11)
    res = fit_parametric(pts, REGION)
    assert res.converged
    assert res.loglik > res.loglik_uniform
    assert np.allclose(res.density.x_c, [120.0, 80.0], atol=3.0)
    assert res.density.weight == pytest.approx(0.6, abs=0.1)


def test_fit_loglik_path_monotone():
    truth = ParametricDensity.from_mixture([100.0, 100.0], Q, 0.5, REGION)
    res = fit_parametric(truth.sample(500, seed=3), REGION)
    path = np.array(res.loglik_path)
    assert len(path) > 10
    assert bool(np.all(np.diff(path) >= -1e-9))
    assert res.n_evaluations > len(path)


def test_fit_on_uniform_data_never_beats_uniform_by_much():
    rng = np.random.default_rng(17)
    pts = rng.uniform(0, 200, (400, 2))
    res = fit_parametric(pts, REGION)
    assert res.loglik >= res.loglik_uniform - 1e-9
    # six free parameters fitting pure noise should gain only a few log-units
    assert res.loglik - res.loglik_uniform < 8.0
    # and the fitted surface stays close to flat across the region
    probe = res.density.evaluate(pts)
    assert float(probe.max() / probe.min()) < 2.0


def test_fit_requires_enough_points():
    with pytest.raises(ValidationError, match="at least 10"):
        fit_parametric(np.zeros((5, 2)) + 50.0, REGION)


def test_fit_error_carries_best_iterate():
    truth = ParametricDensity.from_mixture([100.0, 100.0], Q, 0.5, REGION)
    pts = truth.sample(300, seed=2)
    with pytest.raises(FitError) as info:
        fit_parametric(pts, REGION, max_iterations=3)
    assert isinstance(info.value.best, ParametricDensity)


def test_parametric_json_round_trip(tmp_path):
    d = ParametricDensity.from_mixture([120.0, 80.0], Q, 0.6, REGION)
    path = tmp_path / "model.json"
    save_density(d, path)
    again = load_density(path)
    assert np.array_equal(again.x_c, d.x_c)
    assert np.array_equal(again.q_matrix, d.q_matrix)
    assert again.p1 == d.p1
    assert again.p0 == pytest.approx(d.p0, rel=1e-12)
    probe = np.array([[100.0, 100.0], [10.0, 190.0]])
    assert np.allclose(again.evaluate(probe), d.evaluate(probe), rtol=1e-12)


def test_corrupted_model_file_rejected(tmp_path):
    d = ParametricDensity.from_mixture([120.0, 80.0], Q, 0.6, REGION)
    path = tmp_path / "model.json"
    save_density(d, path)
    blob = json.loads(path.read_text())
    blob["p0"] = blob["p0"] * 3.0 + 1e-3
    path.write_text(json.dumps(blob))
    with pytest.raises(ValidationError, match="corrupted"):
        load_density(path)
    blob["type"] = "mystery"
    path.write_text(json.dumps(blob))
    with pytest.raises(ValidationError, match="unknown density type"):
        load_density(path)


def test_kde_json_round_trip(tmp_path):
    rng = np.random.default_rng(23)
    pts = rng.uniform(40, 160, (50, 2))
    kde = fit_kde(pts, REGION)
    path = tmp_path / "kde.json"
    save_density(kde, path)
    assert (tmp_path / "kde.points.csv").exists()
    again = load_density(path)
    assert np.array_equal(again.points, kde.points)
    assert np.array_equal(again.bandwidth, kde.bandwidth)
    probe = np.array([[100.0, 100.0]])
    assert again.evaluate(probe)[0] == pytest.approx(kde.evaluate(probe)[0],
                                                     rel=1e-12)


def test_circle_region_density():
    disc = Circle(50.0, 50.0, 40.0)
    d = ParametricDensity.from_mixture([50.0, 50.0], np.eye(2) * 0.002, 0.5, disc)
    assert d.integrate(disc) == pytest.approx(1.0, abs=1e-8)
    inner = Circle(50.0, 50.0, 20.0)
    assert 0.0 < d.integrate(inner) < 1.0
    pts = d.sample(300, seed=5)
    assert bool(np.all(disc.contains(pts[:, 0], pts[:, 1])))
