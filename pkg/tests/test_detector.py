import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from isacsweep.channel import crandn
from isacsweep.detector import (HypothesisModel, NeymanPearsonDetector, hypothesis_model, llr, roc_analytic,
                                roc_mc, sensing_covariance, simulate_hypotheses, snr_for_operating_point,
                                test_statistic as statistic, threshold_for_pfa)
from isacsweep.errors import ContractError, NotApplicable
from isacsweep.harness.oracles import random_scene
from isacsweep.precoder import PrecoderSolution, coordinated_precoder


def rank_one(m, snr, rng, sigma2=2.0):
    u = crandn(rng, m)
    u /= np.linalg.norm(u)
    return HypothesisModel(snr * sigma2 * np.outer(u, u.conj()), sigma2, 1.0)


def _solution(toy_scenes, idx=3, rho=0.2, p_max=1.0):
    scene, ch = toy_scenes[idx]
    return ch, coordinated_precoder(scene, ch, 0, rho, p_max)


def test_zero_precoder_gives_zero_covariance(toy_scenes):
    ch, sol = _solution(toy_scenes)
    zero = PrecoderSolution(np.zeros_like(sol.w), sol.rho, 0.0, {}, "dl-masked", "closed-form", 1.0)
    assert np.all(sensing_covariance(zero, ch, 0) == 0)


def test_single_ap_covariance_trace():
    scene, ch = random_scene(np.random.default_rng(11), 3, 1)
    sol = coordinated_precoder(scene, ch, 0, 0.2, 1.0)
    sc = ch.sensing[0][0]
    phi = sensing_covariance(sol, ch, 0)
    expected = sc.gain * abs(sc.h_tx @ sol.w[0]) ** 2 * np.outer(sc.h_rx, sc.h_rx.conj())
    np.testing.assert_allclose(phi, expected, rtol=1e-9, atol=1e-9 * np.abs(expected).max())
    assert np.trace(phi).real == pytest.approx(np.trace(expected).real, rel=1e-9)


@pytest.mark.parametrize("coherent", [True, False])
def test_covariance_rank_one(toy_scenes, coherent):
    ch, sol = _solution(toy_scenes)
    lam = np.linalg.eigvalsh(sensing_covariance(sol, ch, 0, coherent))[::-1]
    assert lam[1] / lam[0] < 1e-10
    assert hypothesis_model(sol, ch, 0, coherent).rank == 1


def test_llr_vanishes_without_target(rng):
    model = HypothesisModel(np.zeros((4, 4)), 1.5, 0.1)
    assert np.allclose(llr(crandn(rng, (5, 4)), model), 0.0)


def test_llr_minus_constant_is_statistic(rng):
    model = rank_one(8, 5.0, rng)
    y = crandn(rng, (20, 8), 2.0)
    const = llr(np.zeros(8), model)
    assert const == pytest.approx(8 * math.log(2.0) - np.linalg.slogdet(model.covariance)[1])
    assert const < 0
    np.testing.assert_allclose(llr(y, model) - const, statistic(y, model), rtol=1e-10, atol=1e-12)


def test_rank_one_statistic_matches_dense(rng):
    model = rank_one(16, 3.0, rng)
    y = crandn(rng, (50, 16), 2.0)
    np.testing.assert_allclose(statistic(y, model), statistic(y, model, dense=True), rtol=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_statistic_non_negative_and_blind_to_orthogonal(seed):
    gen = np.random.default_rng(seed)
    model = rank_one(6, 2.0, gen)
    y = crandn(gen, (10, 6))
    assert np.all(statistic(y, model) >= 0)
    u = model.direction
    y_perp = y - np.outer(y @ u.conj(), u)
    np.testing.assert_allclose(statistic(y_perp, model), 0.0, atol=1e-14)


def test_roc_analytic_values(rng):
    assert roc_analytic(rank_one(4, 9.0, rng))(1e-3) == pytest.approx(10 ** -0.3)
    flat = roc_analytic(HypothesisModel(np.zeros((3, 3)), 1.0, 1.0))
    np.testing.assert_allclose(flat([0.1, 0.5]), [0.1, 0.5])
    assert flat.effective_snr == 0.0


def test_roc_analytic_rejects_higher_rank():
    model = HypothesisModel(np.eye(3), 1.0, 1.0)
    with pytest.raises(NotApplicable):
        roc_analytic(model)
    with pytest.raises(NotApplicable):
        threshold_for_pfa(model, 0.1)


def test_implied_effective_snr_of_reported_points():
    s25 = snr_for_operating_point(2e-5, 0.9)
    s30 = snr_for_operating_point(2e-5, 0.97)
    # Pd = Pfa^(1/(1+s)) inverted by hand: s = ln(2e-5)/ln(Pd) - 1
    assert s25 == pytest.approx(101.69291, rel=1e-6)
    assert s30 == pytest.approx(354.22192, rel=1e-6)
    assert 10 * math.log10(s30 / s25) == pytest.approx(5.41985, abs=1e-5)
    assert roc_analytic(HypothesisModel(np.diag([s25, 0.0]), 1.0, 1.0))(2e-5) == pytest.approx(0.9)


def test_hypothesis_model_validation():
    with pytest.raises(ContractError):
        HypothesisModel(np.zeros((2, 2)), 0.0, 1.0)
    with pytest.raises(ContractError):
        HypothesisModel(np.zeros((2, 2)), 1.0, -1.0)


def test_mc_roc_without_target_is_chance(toy_scenes):
    ch, sol = _solution(toy_scenes)
    zero = PrecoderSolution(np.zeros_like(sol.w), sol.rho, 0.0, {}, "dl-masked", "closed-form", 1.0)
    model = hypothesis_model(sol, ch, 0)  # thresholds from a live model, statistic applied to H0-like data
    pts = roc_mc(ch, zero, 0, 20_000, np.random.default_rng(0), pfa_grid=[0.05, 0.2, 0.5], model=model)
    for p in pts:
        assert p.pd_ci[0] <= p.pfa <= p.pd_ci[1] or abs(p.pd - p.pfa) < 0.02


def test_mc_roc_matches_analytic(toy_scenes):
    """Effective SNR near 10, 10^6 trials."""
    scene, ch = toy_scenes[3]
    base = coordinated_precoder(scene, ch, 0, 0.2, 1.0)
    model0 = hypothesis_model(base, ch, 0)
    p_sens = 0.8 * 10.0 / model0.effective_snr
    sol = coordinated_precoder(scene, ch, 0, 0.2, 0.2 + p_sens)
    model = hypothesis_model(sol, ch, 0)
    assert model.effective_snr == pytest.approx(10.0, rel=1e-9)
    pfa = np.logspace(-3, -0.05, 20)
    pts = roc_mc(ch, sol, 0, 1_000_000, np.random.default_rng(7), pfa_grid=pfa, model=model)
    analytic = roc_analytic(model)
    assert max(abs(p.pd - float(analytic(p.pfa))) for p in pts) < 0.01
    assert max(abs(p.pfa - f) / f for p, f in zip(pts, pfa)) < 0.15


def test_simulated_statistic_law(toy_scenes):
    """|u^H y|^2 is exponential with mean sigma2 under H0 and sigma2 (1 + snr) under H1."""
    ch, sol = _solution(toy_scenes)
    model = hypothesis_model(sol, ch, 0)
    u = model.direction
    y0, y1 = next(simulate_hypotheses(ch, 0, sol, 50_000, np.random.default_rng(2)))
    m0 = np.mean(np.abs(y0 @ u.conj()) ** 2)
    m1 = np.mean(np.abs(y1 @ u.conj()) ** 2)
    assert m0 == pytest.approx(model.sigma2, rel=0.03)
    assert m1 == pytest.approx(model.sigma2 * (1 + model.effective_snr), rel=0.03)


def test_roc_ordering_with_budget(toy_scenes):
    scene, ch = toy_scenes[3]
    curves = []
    for p_max in (0.3, 0.5, 1.0):
        sol = coordinated_precoder(scene, ch, 0, 0.2, p_max)
        curves.append(roc_analytic(hypothesis_model(sol, ch, 0))(np.logspace(-5, 0, 30)))
    assert np.all(curves[2] >= curves[1]) and np.all(curves[1] >= curves[0])


def test_detector_estimator_api(rng):
    model = rank_one(8, 20.0, rng)
    det = NeymanPearsonDetector(model=model, pfa=0.01)
    assert clone(det).get_params()["pfa"] == 0.01
    det.fit()
    assert det.threshold_ == pytest.approx(float(threshold_for_pfa(model, 0.01)))
    y0 = crandn(rng, (100_000, 8), model.sigma2)
    assert np.mean(det.predict(y0)) == pytest.approx(0.01, abs=0.002)
    assert set(np.unique(det.predict(y0))) <= {0, 1}
    emp = NeymanPearsonDetector(model=model, pfa=0.01, calibration="empirical").fit(y0)
    assert emp.threshold_ == pytest.approx(det.threshold_, rel=0.05)
    det.set_params(pfa=0.1).fit()
    assert np.mean(det.predict(y0)) == pytest.approx(0.1, abs=0.005)


def test_detector_validation(rng):
    with pytest.raises(ContractError):
        NeymanPearsonDetector().fit()
    with pytest.raises(ContractError):
        NeymanPearsonDetector(rank_one(4, 1.0, rng), pfa=1.5).fit()
    with pytest.raises(ContractError):
        NeymanPearsonDetector(rank_one(4, 1.0, rng), calibration="empirical").fit()
    with pytest.raises(ContractError):
        NeymanPearsonDetector(rank_one(4, 1.0, rng), calibration="bayes").fit()
