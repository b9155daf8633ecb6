import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isacsweep.channel import ChannelSet, RcsModel, StochasticParams, build_channels
from isacsweep.errors import ContractError, DegenerateVoxel
from isacsweep.harness.oracles import random_scene
from isacsweep.metrics import (analytic_sinr, combining_vector, echo_gains, sensing_sinr_analytic, sensing_sinr_mc,
                               sinr_cdf_samples, user_sinr, user_sinr_full, volume_average)
from isacsweep.precoder import PrecoderSolution, UeScenario, coordinated_precoder, solve_power_allocation
from isacsweep.scene import ApNode, ArrayGeometry, build_scene, voxel_grid

G = ArrayGeometry(4, 4)
RX = ApNode((0.0, 0.0, 10.0), -1, "rx")


def with_rcs(ch: ChannelSet, rcs: RcsModel) -> ChannelSet:
    return ChannelSet(ch.sensing, ch.direct, ch.params, rcs, ch.fc, ch.shared_rcs)


@given(st.tuples(st.floats(-400, 400), st.floats(-400, 400), st.floats(0, 100)))
def test_combiner_unit_norm(p):
    if math.dist(p, RX.position) < 1.0:
        return
    assert np.linalg.norm(combining_vector(p, RX, G)) == pytest.approx(1.0, abs=1e-12)


def test_combiner_boresight_and_alignment(baseline):
    np.testing.assert_allclose(combining_vector((-100.0, 0.0, 10.0), RX, G), np.ones(16) / 4)
    ch = baseline.channels.sensing[1][0]
    v = combining_vector(baseline.scene.grid.centers[1], baseline.scene.receiver, baseline.scene.geometry)
    assert np.vdot(v, ch.h_rx) == pytest.approx(12.0, rel=1e-12)


def _single_ap(clutter=0.0, noise=1e-6, rcs=0.1):
    nodes = [ApNode((-300.0, -100.0, 10.0), 1, 1), RX]
    scene = build_scene(G, nodes, voxel_grid((-150.0, -150.0, 30.0), (2, 2, 2), 2))
    return scene, build_channels(scene, 15e9, StochasticParams(clutter, noise), RcsModel.swerling2(rcs))


def test_analytic_zero_precoder(baseline):
    assert analytic_sinr(baseline.channels, 0, np.zeros((3, 144)), np.ones(3)) == 0.0


def test_analytic_perfect_alignment():
    scene, ch = _single_ap()
    p_sens = 0.4
    sc = ch.sensing[0][0]
    w = math.sqrt(p_sens) * np.conj(sc.h_tx) / 4
    expected = 0.1 * sc.gain * 16**2 * p_sens / 1e-6
    assert analytic_sinr(ch, 0, w[None, :], [0.0]) == pytest.approx(expected, rel=1e-12)


def test_analytic_incoherent_adds_powers(toy_scenes):
    scene, ch = toy_scenes[3]
    sol = coordinated_precoder(scene, ch, 0, 0.1, 1.0)
    g = echo_gains(ch, 0, sol.w)
    xi = ch.params.clutter_gain * 0.3 + ch.params.noise_power
    inc = analytic_sinr(ch, 0, sol.w, sol.rho, coherent=False)
    assert inc == pytest.approx(ch.rcs.mean_power * np.sum(np.abs(g) ** 2) / xi, rel=1e-12)
    # the closed form co-phases the echoes, so the coherent sum wins by up to J
    assert inc <= sol.objective <= 3 * inc * (1 + 1e-12)


def test_zero_interference_rejected():
    scene, ch = _single_ap(noise=0.0)
    with pytest.raises(ContractError):
        analytic_sinr(ch, 0, np.ones((1, 16)), [0.0])


@pytest.mark.parametrize("idx", range(4))
def test_mc_matches_analytic_without_direct_link(toy_scenes, idx):
    scene, ch = toy_scenes[idx]
    sol = coordinated_precoder(scene, ch, 0, 0.2, 1.0)
    est, se = sensing_sinr_mc(sol, ch, 0, False, 100_000, np.random.default_rng(idx), scene=scene)
    assert abs(est - sol.objective) <= 3 * se


def test_mc_vector_route_agrees(toy_scenes):
    scene, ch = toy_scenes[2]
    sol = coordinated_precoder(scene, ch, 0, 0.2, 1.0)
    a, sa = sensing_sinr_mc(sol, ch, 0, True, 40_000, np.random.default_rng(5), scene=scene)
    b, sb = sensing_sinr_mc(sol, ch, 0, True, 40_000, np.random.default_rng(6), scene=scene, vector=True)
    assert abs(a - b) <= 4 * math.hypot(sa, sb)


def test_mc_direct_link_leaves_only_ssb_leakage(baseline):
    """With the direct link nulled, the only direct contribution is the SSB part."""
    scene, ch = baseline.scene, baseline.channels
    rho = solve_power_allocation(baseline.ue, 1000.0)
    for q in range(3):
        sol = coordinated_precoder(scene, ch, q, rho, 1000.0)
        v = ch.sensing[q][0].h_rx / 12.0
        f = scene.ssb_column(q)
        sens_direct = [abs(np.vdot(v, d.matrix @ sol.w[j])) for j, d in enumerate(ch.direct)]
        assert max(sens_direct) < 1e-9 * max(abs(np.vdot(v, d.matrix @ np.conj(f))) for d in ch.direct) + 1e-20
        ssb = sum(rho * abs(np.vdot(v, d.matrix @ np.conj(f))) ** 2 for d in ch.direct)
        xi = ch.params.clutter_gain * 3 * rho + ch.params.noise_power
        expected = sol.objective * xi / (xi + ssb)
        est, se = sensing_sinr_mc(sol, ch, q, True, 100_000, np.random.default_rng(q), scene=scene)
        assert abs(est - expected) <= 3 * se


def test_mc_direct_link_needs_scene(toy_scenes):
    scene, ch = toy_scenes[0]
    sol = coordinated_precoder(scene, ch, 0, 0.2, 1.0)
    with pytest.raises(ContractError):
        sensing_sinr_mc(sol, ch, 0, True, 100, np.random.default_rng(0))


def test_mc_zero_rcs(toy_scenes):
    scene, ch = toy_scenes[0]
    ch0 = with_rcs(ch, RcsModel.swerling2(0.0))
    sol = coordinated_precoder(scene, ch0, 0, 0.2, 1.0)
    est, _ = sensing_sinr_mc(sol, ch0, 0, False, 1000, np.random.default_rng(0), scene=scene)
    assert est == 0.0 and sensing_sinr_analytic(sol, ch0, 0) == 0.0


def _cell_edge(gamma):
    return UeScenario(2 * 250 / math.sqrt(3), (4 * 250 / math.sqrt(3),) * 2, gamma, 1e-6)


@given(st.floats(0.01, 1.9))
def test_user_sinr_inverts_power_allocation(gamma):
    ue = _cell_edge(gamma)
    assert user_sinr(ue, solve_power_allocation(ue, math.inf)) == pytest.approx(gamma, rel=1e-9)


def test_user_sinr_guard_and_ceiling():
    with pytest.raises(ContractError):
        user_sinr(UeScenario(100.0, (), 1.0, 0.0), 1.0)
    ue = _cell_edge(1.5)
    onset = solve_power_allocation(ue, math.inf)
    ceiling = ue.serving_gain / ue.interferer_gains.sum()
    assert user_sinr(ue, 1e6 * onset) == pytest.approx(ceiling, rel=1e-5)


def test_user_sinr_with_leakage(toy_scenes):
    scene, ch = toy_scenes[3]
    ue = _cell_edge(1.5)
    rho = solve_power_allocation(ue, 1.0)
    zero = PrecoderSolution(np.zeros((3, 9)), np.full(3, rho), 0.0, {}, "dl-masked", "closed-form", 1.0)
    assert user_sinr_full(ue, rho, zero)["gamma_ue"] == user_sinr(ue, rho)
    sol = coordinated_precoder(scene, ch, 0, rho, 1.0)
    out = user_sinr_full(ue, rho, sol)
    expected = np.sum(ue.leakage_gains(3) * (1.0 - rho))
    assert out["leakage"] == pytest.approx(expected, rel=1e-12)
    assert 0 < out["relative_drop"] < 1 and out["gamma_ue_neglected"] == user_sinr(ue, rho)


def test_volume_average_examples():
    assert volume_average([4.0, 4.0, 4.0]) == 4.0
    assert volume_average([1.0, 3.0]) == 2.0
    assert volume_average([1.0, None, 3.0], return_counts=True) == (2.0, 2, 1)
    assert volume_average([10.0, 1000.0], domain="db") == pytest.approx(100.0)
    with pytest.raises(DegenerateVoxel):
        volume_average([None, float("nan")])
    with pytest.raises(ContractError):
        volume_average([1.0], domain="log")


def test_volume_average_baseline_by_hand(baseline):
    rho = solve_power_allocation(baseline.ue, 1000.0)
    vals = [coordinated_precoder(baseline.scene, baseline.channels, q, rho, 1000.0).objective for q in range(3)]
    assert volume_average(vals) == pytest.approx((vals[0] + vals[1] + vals[2]) / 3, rel=1e-15)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=8), st.randoms(use_true_random=False),
       st.floats(1e-3, 1e3))
def test_volume_average_permutation_and_scaling(vals, rnd, c):
    shuffled = list(vals)
    rnd.shuffle(shuffled)
    assert volume_average(shuffled) == pytest.approx(volume_average(vals), rel=1e-12, abs=1e-300)
    assert volume_average([c * v for v in vals]) == pytest.approx(c * volume_average(vals), rel=1e-12, abs=1e-300)


def test_cdf_samples_swerling_mean(toy_scenes):
    scene, ch = toy_scenes[2]
    sol = coordinated_precoder(scene, ch, 0, 0.2, 1.0)
    x = sinr_cdf_samples(sol, ch, 0, ch.rcs, 100_000, np.random.default_rng(3))
    assert abs(x.mean() - sol.objective) <= 3 * x.std(ddof=1) / math.sqrt(len(x))
    assert np.all(sinr_cdf_samples(sol, ch, 0, RcsModel.swerling2(0.0), 10, np.random.default_rng(3)) == 0)


def test_cdf_weibull_matched_mean_is_steeper(toy_scenes):
    scene, ch = toy_scenes[2]
    sol = coordinated_precoder(scene, ch, 0, 0.2, 1.0)
    sw = sinr_cdf_samples(sol, ch, 0, RcsModel.swerling2(0.1), 200_000, np.random.default_rng(1))
    wb = sinr_cdf_samples(sol, ch, 0, RcsModel.weibull(2.0, mean_power=0.1), 200_000, np.random.default_rng(2))
    se = math.hypot(sw.std() / math.sqrt(len(sw)), wb.std() / math.sqrt(len(wb)))
    assert abs(sw.mean() - wb.mean()) <= 3 * se
    iqr = lambda x: np.subtract(*np.quantile(x, [0.75, 0.25]))  # noqa: E731
    assert iqr(wb) < iqr(sw)


def test_random_scene_channels_consistent():
    scene, ch = random_scene(np.random.default_rng(0), 3, 3)
    assert len(ch.sensing) == 1 and len(ch.sensing[0]) == 3
