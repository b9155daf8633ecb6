"""Sensing SINR (analytic and Monte Carlo), user SINR, volume averages and
per-realisation SINR samples."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .channel import ChannelSet, RcsModel, crandn, draw_rcs, simulate_rx, unit_symbols
from .errors import ContractError, DegenerateVoxel, GeometryError
from .scene import ArrayGeometry, ApNode, upa_steering
from .units import lin_to_db

if TYPE_CHECKING:
    from .precoder import PrecoderSolution, UeScenario
    from .scene import Scene


@dataclass
class SinrReport:
    """Volume-level sensing and user SINR summary (linear unless noted)."""

    gamma_sen: float  # with direct link, Monte Carlo
    gamma_sen_stderr: float
    gamma_sen_analytic: float  # direct link disregarded
    gamma_ue: float
    per_voxel: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    @property
    def gamma_sen_db(self) -> float:
        return float(lin_to_db(self.gamma_sen))

    @property
    def gamma_sen_analytic_db(self) -> float:
        return float(lin_to_db(self.gamma_sen_analytic))

    @property
    def gamma_ue_db(self) -> float:
        return float(lin_to_db(self.gamma_ue))


def combining_vector(voxel, rx: ApNode, geom: ArrayGeometry) -> np.ndarray:
    """Receive combiner ``v_q = h_{q,rx} / sqrt(M)`` matched to the voxel's arrival direction."""
    d = rx.pos - np.asarray(voxel, dtype=float)
    l_rx = float(np.linalg.norm(d))
    if l_rx == 0.0:
        raise GeometryError("voxel coincides with the receiver")
    theta = math.atan2(d[1], d[0])
    phi = math.asin(np.clip(d[2] / l_rx, -1.0, 1.0))
    return upa_steering(theta, phi, geom) / math.sqrt(geom.m)


def _combiner(channels: ChannelSet, q: int) -> np.ndarray:
    h = channels.sensing[q][0].h_rx
    return h / math.sqrt(h.shape[0])


def echo_gains(channels: ChannelSet, q: int, w) -> np.ndarray:
    """Per-AP combined echo amplitudes ``g_j = v_q^H H_{j,q} w_j``."""
    v = _combiner(channels, q)
    w = np.atleast_2d(w)
    return np.array([np.vdot(v, ch.matrix @ w[j]) for j, ch in enumerate(channels.sensing[q])])


def interference_power(channels: ChannelSet, rho) -> float:
    """``xi(rho) = beta_g sum_j rho_j + sigma_n^2``."""
    return channels.params.clutter_gain * float(np.sum(rho)) + channels.params.noise_power


def analytic_sinr(channels: ChannelSet, q: int, w, rho, coherent: bool | None = None) -> float:
    """Expected sensing SINR with the direct link disregarded.

    With a reflectivity common to all illuminators the echoes add coherently,
    ``sigma_rcs^2 |sum_j g_j|^2 / xi``; with independent per-AP reflectivities
    the powers add instead.
    """
    coherent = channels.shared_rcs if coherent is None else coherent
    g = echo_gains(channels, q, w)
    num = abs(g.sum()) ** 2 if coherent else float(np.sum(np.abs(g) ** 2))
    xi = interference_power(channels, rho)
    if xi <= 0:
        raise ContractError("zero clutter-plus-noise power")
    return channels.rcs.mean_power * num / xi


def sensing_sinr_analytic(solution: PrecoderSolution, channels: ChannelSet, q: int) -> float:
    return analytic_sinr(channels, q, solution.w, solution.rho)


def _ratio_of_means(num: np.ndarray, den: np.ndarray) -> tuple:
    """Ratio of sample means and its delta-method standard error."""
    n = num.shape[0]
    mx, my = num.mean(), den.mean()
    r = mx / my
    cov = np.cov(np.stack([num, den]), ddof=1)
    var = (cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1]) / (my * my * n)
    return float(r), float(math.sqrt(max(var, 0.0)))


def _direct_gains(channels: ChannelSet, v, w, f_q) -> tuple:
    dw = np.array([np.vdot(v, ch.matrix @ w[j]) for j, ch in enumerate(channels.direct)])
    df = np.array([np.vdot(v, ch.matrix @ np.conj(f_q)) for ch in channels.direct])
    return dw, df


def sensing_sinr_mc(solution: PrecoderSolution, channels: ChannelSet, q: int, include_direct: bool,
                    n_trials: int, rng: np.random.Generator, *, scene: Scene | None = None,
                    vector: bool = False, chunk: int = 10_000) -> tuple:
    """Monte Carlo estimate of the expected-power sensing SINR (ratio of means).

    Draws reflectivity, sensing and SSB symbols, SSB ground clutter and noise.
    The default draws the combined scalars ``v^H y`` directly, which have the
    same joint law as projecting full received vectors; ``vector=True`` builds
    full ``M``-vectors through :func:`simulate_rx` (needs ``scene``).

    Returns ``(estimate, standard_error)``.
    """
    if n_trials < 2:
        raise ContractError("need at least 2 trials")
    w, rho = np.atleast_2d(solution.w), np.asarray(solution.rho, dtype=float)
    n_aps = channels.n_aps
    v = _combiner(channels, q)
    g = echo_gains(channels, q, w)
    nums, dens = [], []
    if vector:
        if scene is None:
            raise ContractError("vector mode needs the scene")
        for start in range(0, n_trials, chunk):
            n = min(chunk, n_trials - start)
            s = unit_symbols(rng, n)
            c = unit_symbols(rng, (n, n_aps))
            alpha = draw_rcs(channels.rcs, n_aps, rng, n, shared=channels.shared_rcs)
            _, terms = simulate_rx(scene, channels, q, w, rho, s=s, c=c, alpha=alpha, rng=rng,
                                   include_direct=include_direct, return_terms=True)
            nums.append(np.abs(terms["sensing"] @ v.conj()) ** 2)
            rest = terms["clutter"] + terms["direct"] + terms["noise"]
            dens.append(np.abs(rest @ v.conj()) ** 2)
    else:
        f_q = None
        if include_direct:
            if scene is None:
                raise ContractError("the direct link needs the scene's SSB column")
            f_q = scene.ssb_column(q)
            dw, df = _direct_gains(channels, v, w, f_q)
        fnorm2 = 1.0 if scene is None else float(np.vdot(scene.ssb_column(q), scene.ssb_column(q)).real)
        clutter_var = channels.params.clutter_gain * fnorm2
        sq = np.sqrt(rho)
        for start in range(0, n_trials, chunk):
            n = min(chunk, n_trials - start)
            s = unit_symbols(rng, n)
            c = unit_symbols(rng, (n, n_aps))
            alpha = draw_rcs(channels.rcs, n_aps, rng, n, shared=channels.shared_rcs)
            gc = crandn(rng, (n, n_aps), clutter_var)
            noise = crandn(rng, n, channels.params.noise_power)
            nums.append(np.abs(s * (alpha @ g)) ** 2)
            rest = (c * sq * gc).sum(axis=1) + noise
            if include_direct:
                rest = rest + s * dw.sum() + (c * sq * df).sum(axis=1)
            dens.append(np.abs(rest) ** 2)
    return _ratio_of_means(np.concatenate(nums), np.concatenate(dens))


def user_sinr(ue: UeScenario, rho: float) -> float:
    """Cell-edge user SINR of the SSB with sensing leakage neglected."""
    if rho < 0:
        raise ContractError("SSB power must be >= 0")
    den = rho * float(np.sum(ue.interferer_gains)) + ue.noise_power
    if den <= 0:
        raise ContractError("user SINR undefined: no interference and zero noise")
    return rho * ue.serving_gain / den


def user_sinr_full(ue: UeScenario, rho: float, solution: PrecoderSolution) -> dict:
    """User SINR including the expected sensing leakage ``sum_k beta_k ||w_k||^2``.

    Returns both values so the neglected term can be quantified.
    """
    w = np.atleast_2d(solution.w)
    gains = ue.leakage_gains(w.shape[0])
    leak = float(np.sum(gains * np.sum(np.abs(w) ** 2, axis=1)))
    base = user_sinr(ue, rho)
    den = rho * float(np.sum(ue.interferer_gains)) + ue.noise_power + leak
    full = rho * ue.serving_gain / den
    return {"gamma_ue": full, "gamma_ue_neglected": base, "leakage": leak,
            "relative_drop": 1.0 - full / base if base > 0 else 0.0}


def volume_average(values, domain: str = "linear", return_counts: bool = False):
    """Mean over voxels; ``None`` or NaN entries mark degenerate voxels and are skipped.

    ``domain="db"`` averages the dB values and returns a linear value.
    """
    vals = np.array([np.nan if v is None else float(v) for v in values])
    ok = ~np.isnan(vals)
    if not ok.any():
        raise DegenerateVoxel(None, None)
    if domain == "linear":
        out = float(vals[ok].mean())
    elif domain == "db":
        out = float(10 ** (np.mean(lin_to_db(vals[ok])) / 10))
    else:
        raise ContractError(f"unknown averaging domain {domain!r}")
    if return_counts:
        return out, int(ok.sum()), int((~ok).sum())
    return out


def sinr_cdf_samples(solution: PrecoderSolution, channels: ChannelSet, q: int, rcs_model: RcsModel,
                     n_trials: int, rng: np.random.Generator) -> np.ndarray:
    """Per-realisation SINR ``|sum_j alpha_j g_j|^2 / xi`` over reflectivity draws only.

    Clutter and noise enter at their expected power.
    """
    g = echo_gains(channels, q, solution.w)
    alpha = draw_rcs(rcs_model, channels.n_aps, rng, n_trials, shared=channels.shared_rcs)
    return np.abs(alpha @ g) ** 2 / interference_power(channels, solution.rho)
