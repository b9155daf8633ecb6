"""Bistatic sensing and direct-link channels, stochastic draws (RCS, clutter, noise)
and transmit/receive signal assembly for a single subcarrier."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import ContractError, GeometryError
from .scene import ArrayGeometry, ApNode, BistaticAngles, Scene, bistatic_angles, upa_steering
from .units import SPEED_OF_LIGHT


@dataclass(frozen=True, eq=False)
class BistaticChannel:
    matrix: np.ndarray
    gain: float
    delay: float
    angles: BistaticAngles
    h_rx: np.ndarray
    h_tx: np.ndarray


@dataclass(frozen=True, eq=False)
class DirectChannel:
    matrix: np.ndarray
    gain: float
    delay: float
    theta_d: float
    h_a: np.ndarray
    h_d: np.ndarray

    @property
    def theta_a(self) -> float:
        return self.theta_d + math.pi


@dataclass(frozen=True)
class RcsModel:
    """Target reflectivity law.

    ``swerling2``: ``alpha ~ CN(0, variance)``. ``weibull``: ``|alpha|^2`` is
    Weibull(shape, scale) with uniform phase.
    """

    variant: str
    variance: float = 0.0
    shape: float = 0.0
    scale: float = 0.0

    def __post_init__(self):
        if self.variant == "swerling2":
            if self.variance < 0:
                raise ContractError("RCS variance must be >= 0")
        elif self.variant == "weibull":
            if self.shape <= 0 or self.scale <= 0:
                raise ContractError("Weibull shape and scale must be > 0")
        else:
            raise ContractError(f"unknown RCS model {self.variant!r}")

    @classmethod
    def swerling2(cls, variance: float) -> RcsModel:
        return cls("swerling2", variance=float(variance))

    @classmethod
    def weibull(cls, shape: float, scale: float | None = None, mean_power: float | None = None) -> RcsModel:
        """Weibull on RCS power; give ``scale`` directly or the target ``mean_power``."""
        if scale is None:
            if mean_power is None:
                raise ContractError("need scale or mean_power")
            scale = mean_power / gamma_fn(1.0 + 1.0 / shape)
        return cls("weibull", shape=float(shape), scale=float(scale))

    @property
    def mean_power(self) -> float:
        if self.variant == "swerling2":
            return self.variance
        return self.scale * gamma_fn(1.0 + 1.0 / self.shape)


@dataclass(frozen=True)
class StochasticParams:
    clutter_gain: float  # beta_g
    noise_power: float  # sigma_n^2, mW

    def __post_init__(self):
        if self.clutter_gain < 0 or self.noise_power < 0:
            raise ContractError("variances must be >= 0")


@dataclass(frozen=True, eq=False)
class ChannelSet:
    sensing: tuple  # sensing[q][j] -> BistaticChannel
    direct: tuple  # direct[j] -> DirectChannel
    params: StochasticParams
    rcs: RcsModel
    fc: float
    shared_rcs: bool = True

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.fc

    @property
    def n_aps(self) -> int:
        return len(self.direct)

    def stacked(self, q: int) -> np.ndarray:
        """``H_q = [H_{1,q}, ..., H_{J,q}]``, shape ``(M, J*M)``."""
        return np.concatenate([ch.matrix for ch in self.sensing[q]], axis=1)


def crandn(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(np.asarray(var) / 2.0)


def unit_symbols(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-modulus symbols with uniform phase (zero mean, unit power, uncorrelated)."""
    return np.exp(2j * np.pi * rng.random(shape))


def sensing_channel(ap: ApNode, voxel, rx: ApNode, fc: float, geom: ArrayGeometry) -> BistaticChannel:
    ang = bistatic_angles(ap.pos, voxel, rx.pos)
    gain = 1.0 / (ang.l_tx**2 * ang.l_rx**2)
    delay = (ang.l_tx + ang.l_rx) / SPEED_OF_LIGHT
    h_tx = upa_steering(ang.theta_tx, ang.phi_tx, geom)
    h_rx = upa_steering(ang.theta_rx, ang.phi_rx, geom)
    H = math.sqrt(gain) * np.exp(-2j * np.pi * fc * delay) * np.outer(h_rx, h_tx)
    return BistaticChannel(H, gain, delay, ang, h_rx, h_tx)


def direct_channel(ap: ApNode, rx: ApNode, fc: float, geom: ArrayGeometry) -> DirectChannel:
    d = rx.pos - ap.pos
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise GeometryError("illuminator coincides with the receiver")
    theta_d = math.atan2(d[1], d[0])
    gain = 1.0 / dist**2
    delay = dist / SPEED_OF_LIGHT
    h_d = upa_steering(theta_d, 0.0, geom)
    h_a = upa_steering(theta_d + math.pi, 0.0, geom)
    H = math.sqrt(gain) * np.exp(-2j * np.pi * fc * delay) * np.outer(h_a, h_d)
    return DirectChannel(H, gain, delay, theta_d, h_a, h_d)


def build_channels(scene: Scene, fc: float, params: StochasticParams, rcs: RcsModel,
                   shared_rcs: bool = True) -> ChannelSet:
    geom = scene.geometry
    sensing = tuple(
        tuple(sensing_channel(ap, p, scene.receiver, fc, geom) for ap in scene.illuminators)
        for p in scene.grid.centers
    )
    direct = tuple(direct_channel(ap, scene.receiver, fc, geom) for ap in scene.illuminators)
    return ChannelSet(sensing, direct, params, rcs, float(fc), shared_rcs)


def draw_rcs(model: RcsModel, n_aps: int, rng: np.random.Generator, size=(), shared: bool = False):
    """Reflectivities ``alpha``, shape ``size + (n_aps,)``.

    ``shared`` draws one reflectivity per observation and repeats it across
    illuminators (a single coherent point target).
    """
    size = (size,) if isinstance(size, int) else tuple(size)
    cols = 1 if shared else n_aps
    shape = size + (cols,)
    if model.variant == "swerling2":
        alpha = crandn(rng, shape, model.variance)
    else:
        power = model.scale * rng.weibull(model.shape, shape)
        alpha = np.sqrt(power) * unit_symbols(rng, shape)
    if shared:
        alpha = np.repeat(alpha, n_aps, axis=-1)
    return alpha


def assemble_tx(s_q, c_q, w, f_q, rho, p_max: float | None = None) -> np.ndarray:
    """Per-AP transmit vectors ``x_j = s w_j + sqrt(rho_j) c_j conj(f_q)``.

    ``w`` is ``(J, M)``; ``s_q`` is scalar or ``(N,)``; ``c_q`` is ``(J,)`` or
    ``(N, J)``. Returns ``(J, M)`` or ``(N, J, M)``.
    """
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    rho = np.asarray(rho, dtype=float)
    if p_max is not None:
        total = np.sum(np.abs(w) ** 2, axis=1) + rho
        if np.any(total > p_max + 1e-9):
            raise ContractError(f"per-AP power {total.max():.6g} exceeds budget {p_max:.6g}")
    s = np.asarray(s_q)[..., None, None]
    c = np.asarray(c_q)[..., None]
    return s * w + np.sqrt(rho)[:, None] * c * np.conj(f_q)[None, :]


def simulate_rx(scene: Scene, channels: ChannelSet, q: int, w, rho, *, s, c, alpha,
                rng: np.random.Generator, eta: int = 1, include_direct: bool = True,
                full_clutter: bool = False, return_terms: bool = False):
    """Received vectors at AP_rx for symbol ``q``: sensing echoes, SSB clutter echoes,
    direct link and noise.

    Batched over trials: ``s`` is ``(N,)``, ``c`` and ``alpha`` are ``(N, J)``.
    Clutter is ``sum_j sqrt(rho_j) c_j G_j conj(f_q)`` with i.i.d. ``G_j``; unless
    ``full_clutter`` is set, ``G_j conj(f_q)`` is drawn directly from its exact law
    ``CN(0, beta_g ||f_q||^2 I)`` instead of materialising ``M x M`` matrices.
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    n = s.shape[0]
    c = np.asarray(c, dtype=complex).reshape(n, -1)
    alpha = np.asarray(alpha, dtype=complex).reshape(n, -1)
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    rho = np.asarray(rho, dtype=float)
    f = scene.ssb_column(q)
    m = f.shape[0]
    n_aps = channels.n_aps
    bg = channels.params.clutter_gain

    hw = np.stack([channels.sensing[q][j].matrix @ w[j] for j in range(n_aps)])  # (J, M)
    sensing = eta * s[:, None] * (alpha @ hw)

    if full_clutter:
        G = crandn(rng, (n, n_aps, m, m), bg)
        gf = G @ np.conj(f)
    else:
        gf = crandn(rng, (n, n_aps, m), bg * float(np.vdot(f, f).real))
    clutter = np.einsum("nj,njm->nm", np.sqrt(rho)[None, :] * c, gf)

    noise = crandn(rng, (n, m), channels.params.noise_power)

    if include_direct:
        x = assemble_tx(s, c, w, f, rho)  # (N, J, M)
        direct = sum(x[:, j, :] @ channels.direct[j].matrix.T for j in range(n_aps))
    else:
        direct = np.zeros((n, m), dtype=complex)

    y = sensing + clutter + direct + noise
    if return_terms:
        return y, {"sensing": sensing, "clutter": clutter, "direct": direct, "noise": noise}
    return y
