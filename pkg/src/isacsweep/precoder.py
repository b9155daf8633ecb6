"""SSB power allocation, the coordinated sensing precoder and the non-coordinated
benchmark precoder."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .errors import ContractError, DegenerateVoxel, Infeasible
from .metrics import analytic_sinr
from .scene import Scene

_RANK_TOL = 1e-10
_DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class UeScenario:
    """Cell-edge user of one AP and the APs interfering with its SSB.

    Gains follow the inverse-square law ``1 / l^2`` of the direct link.
    """

    serving_distance: float
    interferer_distances: tuple
    gamma_req: float
    noise_power: float

    def __post_init__(self):
        object.__setattr__(self, "interferer_distances", tuple(float(x) for x in self.interferer_distances))
        if self.serving_distance <= 0 or any(x <= 0 for x in self.interferer_distances):
            raise ContractError("UE distances must be > 0")
        if self.gamma_req < 0 or self.noise_power < 0:
            raise ContractError("gamma_req and noise power must be >= 0")

    @property
    def serving_gain(self) -> float:
        return 1.0 / self.serving_distance**2

    @property
    def interferer_gains(self) -> np.ndarray:
        return 1.0 / np.asarray(self.interferer_distances) ** 2

    def interference_matrix(self, n_aps: int) -> np.ndarray:
        """``B[j, i]`` is the gain from AP ``i`` to the UE of AP ``j``.

        The interferers of AP ``j`` are the next ``|U|`` APs in cyclic order,
        which reproduces the symmetric per-UE picture for any ``rho`` vector.
        """
        k = len(self.interferer_distances)
        if k > n_aps - 1:
            raise ContractError(f"{k} interferers need at least {k + 1} APs")
        B = np.zeros((n_aps, n_aps))
        for j in range(n_aps):
            for idx, g in enumerate(self.interferer_gains):
                B[j, (j + 1 + idx) % n_aps] = g
        return B

    def leakage_gains(self, n_aps: int) -> np.ndarray:
        """Gain from every AP to the UE of AP 0 (serving, then interferers, else 0)."""
        g = np.zeros(n_aps)
        g[0] = self.serving_gain
        for idx, b in enumerate(self.interferer_gains[: n_aps - 1]):
            g[1 + idx] = b
        return g


@dataclass
class PrecoderSolution:
    w: np.ndarray  # (J, M)
    rho: np.ndarray  # (J,), mW
    objective: float  # linear sensing SINR, direct link disregarded
    residuals: dict
    mode: str  # "dl-masked" | "non-dl-masked"
    method: str  # "closed-form" | "sdr" | "non-coordinated"
    p_max: float
    info: dict = field(default_factory=dict)

    @property
    def dl_mask(self) -> bool:
        return self.mode == "dl-masked"

    @property
    def stacked(self) -> np.ndarray:
        return self.w.reshape(-1)

    def is_feasible(self, scale: float = 1.0, tol: float = 1e-9) -> bool:
        r = self.residuals
        ok = np.all(r["power_slack"] >= -tol * max(1.0, self.p_max))
        ok &= np.all(r["ssb_leak"] <= tol * scale)
        if self.dl_mask:
            ok &= np.all(r["dl_leak"] <= tol * scale)
        return bool(ok)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "mode": self.mode,
            "p_max_mw": self.p_max,
            "rho_mw": self.rho.tolist(),
            "objective": self.objective,
            "power_slack": self.residuals["power_slack"].tolist(),
            "ssb_leak": self.residuals["ssb_leak"].tolist(),
            "dl_leak": self.residuals["dl_leak"].tolist(),
            **{k: v for k, v in self.info.items() if isinstance(v, (int, float, str, bool))},
        }


def solve_power_allocation(ue: UeScenario, p_max: float) -> float:
    """Smallest common SSB power meeting the user SINR target with equality.

    Raises :class:`Infeasible` when interference alone caps the SINR below the
    target, or when the required power exceeds ``p_max``.
    """
    denom = ue.serving_gain - ue.gamma_req * float(np.sum(ue.interferer_gains))
    if denom <= 0:
        raise Infeasible("interference-limited", f"SINR ceiling below target {ue.gamma_req:.6g}")
    rho = ue.gamma_req * ue.noise_power / denom
    if rho > p_max:
        raise Infeasible("power-limited", f"needs {rho:.6g} mW > P_max {p_max:.6g} mW")
    return rho


def constraint_basis(f_q: np.ndarray, h_d: np.ndarray | None) -> np.ndarray:
    """Orthonormal basis of the directions a sensing precoder must avoid.

    ``w^H conj(f_q) = 0`` and ``w^H conj(h_d) = 0`` put ``w`` orthogonal to
    ``conj(f_q)`` and ``conj(h_d)``.
    """
    cols = [np.conj(f_q)]
    if h_d is not None:
        cols.append(np.conj(h_d))
    U, s, _ = np.linalg.svd(np.stack(cols, axis=1), full_matrices=False)
    return U[:, s > _RANK_TOL * s[0]]


def precoder_residuals(w, rho, f_q, channels: ChannelSet, p_max: float) -> dict:
    w = np.atleast_2d(w)
    return {
        "power_slack": p_max - (np.sum(np.abs(w) ** 2, axis=1) + rho),
        "ssb_leak": np.abs(w.conj() @ np.conj(f_q)),
        "dl_leak": np.array([abs(np.vdot(w[j], np.conj(ch.h_d))) for j, ch in enumerate(channels.direct)]),
    }


def _as_rho(rho, n_aps, p_max):
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (n_aps,)).copy()
    if np.any(rho < 0):
        raise ContractError("SSB power must be >= 0")
    if np.any(rho >= p_max):
        raise Infeasible("power-limited", "no power left for sensing")
    return rho


def coordinated_precoder(scene: Scene, channels: ChannelSet, q: int, rho, p_max: float,
                         dl_mask: bool = True) -> PrecoderSolution:
    """Closed-form maximiser of the direct-link-free sensing SINR.

    The objective ``|a^H w|^2`` with ``a = H_q^H v_q`` is rank one, so each AP
    spends its whole remaining budget along the projection of ``a_j`` onto the
    allowed subspace, and every term ``a_j^H w_j`` is real and non-negative.
    """
    n_aps = channels.n_aps
    rho = _as_rho(rho, n_aps, p_max)
    f_q = scene.ssb_column(q)
    H = channels.stacked(q)
    v = channels.sensing[q][0].h_rx / math.sqrt(scene.geometry.m)
    a = (H.conj().T @ v).reshape(n_aps, -1)

    w = np.zeros_like(a)
    for j in range(n_aps):
        B = constraint_basis(f_q, channels.direct[j].h_d if dl_mask else None)
        pa = a[j] - B @ (B.conj().T @ a[j])
        norm = np.linalg.norm(pa)
        if norm <= _DEGENERATE_TOL * np.linalg.norm(a[j]):
            raise DegenerateVoxel(q, j + 1)
        w[j] = math.sqrt(p_max - rho[j]) * pa / norm

    t = analytic_sinr(channels, q, w, rho)
    return PrecoderSolution(
        w=w, rho=rho, objective=t,
        residuals=precoder_residuals(w, rho, f_q, channels, p_max),
        mode="dl-masked" if dl_mask else "non-dl-masked",
        method="closed-form", p_max=p_max,
    )


def phase_offset(channels: ChannelSet, q: int, j: int) -> float:
    """Range difference to AP_1 in wavelengths (the benchmark's only cross-AP knowledge)."""
    l_j = channels.sensing[q][j].angles.l_tx
    l_1 = channels.sensing[q][0].angles.l_tx
    return (l_j - l_1) / channels.wavelength


def _project_out(U: np.ndarray, h: np.ndarray, reduced: bool) -> np.ndarray:
    if reduced:
        return h - U @ (U.conj().T @ h)
    gram = U.conj().T @ U
    if np.linalg.cond(gram) > 1e10:
        warnings.warn("rank-deficient nulling matrix; using pseudo-inverse", RuntimeWarning, stacklevel=3)
        return h - U @ (np.linalg.pinv(U) @ h)
    return h - U @ np.linalg.solve(gram, U.conj().T @ h)


def noncoordinated_precoder(scene: Scene, channels: ChannelSet, q: int, rho, p_max: float,
                            dl_mask: bool = True, reduced: bool = False) -> PrecoderSolution:
    """Benchmark: each AP projects its own departure steering vector away from its
    SSB beam (and direct link) and only compensates the path-length phase to AP_1.

    The sensing power ``P_max - rho_j`` matches the coordinated design. With
    ``reduced`` the projector assumes orthonormal nulling columns.
    """
    n_aps = channels.n_aps
    rho = _as_rho(rho, n_aps, p_max)
    f_q = scene.ssb_column(q)
    m = scene.geometry.m
    w = np.zeros((n_aps, m), dtype=complex)
    deviation = 0.0
    for j in range(n_aps):
        cols = [np.conj(channels.direct[j].h_d) / math.sqrt(m)] if dl_mask else []
        U = np.stack(cols + [np.conj(f_q)], axis=1)
        h = channels.sensing[q][j].h_tx
        wt = _project_out(U, h, reduced)
        alt = _project_out(U, h, not reduced)
        deviation = max(deviation, float(np.linalg.norm(wt - alt) / max(np.linalg.norm(wt), 1e-300)))
        norm = np.linalg.norm(wt)
        if norm <= _DEGENERATE_TOL * np.linalg.norm(h):
            raise DegenerateVoxel(q, j + 1)
        phase = np.exp(2j * np.pi * phase_offset(channels, q, j))
        w[j] = phase * math.sqrt(p_max - rho[j]) * wt / norm

    t = analytic_sinr(channels, q, w, rho)
    return PrecoderSolution(
        w=w, rho=rho, objective=t,
        residuals=precoder_residuals(w, rho, f_q, channels, p_max),
        mode="dl-masked" if dl_mask else "non-dl-masked",
        method="non-coordinated", p_max=p_max,
        info={"reduced_form_deviation": deviation},
    )
