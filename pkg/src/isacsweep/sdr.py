"""Semidefinite-relaxation oracle for the coordinated precoder.

Bisection on the SINR level ``t``; every level is tested by an ADMM solve of
the relaxed problem in the lifted variable ``W = w w^H``. The equality
(nulling) constraints are removed by working in an orthonormal basis of each
AP's allowed subspace, so only block-trace / SSB-power inequalities and the
PSD cone remain. Intended for toy sizes (``M <= 16``, ``J <= 3``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .channel import ChannelSet
from .errors import ContractError, DegenerateSolution, Infeasible
from .metrics import analytic_sinr
from .precoder import PrecoderSolution, UeScenario, constraint_basis, precoder_residuals
from .scene import Scene


@dataclass(frozen=True)
class SdrOptions:
    max_iter: int = 5000
    tol: float = 1e-7  # ADMM primal/dual residual, relative
    bisection_tol: float = 1e-4  # relative width of the t bracket
    t_bracket: tuple | None = None  # (lo, hi); default (0, upper bound)
    max_bisection: int = 60


class _Polytope:
    """Euclidean projection onto ``{x : G x <= h}`` in a handful of dimensions.

    Every active set is pre-factorised once, so a projection is a few batched
    matrix products followed by a KKT check.
    """

    def __init__(self, G: np.ndarray, h: np.ndarray):
        m, n = G.shape
        Ks, ks, Ls, ls, masks = [], [], [], [], []
        for r in range(m + 1):
            for S in itertools.combinations(range(m), r):
                S = list(S)
                mask = np.zeros(m, dtype=bool)
                mask[S] = True
                if S:
                    A, b = G[S], h[S]
                    Minv = np.linalg.pinv(A @ A.T)
                    L = np.zeros((m, n))
                    lo = np.zeros(m)
                    L[S] = Minv @ A
                    lo[S] = -Minv @ b
                    K = np.eye(n) - A.T @ Minv @ A
                    k = A.T @ Minv @ b
                else:
                    L, lo, K, k = np.zeros((m, n)), np.zeros(m), np.eye(n), np.zeros(n)
                Ks.append(K), ks.append(k), Ls.append(L), ls.append(lo), masks.append(mask)
        self.G, self.h = G, h
        self.K, self.k = np.array(Ks), np.array(ks)
        self.L, self.l = np.array(Ls), np.array(ls)
        self.masks = np.array(masks)

    def project(self, x0: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        cand = self.K @ x0 + self.k  # (S, n)
        lam = self.L @ x0 + self.l  # (S, m)
        viol = np.max(cand @ self.G.T - self.h, axis=1)
        scale = tol * (1.0 + np.abs(x0).max() + np.abs(self.h).max())
        ok = np.all(lam >= -scale, axis=1) & (viol <= scale)
        dist = np.sum((cand - x0) ** 2, axis=1)
        if ok.any():
            idx = np.flatnonzero(ok)[np.argmin(dist[ok])]
        else:  # numerical corner: least-violating feasible-ish candidate
            idx = int(np.argmin(np.maximum(viol, 0.0) + 1e-3 * dist))
        return cand[idx]


def _psd_project(X: np.ndarray) -> np.ndarray:
    X = 0.5 * (X + X.conj().T)
    lam, V = np.linalg.eigh(X)
    lam = np.clip(lam, 0.0, None)
    return (V * lam) @ V.conj().T


class _Relaxation:
    """The normalised relaxed problem in reduced coordinates.

    Variables ``X`` (PSD, block sizes ``dims``) and ``r`` (SSB powers), both
    divided by ``P_max``. For a level ``s`` the ADMM maximises
    ``Tr(Ahat X) - s (beta_g sum r + sigma^2 / P_max)``.
    """

    def __init__(self, a_red, dims, ue_G, ue_h, clutter_gain, noise_norm):
        self.dims = np.asarray(dims)
        self.offsets = np.concatenate([[0], np.cumsum(dims)])
        self.n_aps = len(dims)
        self.scale = float(np.vdot(a_red, a_red).real)
        self.Ahat = np.outer(a_red, a_red.conj()) / self.scale
        self.clutter_gain = clutter_gain
        self.noise_norm = noise_norm
        J = self.n_aps
        # Polytope over (tau' = tau / sqrt(d), r): power rows then UE rows.
        G_pow = np.hstack([np.diag(np.sqrt(self.dims)), np.eye(J)])
        G_ue = np.hstack([np.zeros((J, J)), ue_G])
        norms = np.linalg.norm(G_ue, axis=1, keepdims=True)
        self.poly = _Polytope(np.vstack([G_pow, G_ue / norms]),
                              np.concatenate([np.ones(J), ue_h / norms[:, 0]]))
        n = int(self.offsets[-1])
        self.state = {"X": np.zeros((n, n), complex), "r": np.zeros(J), "Z": np.zeros((n, n), complex),
                      "U": np.zeros((n, n), complex), "sigma": 1.0}

    def block_traces(self, X):
        return np.array([np.trace(X[o:o + d, o:o + d]).real for o, d in zip(self.offsets, self.dims)])

    def project_affine(self, X, r):
        tau0 = self.block_traces(X)
        x = self.poly.project(np.concatenate([tau0 / np.sqrt(self.dims), r]))
        J = self.n_aps
        tau, r_new = x[:J] * np.sqrt(self.dims), x[J:]
        X = X.copy()
        for j, (o, d) in enumerate(zip(self.offsets, self.dims)):
            X[o:o + d, o:o + d] += (tau[j] - tau0[j]) / d * np.eye(d)
        return X, r_new

    def xi(self, r):
        return self.clutter_gain * float(np.sum(r)) + self.noise_norm

    def ratio(self, X, r):
        return float(np.trace(self.Ahat @ X).real) / self.xi(r)

    def repair(self, Z, r):
        """Feasible point from the PSD iterate: block power scaling by congruence."""
        tau = self.block_traces(Z)
        s = np.ones(self.n_aps)
        room = np.maximum(1.0 - r, 0.0)
        big = tau > room
        s[big] = np.sqrt(room[big] / tau[big])
        D = np.repeat(s, self.dims)
        return Z * np.outer(D, D)

    def solve(self, level, opts: SdrOptions):
        st = self.state
        X, r, Z, U, sigma = st["X"], st["r"], st["Z"], st["U"], st["sigma"]
        c_r = level * self.clutter_gain * np.ones(self.n_aps)
        it = 0
        converged = False
        for it in range(1, opts.max_iter + 1):
            X, r = self.project_affine(Z - U + self.Ahat / sigma, r - c_r / sigma)
            Z_old = Z
            Z = _psd_project(X + U)
            U = U + X - Z
            rp = np.linalg.norm(X - Z)
            rd = sigma * np.linalg.norm(Z - Z_old)
            scale = max(1.0, np.linalg.norm(Z))
            if rp < opts.tol * scale and rd < opts.tol * scale:
                converged = True
                break
            if it % 20 == 0:
                if rp > 10 * rd:
                    sigma *= 2.0
                    U /= 2.0
                elif rd > 10 * rp:
                    sigma /= 2.0
                    U *= 2.0
        st.update(X=X, r=r, Z=Z, U=U, sigma=sigma)
        Zf = self.repair(Z, r)
        return Zf, r.copy(), {"iterations": it, "converged": converged,
                              "primal_residual": float(rp), "dual_residual": float(rd)}


def _reduced_problem(scene: Scene, channels: ChannelSet, q: int, dl_mask: bool):
    m = scene.geometry.m
    f_q = scene.ssb_column(q)
    H = channels.stacked(q)
    v = channels.sensing[q][0].h_rx / math.sqrt(m)
    a = (H.conj().T @ v).reshape(channels.n_aps, m)
    bases, a_red = [], []
    for j in range(channels.n_aps):
        B = constraint_basis(f_q, channels.direct[j].h_d if dl_mask else None)
        N = null_space(B.conj().T)
        bases.append(N)
        a_red.append(N.conj().T @ a[j])
    return bases, np.concatenate(a_red), a


def sdr_bisection_solver(scene: Scene, channels: ChannelSet, q: int, ue: UeScenario, p_max: float,
                         dl_mask: bool = True, opts: SdrOptions | None = None) -> PrecoderSolution:
    """Bisection over ``t`` with ADMM feasibility solves of the relaxed problem.

    Every accepted level is certified by an explicitly feasible ``(W, rho)``;
    ``objective`` is the best certified SINR, and ``info["t_upper"]`` the final
    upper end of the bracket. The returned ``w`` is the rank-one extraction.
    """
    opts = opts or SdrOptions()
    J = channels.n_aps
    B = ue.interference_matrix(J)
    ue_G = -(ue.serving_gain * np.eye(J) - ue.gamma_req * B)  # G r <= h form
    ue_h = -ue.gamma_req * ue.noise_power / p_max * np.ones(J)
    try:
        rho_min = np.linalg.solve(-ue_G, -ue_h)
    except np.linalg.LinAlgError:
        raise Infeasible("interference-limited", "singular user-SINR system") from None
    if np.any(rho_min <= 0) and ue.gamma_req > 0:
        raise Infeasible("interference-limited", "no positive SSB power meets the target")
    if np.any(rho_min >= 1.0):
        raise Infeasible("power-limited", "no power left for sensing")

    bases, a_red, a = _reduced_problem(scene, channels, q, dl_mask)
    if np.linalg.norm(a_red) == 0.0:
        raise DegenerateSolution("objective vanishes on the allowed subspace")
    dims = [N.shape[1] for N in bases]
    noise_norm = channels.params.noise_power / p_max
    prob = _Relaxation(a_red, dims, ue_G, ue_h, channels.params.clutter_gain, noise_norm)
    sigma_rcs = channels.rcs.mean_power

    # Normalised level s relates to t by t = sigma_rcs * scale * s.
    if opts.t_bracket is not None:
        lo, hi = (x / (sigma_rcs * prob.scale) for x in opts.t_bracket)
        if not 0 <= lo < hi:
            raise ContractError("invalid bisection bracket")
    else:
        norms = np.array([np.linalg.norm(a_red[o:o + d]) for o, d in zip(prob.offsets, dims)])
        lo, hi = 0.0, float(np.sum(norms) ** 2 / prob.scale / noise_norm)
    best = None
    steps = 0
    last = {}
    while hi - lo > opts.bisection_tol * max(hi, 1e-300) and steps < opts.max_bisection:
        steps += 1
        mid = 0.5 * (lo + hi)
        Z, r, last = prob.solve(mid, opts)
        achieved = prob.ratio(Z, r)
        if achieved >= lo and (best is None or achieved >= best[0]):
            best = (achieved, Z, r)
        if achieved >= mid:
            lo = achieved
        else:
            hi = mid
    if best is None:
        Z, r, last = prob.solve(lo, opts)
        best = (prob.ratio(Z, r), Z, r)
    s_best, Z, r = best

    # Lift back to the full space.
    n_full = J * scene.geometry.m
    Nblk = np.zeros((n_full, int(prob.offsets[-1])), complex)
    m = scene.geometry.m
    for j, N in enumerate(bases):
        Nblk[j * m:(j + 1) * m, prob.offsets[j]:prob.offsets[j] + dims[j]] = N
    W = p_max * (Nblk @ Z @ Nblk.conj().T)
    rho = p_max * r
    lam = np.linalg.eigvalsh(0.5 * (W + W.conj().T))[::-1]
    w = extract_rank1(W, rho, p_max, J)
    f_q = scene.ssb_column(q)
    info = {
        "t_upper": float(sigma_rcs * prob.scale * hi),
        "bisection_steps": steps,
        "eig_ratio": float(lam[0] / lam[1]) if lam[1] > 0 else math.inf,
        "rank1_objective": analytic_sinr(channels, q, w, rho, coherent=True),
        "w_trace_slack": (p_max - (np.array([np.trace(W[j * m:(j + 1) * m, j * m:(j + 1) * m]).real
                                             for j in range(J)]) + rho)).tolist(),
        **last,
    }
    return PrecoderSolution(
        w=w, rho=rho, objective=float(sigma_rcs * prob.scale * s_best),
        residuals=precoder_residuals(w, rho, f_q, channels, p_max),
        mode="dl-masked" if dl_mask else "non-dl-masked", method="sdr", p_max=p_max,
        info=info | {"W": W},
    )


def extract_rank1(W: np.ndarray, rho, p_max: float, n_aps: int | None = None) -> np.ndarray:
    """Per-AP precoders ``sqrt(P_max - rho_j) * z_j`` from the unit dominant eigenvector ``z``.

    The global phase makes the first non-negligible entry real and positive.
    """
    W = 0.5 * (W + W.conj().T)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    n_aps = len(rho) if n_aps is None else n_aps
    rho = np.broadcast_to(rho, (n_aps,))
    lam, V = np.linalg.eigh(W)
    if lam[-1] <= 1e-12 * max(1.0, np.abs(W).max()) or not np.isfinite(lam[-1]):
        raise DegenerateSolution("relaxed solution is numerically zero")
    z = V[:, -1]
    k = int(np.flatnonzero(np.abs(z) > 1e-12 * np.abs(z).max())[0])
    z = z * np.exp(-1j * np.angle(z[k]))
    blocks = z.reshape(n_aps, -1)
    return np.sqrt(p_max - rho)[:, None] * blocks
