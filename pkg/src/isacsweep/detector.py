"""Per-voxel Neyman-Pearson detection: covariance assembly, LLR and test
statistic, the closed-form rank-one ROC and Monte Carlo ROC estimation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from sklearn.base import BaseEstimator
from statsmodels.stats.proportion import proportion_confint

from .channel import ChannelSet, crandn, draw_rcs, unit_symbols
from .errors import ContractError, NotApplicable
from .metrics import interference_power
from .precoder import PrecoderSolution

_RANK1_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HypothesisModel:
    """``H0: y ~ CN(0, sigma2 I)``; ``H1: y ~ CN(0, sigma2 I + sigma2_rcs Phi)``."""

    phi: np.ndarray
    sigma2: float
    sigma2_rcs: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ContractError("noise-plus-clutter variance must be > 0")
        if self.sigma2_rcs < 0:
            raise ContractError("RCS variance must be >= 0")

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self.sigma2 * np.eye(self.m) + self.sigma2_rcs * self.phi

    @cached_property
    def _eig(self):
        lam, V = np.linalg.eigh(0.5 * (self.phi + self.phi.conj().T))
        return lam[::-1], V[:, ::-1]

    @property
    def rank(self) -> int:
        lam, _ = self._eig
        if lam[0] <= 0:
            return 0
        return int(np.sum(lam > _RANK1_TOL * lam[0]))

    @property
    def phi_scale(self) -> float:
        """``trace(Phi)``; equals the single eigenvalue in the rank-one case."""
        return float(np.trace(self.phi).real)

    @property
    def direction(self) -> np.ndarray:
        """Unit dominant eigenvector ``u`` of ``Phi``."""
        return self._eig[1][:, 0]

    @property
    def effective_snr(self) -> float:
        return self.sigma2_rcs * self.phi_scale / self.sigma2

    @property
    def kappa(self) -> float:
        """Rank-one weight in ``T = kappa |u^H y|^2``."""
        sp = self.sigma2_rcs * self.phi_scale
        return sp / (self.sigma2 * (self.sigma2 + sp))


def echo_vectors(channels: ChannelSet, q: int, w) -> np.ndarray:
    """Noise-free received echoes ``H_{j,q} w_j`` per AP, shape ``(J, M)``."""
    w = np.atleast_2d(w)
    return np.stack([ch.matrix @ w[j] for j, ch in enumerate(channels.sensing[q])])


def sensing_covariance(solution: PrecoderSolution, channels: ChannelSet, q: int,
                       coherent: bool | None = None) -> np.ndarray:
    """Shape ``Phi`` of the target echo covariance.

    With a reflectivity shared by all illuminators the echoes add before the
    outer product; with independent reflectivities the outer products add.
    Either way every term lies along ``h_{q,rx}``, so ``Phi`` is rank one.
    """
    coherent = channels.shared_rcs if coherent is None else coherent
    e = echo_vectors(channels, q, solution.w)
    if coherent:
        s = e.sum(axis=0)
        return np.outer(s, s.conj())
    return np.einsum("jm,jn->mn", e, e.conj())


def hypothesis_model(solution: PrecoderSolution, channels: ChannelSet, q: int,
                     coherent: bool | None = None) -> HypothesisModel:
    return HypothesisModel(sensing_covariance(solution, channels, q, coherent),
                           interference_power(channels, solution.rho), channels.rcs.mean_power)


def llr(y, model: HypothesisModel):
    """Log-likelihood ratio, dense evaluation. ``y`` is ``(M,)`` or ``(N, M)``."""
    y = np.asarray(y)
    C = model.covariance
    _, logdet = np.linalg.slogdet(C)
    const = model.m * math.log(model.sigma2) - logdet
    K = np.eye(model.m) / model.sigma2 - np.linalg.inv(C)
    quad = np.einsum("...m,mn,...n->...", y.conj(), K, y).real
    return const + quad


def test_statistic(y, model: HypothesisModel, dense: bool = False):
    """``T(y) = y^H (sigma^-2 I - C^-1) y``.

    For rank-one ``Phi`` the matrix-inversion identity reduces this to
    ``kappa |u^H y|^2``; ``dense`` forces the explicit inverse.
    """
    y = np.asarray(y)
    if not dense and model.rank <= 1:
        if model.rank == 0:
            return np.zeros(y.shape[:-1])
        return model.kappa * np.abs(y @ model.direction.conj()) ** 2
    K = np.eye(model.m) / model.sigma2 - np.linalg.inv(model.covariance)
    return np.einsum("...m,mn,...n->...", y.conj(), K, y).real


def roc_analytic(model: HypothesisModel):
    """Exact rank-one ROC ``Pd = Pfa^(1 / (1 + snr))``.

    ``|u^H y|^2`` is exponential with mean ``sigma2`` under H0 and
    ``sigma2 (1 + snr)`` under H1, so a shared threshold maps one tail onto
    the other.
    """
    if model.rank > 1:
        raise NotApplicable("closed-form ROC needs a rank-one sensing covariance")
    snr = model.effective_snr if model.rank == 1 else 0.0

    def pd(pfa):
        return np.power(np.asarray(pfa, dtype=float), 1.0 / (1.0 + snr))

    pd.effective_snr = snr
    return pd


def snr_for_operating_point(pfa: float, pd: float) -> float:
    """Effective SNR implied by one rank-one ROC point."""
    return math.log(pfa) / math.log(pd) - 1.0


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    pfa: float
    pd: float
    pfa_ci: tuple
    pd_ci: tuple


def simulate_hypotheses(channels: ChannelSet, q: int, solution: PrecoderSolution, n_trials: int,
                        rng: np.random.Generator, chunk: int = 50_000):
    """Yield chunks ``(y0, y1)`` of received vectors under both hypotheses.

    Clutter plus noise is ``CN(0, sigma2 I)``, the law of the SSB clutter term
    summed with receiver noise. Under H1 the target echo ``s sum_j alpha_j
    H_{j,q} w_j`` is added. The direct link is excluded.
    """
    e = echo_vectors(channels, q, solution.w)
    sigma2 = interference_power(channels, solution.rho)
    n_aps, m = e.shape
    for start in range(0, n_trials, chunk):
        n = min(chunk, n_trials - start)
        y0 = crandn(rng, (n, m), sigma2)
        s = unit_symbols(rng, n)
        alpha = draw_rcs(channels.rcs, n_aps, rng, n, shared=channels.shared_rcs)
        y1 = crandn(rng, (n, m), sigma2) + s[:, None] * (alpha @ e)
        yield y0, y1


def roc_mc(channels: ChannelSet, solution: PrecoderSolution, q: int, n_trials: int, rng: np.random.Generator,
           thresholds=None, pfa_grid=None, alpha: float = 0.05, model: HypothesisModel | None = None) -> list:
    """Empirical ROC from simulated statistics, with Wilson intervals.

    Thresholds default to the analytic H0 quantiles of ``pfa_grid``.
    """
    model = model or hypothesis_model(solution, channels, q)
    t0, t1 = [], []
    for y0, y1 in simulate_hypotheses(channels, q, solution, n_trials, rng):
        t0.append(test_statistic(y0, model))
        t1.append(test_statistic(y1, model))
    t0, t1 = np.sort(np.concatenate(t0)), np.sort(np.concatenate(t1))
    if thresholds is None:
        pfa_grid = np.logspace(-4, 0, 41) if pfa_grid is None else np.asarray(pfa_grid)
        thresholds = threshold_for_pfa(model, pfa_grid)
    out = []
    n0, n1 = len(t0), len(t1)
    for th in np.atleast_1d(thresholds):
        k0 = n0 - int(np.searchsorted(t0, th, side="right"))
        k1 = n1 - int(np.searchsorted(t1, th, side="right"))
        ci0 = proportion_confint(k0, n0, alpha=alpha, method="wilson")
        ci1 = proportion_confint(k1, n1, alpha=alpha, method="wilson")
        out.append(RocPoint(float(th), k0 / n0, k1 / n1, tuple(map(float, ci0)), tuple(map(float, ci1))))
    return out


def threshold_for_pfa(model: HypothesisModel, pfa):
    """Rank-one threshold on ``T`` giving false-alarm probability ``pfa``."""
    if model.rank > 1:
        raise NotApplicable("closed-form threshold needs a rank-one sensing covariance")
    return -model.kappa * model.sigma2 * np.log(np.asarray(pfa, dtype=float))


class NeymanPearsonDetector(BaseEstimator):
    """Threshold test on ``T(y)`` at a target false-alarm rate.

    Parameters
    ----------
    model : HypothesisModel
        Known hypothesis pair.
    pfa : float
        Target false-alarm probability.
    calibration : {"analytic", "empirical"}
        ``analytic`` uses the rank-one closed-form threshold; ``empirical``
        takes the ``1 - pfa`` quantile of ``T`` over H0 samples given to
        :meth:`fit`.
    """

    def __init__(self, model: HypothesisModel | None = None, pfa: float = 1e-3, calibration: str = "analytic"):
        self.model = model
        self.pfa = pfa
        self.calibration = calibration

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ContractError("detector needs a hypothesis model")
        if not 0 < self.pfa < 1:
            raise ContractError("pfa must lie in (0, 1)")
        if self.calibration == "analytic":
            self.threshold_ = float(threshold_for_pfa(self.model, self.pfa))
        elif self.calibration == "empirical":
            if X is None:
                raise ContractError("empirical calibration needs H0 samples")
            self.threshold_ = float(np.quantile(test_statistic(np.asarray(X), self.model), 1.0 - self.pfa))
        else:
            raise ContractError(f"unknown calibration {self.calibration!r}")
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        return test_statistic(np.asarray(X), self.model) - self.threshold_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)
