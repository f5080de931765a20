"""Gaussian mixture models (GMM_L0 / GMM_L1) fit by expectation-maximisation.

GMM_L0 uses diagonal covariances (off-diagonal terms fixed at zero) with a
variance floor. GMM_L1 keeps full covariances but adds the penalty
``-1/2 * tr(Psi Sigma_k^-1)`` per component, with ``Psi`` diagonal and
proportional to ``l1_weight``; its M-step is ``Sigma_k = S_k + Psi / n_k``, which
pulls every correlation toward zero. Both M-steps are exact, so the tracked
(penalised) log-likelihood never decreases; a decrease raises
LikelihoodDecreased.

The component count is chosen by BIC over ``1..max_components`` (never more
than ``n // 5``). A candidate count whose fit degenerates is dropped in favour
of the smaller counts. Raw scores are negative log-likelihoods shifted by the
minimum training value so they stay non-negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
import scipy.linalg
from loguru import logger
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from detectors.errors import DegenerateComponent, LikelihoodDecreased, TooFewRows
from utils.deadline import checkpoint

ROWS_PER_COMPONENT = 5
MONOTONE_RTOL = 1e-9
LOG_2PI = math.log(2.0 * math.pi)

DIAGONAL = "diag"
FULL = "full"


class _Degenerate(Exception):
    pass


def variant_covariance(variant: str) -> str:
    return DIAGONAL if variant == "L0" else FULL


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.cholesky(cov, lower=True)
    except scipy.linalg.LinAlgError:
        raise _Degenerate("covariance not positive definite") from None


def component_log_prob(x: np.ndarray, weights: np.ndarray, means: np.ndarray,
                       covariances: np.ndarray) -> np.ndarray:
    """(n, K) matrix of log(pi_k) + log N(x | mu_k, Sigma_k)."""
    n, d = x.shape
    out = np.empty((n, weights.shape[0]))
    for k in range(weights.shape[0]):
        chol = _cholesky(covariances[k])
        sol = scipy.linalg.solve_triangular(chol, (x - means[k]).T, lower=True)
        maha = np.sum(sol * sol, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        log_weight = math.log(weights[k]) if weights[k] > 0 else -np.inf
        out[:, k] = log_weight - 0.5 * (d * LOG_2PI + logdet + maha)
    return out


def mixture_nll(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    """Per-row negative log-likelihood under the mixture (no offset)."""
    log_prob = component_log_prob(x, np.asarray(params["weights"]), np.asarray(params["means"]),
                                   np.asarray(params["covariances"]))
    return -logsumexp(log_prob, axis=1)


@dataclass
class _Fit:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float
    history: list[float]
    iterations: int


def _penalty_matrix(x: np.ndarray, cov_type: str, hp: Mapping[str, Any]) -> np.ndarray:
    if cov_type == DIAGONAL:
        return np.zeros(x.shape[1])
    var = np.var(x, axis=0)
    return np.maximum(float(hp["l1_weight"]) * var, float(hp["reg_covar"]))


def _m_step(x: np.ndarray, resp: np.ndarray, cov_type: str, reg: float,
            psi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, d = x.shape
    nk = resp.sum(axis=0)
    if np.any(nk < 1.0):
        raise _Degenerate(f"component with effective size {nk.min():.3g}")
    weights = nk / n
    means = (resp.T @ x) / nk[:, None]
    covs = np.empty((nk.shape[0], d, d))
    for k in range(nk.shape[0]):
        diff = x - means[k]
        if cov_type == DIAGONAL:
            var = (resp[:, k] @ (diff * diff)) / nk[k]
            covs[k] = np.diag(np.maximum(var, reg))
        else:
            scatter = (resp[:, k, None] * diff).T @ diff / nk[k]
            covs[k] = scatter + np.diag(psi) / nk[k]
        _cholesky(covs[k])
    return weights, means, covs


def _penalty(covs: np.ndarray, psi: np.ndarray) -> float:
    if not np.any(psi):
        return 0.0
    total = 0.0
    for cov in covs:
        inv_diag = np.diag(scipy.linalg.inv(cov))
        total += float(np.sum(psi * inv_diag))
    return 0.5 * total


def _fit_k(x: np.ndarray, k: int, cov_type: str, hp: Mapping[str, Any]) -> _Fit:
    n = x.shape[0]
    reg = float(hp["reg_covar"])
    psi = _penalty_matrix(x, cov_type, hp)
    tol = float(hp["tol"])
    centers, _ = kmeans_plusplus(x, n_clusters=k, random_state=int(hp["seed"]))
    dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((n, k))
    resp[np.arange(n), np.argmin(dist, axis=1)] = 1.0
    weights, means, covs = _m_step(x, resp, cov_type, reg, psi)

    history: list[float] = []
    ll = -np.inf
    it = 0
    for it in range(1, int(hp["max_iter"]) + 1):
        checkpoint(f"mixture EM k={k} iteration {it}")
        log_prob = component_log_prob(x, weights, means, covs)
        row_ll = logsumexp(log_prob, axis=1)
        ll = float(row_ll.sum())
        objective = ll - _penalty(covs, psi)
        if history and objective < history[-1] - MONOTONE_RTOL * max(1.0, abs(history[-1])):
            raise LikelihoodDecreased(
                f"EM objective fell from {history[-1]:.12g} to {objective:.12g} at iteration {it}")
        history.append(objective)
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            break
        resp = np.exp(log_prob - row_ll[:, None])
        weights, means, covs = _m_step(x, resp, cov_type, reg, psi)
    return _Fit(weights, means, covs, ll, history, it)


def bic(fit: _Fit, n: int, d: int, cov_type: str) -> float:
    k = fit.weights.shape[0]
    cov_params = d if cov_type == DIAGONAL else d * (d + 1) // 2
    n_params = (k - 1) + k * d + k * cov_params
    return -2.0 * fit.log_likelihood + n_params * math.log(n)


def _sort_components(fit: _Fit) -> _Fit:
    order = np.lexsort(fit.means.T[::-1])
    return _Fit(fit.weights[order], fit.means[order], fit.covariances[order],
                fit.log_likelihood, fit.history, fit.iterations)


def select_mixture(x: np.ndarray, cov_type: str, hp: Mapping[str, Any]) -> tuple[_Fit, dict[int, float]]:
    n, d = x.shape
    if n < ROWS_PER_COMPONENT:
        raise TooFewRows(n, ROWS_PER_COMPONENT, "GMM")
    k_max = min(int(hp["max_components"]), n // ROWS_PER_COMPONENT)
    best: _Fit | None = None
    best_bic = math.inf
    scores: dict[int, float] = {}
    for k in range(1, k_max + 1):
        try:
            fit = _fit_k(x, k, cov_type, hp)
        except _Degenerate as e:
            logger.warning(f"mixture with {k} components degenerate ({e}), dropping")
            continue
        value = bic(fit, n, d, cov_type)
        scores[k] = value
        logger.debug(f"mixture k={k} bic={value:.4f} iterations={fit.iterations}")
        if value < best_bic:
            best, best_bic = fit, value
    if best is None:
        raise DegenerateComponent("every candidate component count degenerated")
    return _sort_components(best), scores


def fit_arrays_variant(x: np.ndarray, hp: Mapping[str, Any], variant: str) -> tuple[dict[str, Any], np.ndarray]:
    cov_type = variant_covariance(variant)
    fit, bics = select_mixture(x, cov_type, hp)
    params: dict[str, Any] = {
        "variant": variant,
        "covariance_type": cov_type,
        "weights": fit.weights,
        "means": fit.means,
        "covariances": fit.covariances,
        "n_components": int(fit.weights.shape[0]),
        "bic": {str(k): v for k, v in bics.items()},
        "objective_history": fit.history,
    }
    nll = mixture_nll(params, x)
    params["nll_offset"] = float(nll.min())
    return params, np.maximum(nll - params["nll_offset"], 0.0)


def fit_l0(x: np.ndarray, hp: Mapping[str, Any], lookback: int = 0) -> tuple[dict[str, Any], np.ndarray]:
    return fit_arrays_variant(x, hp, "L0")


def fit_l1(x: np.ndarray, hp: Mapping[str, Any], lookback: int = 0) -> tuple[dict[str, Any], np.ndarray]:
    return fit_arrays_variant(x, hp, "L1")


def score_arrays(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    return np.maximum(mixture_nll(params, x) - float(params["nll_offset"]), 0.0)


def responsibilities(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    log_prob = component_log_prob(x, np.asarray(params["weights"]), np.asarray(params["means"]),
                                  np.asarray(params["covariances"]))
    return np.exp(log_prob - logsumexp(log_prob, axis=1)[:, None])


def heldout_log_likelihood(x: np.ndarray, variant: str, hp: Mapping[str, Any], folds: int) -> float:
    """Mean held-out log-likelihood over contiguous folds, for picking L0 vs L1."""
    n = x.shape[0]
    bounds = np.linspace(0, n, folds + 1).astype(int)
    total = 0.0
    for i in range(folds):
        test = np.arange(bounds[i], bounds[i + 1])
        train = np.setdiff1d(np.arange(n), test)
        params, _ = fit_arrays_variant(x[train], hp, variant)
        total += float(-mixture_nll(params, x[test]).sum())
    return total / n
