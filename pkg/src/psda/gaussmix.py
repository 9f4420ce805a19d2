"""Gaussian and Gaussian-mixture beliefs over 2-D target positions.

Provides density evaluation, seeded sampling, moment matching, MAP
extraction, and Runnalls' moment-preserving mixture reduction. All types
are frozen; derived factorizations are cached on first use, so instances
are safe to share between missions running in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

COV_JITTER = 1e-9  # added to the diagonal when a Cholesky factorization fails

__all__ = [
    "Gaussian",
    "GaussianMixture",
    "NotPositiveDefiniteError",
    "gm_pdf",
    "gm_logpdf",
    "gm_sample",
    "gm_moments",
    "gm_map",
    "runnalls_compress",
    "merge_cost",
    "mix",
    "gm_to_dict",
    "gm_from_dict",
    "gm_to_json",
    "gm_from_json",
]


class NotPositiveDefiniteError(ValueError):
    """Covariance is not positive-definite even after jitter."""


def _chol_with_jitter(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        n = cov.shape[-1]
        return np.linalg.cholesky(cov + COV_JITTER * np.eye(n))
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError(
            f"covariance not positive-definite: {cov!r}"
        ) from err


@dataclass(frozen=True)
class Gaussian:
    """Multivariate normal with symmetric positive-definite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match dim {mean.size}")
        if not np.allclose(cov, cov.T, atol=1e-8):
            raise ValueError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        self.chol  # fail fast on non-PD input

    @property
    def dim(self) -> int:
        return self.mean.size

    @cached_property
    def chol(self) -> np.ndarray:
        return _chol_with_jitter(self.cov)

    @cached_property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    @cached_property
    def precision(self) -> np.ndarray:
        inv_l = np.linalg.inv(self.chol)
        return inv_l.T @ inv_l

    def logpdf(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        pts = np.atleast_2d(x)
        diff = pts - self.mean
        sol = np.linalg.solve(self.chol, diff.T)
        maha = np.sum(sol**2, axis=0)
        out = -0.5 * (maha + self.dim * np.log(2.0 * np.pi) + self.log_det)
        return float(out[0]) if scalar else out

    def pdf(self, x: np.ndarray) -> np.ndarray | float:
        return np.exp(self.logpdf(x))


@dataclass(frozen=True)
class GaussianMixture:
    """Convex combination of Gaussians, stored as stacked arrays.

    weights: (M,), nonnegative, summing to 1 within 1e-9 (renormalized
    exactly on construction). means: (M, n). covs: (M, n, n).
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None, :, :]
        m, n = means.shape
        if w.shape != (m,):
            raise ValueError(f"{w.size} weights for {m} components")
        if covs.shape != (m, n, n):
            raise ValueError(f"covs shape {covs.shape}, expected {(m, n, n)}")
        if m < 1:
            raise ValueError("mixture needs at least one component")
        if np.any(w < -1e-12):
            raise ValueError("negative mixture weight")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, expected 1 within 1e-9")
        w = np.clip(w, 0.0, None) / np.clip(w, 0.0, None).sum()
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        for arr in (w, means, covs):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        self.chols  # validate PD up front

    @classmethod
    def from_components(
        cls, components: Sequence[Gaussian], weights: Iterable[float]
    ) -> "GaussianMixture":
        comps = list(components)
        return cls(
            weights=np.asarray(list(weights), dtype=float),
            means=np.stack([g.mean for g in comps]),
            covs=np.stack([g.cov for g in comps]),
        )

    @classmethod
    def single(cls, g: Gaussian) -> "GaussianMixture":
        return cls.from_components([g], [1.0])

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def chols(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.covs)
        except np.linalg.LinAlgError:
            return np.stack([_chol_with_jitter(c) for c in self.covs])

    @cached_property
    def log_dets(self) -> np.ndarray:
        diags = np.diagonal(self.chols, axis1=1, axis2=2)
        return 2.0 * np.sum(np.log(diags), axis=1)

    @cached_property
    def precisions(self) -> np.ndarray:
        inv_l = np.linalg.inv(self.chols)
        return np.einsum("mki,mkj->mij", inv_l, inv_l)

    @cached_property
    def components(self) -> tuple[Gaussian, ...]:
        return tuple(
            Gaussian(self.means[i], self.covs[i]) for i in range(self.n_components)
        )

    def component_logpdfs(self, x: np.ndarray) -> np.ndarray:
        """Per-component log N(x; mu_u, Sigma_u), shape (P, M)."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        diff = pts[:, None, :] - self.means[None, :, :]  # (P, M, n)
        maha = np.einsum("pmi,mij,pmj->pm", diff, self.precisions, diff)
        return -0.5 * (maha + self.dim * np.log(2.0 * np.pi) + self.log_dets[None, :])


def gm_logpdf(gm: GaussianMixture, x: np.ndarray) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    if x.shape[-1] != gm.dim:
        raise ValueError(f"point dim {x.shape[-1]} vs mixture dim {gm.dim}")
    comp = gm.component_logpdfs(x)
    with np.errstate(divide="ignore"):
        logw = np.log(gm.weights)
    shifted = comp + logw[None, :]
    peak = shifted.max(axis=1, keepdims=True)
    out = peak[:, 0] + np.log(np.sum(np.exp(shifted - peak), axis=1))
    return float(out[0]) if scalar else out


def gm_pdf(gm: GaussianMixture, x: np.ndarray) -> np.ndarray | float:
    """Mixture density sum_u w_u N(x; mu_u, Sigma_u)."""
    return np.exp(gm_logpdf(gm, x))


def gm_sample(gm: GaussianMixture, count: int, rng_seed) -> np.ndarray:
    """Draw `count` points; identical seed gives an identical sequence."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(gm.n_components, size=count, p=gm.weights)
    eps = rng.standard_normal((count, gm.dim))
    return gm.means[idx] + np.einsum("kij,kj->ki", gm.chols[idx], eps)


def gm_moments(gm: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    """Moment-matched (mean, covariance) of the whole mixture."""
    w = gm.weights
    mean = w @ gm.means
    diff = gm.means - mean
    spread = np.einsum("m,mi,mj->ij", w, diff, diff)
    cov = np.einsum("m,mij->ij", w, gm.covs) + spread
    return mean, 0.5 * (cov + cov.T)


def _merged_moments(w1, m1, c1, w2, m2, c2):
    wt = w1 + w2
    a = w1 / wt
    b = w2 / wt
    mean = a * m1 + b * m2
    d = m1 - m2
    cov = a * c1 + b * c2 + a * b * np.outer(d, d)
    return wt, mean, cov


def merge_cost(w1, m1, c1, w2, m2, c2) -> float:
    """Runnalls' upper bound on the KL increase from merging two components.

    0.5 * [(w1+w2) log|Sigma_m| - w1 log|Sigma_1| - w2 log|Sigma_2|] with
    Sigma_m the moment-preserving merge; symmetric, zero for identical
    components.
    """
    _, _, cm = _merged_moments(w1, m1, c1, w2, m2, c2)
    ld = lambda c: np.linalg.slogdet(c)[1]
    return 0.5 * ((w1 + w2) * ld(cm) - w1 * ld(c1) - w2 * ld(c2))


def _logdet_batch(covs: np.ndarray) -> np.ndarray:
    """log|C| for (..., n, n) stacks; closed form for the common n <= 2."""
    n = covs.shape[-1]
    if n == 1:
        return np.log(covs[..., 0, 0])
    if n == 2:
        det = covs[..., 0, 0] * covs[..., 1, 1] - covs[..., 0, 1] * covs[..., 1, 0]
        return np.log(det)
    return np.linalg.slogdet(covs)[1]


def runnalls_compress(gm: GaussianMixture, target_count: int) -> GaussianMixture:
    """Reduce to `target_count` components by greedy least-cost merging.

    Each step merges the pair minimizing `merge_cost` (moment-preserving),
    so the overall mixture mean and covariance are unchanged. Pair search
    is exhaustive over a cached cost matrix; only the merged component's
    row is recomputed per step.
    """
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    m = gm.n_components
    if m <= target_count:
        return gm
    w = gm.weights.copy()
    means = gm.means.copy()
    covs = gm.covs.copy()
    logdets = _logdet_batch(covs)

    def costs_against(i: int) -> np.ndarray:
        wt = w[i] + w
        a = (w[i] / wt)[:, None, None]
        b = (w / wt)[:, None, None]
        d = means[i] - means
        cm = a * covs[i] + b * covs + (a * b) * np.einsum("mi,mj->mij", d, d)
        return 0.5 * (wt * _logdet_batch(cm) - w[i] * logdets[i] - w * logdets)

    cost = np.empty((m, m))
    for i in range(m):
        cost[i] = costs_against(i)
    alive = np.ones(m, dtype=bool)
    np.fill_diagonal(cost, np.inf)
    n_alive = m
    while n_alive > target_count:
        flat = int(np.argmin(cost))
        i, j = divmod(flat, m)
        w[i], means[i], covs[i] = _merged_moments(
            w[i], means[i], covs[i], w[j], means[j], covs[j]
        )
        logdets[i] = _logdet_batch(covs[i][None])[0]
        alive[j] = False
        cost[j, :] = np.inf
        cost[:, j] = np.inf
        row = costs_against(i)
        row[~alive] = np.inf
        row[i] = np.inf
        cost[i, :] = row
        cost[:, i] = row
        n_alive -= 1
    keep = np.flatnonzero(alive)
    return GaussianMixture(weights=w[keep], means=means[keep], covs=covs[keep])


def _log_density_and_grad(gm: GaussianMixture, x: np.ndarray):
    diff = x[None, :] - gm.means  # (M, n)
    sol = np.einsum("mij,mj->mi", gm.precisions, diff)  # Sigma^-1 (x - mu)
    maha = np.einsum("mi,mi->m", diff, sol)
    comp = -0.5 * (maha + gm.dim * np.log(2.0 * np.pi) + gm.log_dets)
    with np.errstate(divide="ignore"):
        terms = comp + np.log(gm.weights)
    peak = terms.max()
    unnorm = np.exp(terms - peak)
    total = unnorm.sum()
    logp = peak + np.log(total)
    grad = -((unnorm / total)[:, None] * sol).sum(axis=0)
    return logp, grad


def gm_map(gm: GaussianMixture, n_ascent: int = 50) -> np.ndarray:
    """Highest-density point: best component mean refined by gradient ascent.

    At most `n_ascent` ascent steps on the log-density with backtracking
    halving; the result is never worse than every component mean.
    """
    mix_at_means = gm_logpdf(gm, gm.means)
    best = int(np.argmax(mix_at_means))
    x = gm.means[best].copy()
    logp, grad = _log_density_and_grad(gm, x)
    # scale the first trial step to the smallest component length scale
    step = float(np.sqrt(np.min(np.diagonal(gm.covs, axis1=1, axis2=2))))
    for _ in range(n_ascent):
        gnorm = np.linalg.norm(grad)
        if gnorm < 1e-12:
            break
        trial_step = step
        moved = False
        while trial_step > 1e-12:
            cand = x + trial_step * grad / gnorm
            cand_logp, cand_grad = _log_density_and_grad(gm, cand)
            if cand_logp > logp:
                improved = cand_logp - logp
                x, logp, grad = cand, cand_logp, cand_grad
                step = trial_step
                moved = True
                break
            trial_step *= 0.5
        if not moved or improved < 1e-12:
            break
    return x


def mix(parts: Sequence[tuple[float, GaussianMixture]]) -> GaussianMixture:
    """Combine weighted mixtures into one; zero-weight parts are dropped."""
    weights, means, covs = [], [], []
    for coeff, gm in parts:
        if coeff <= 0.0:
            continue
        weights.append(coeff * gm.weights)
        means.append(gm.means)
        covs.append(gm.covs)
    if not weights:
        raise ValueError("all mixture parts have zero weight")
    w = np.concatenate(weights)
    return GaussianMixture(
        weights=w / w.sum(), means=np.vstack(means), covs=np.concatenate(covs)
    )


def gm_to_dict(gm: GaussianMixture) -> dict:
    return {
        "weights": gm.weights.tolist(),
        "means": gm.means.tolist(),
        "covariances": gm.covs.tolist(),
    }


def gm_from_dict(d: dict) -> GaussianMixture:
    return GaussianMixture(
        weights=np.asarray(d["weights"], dtype=float),
        means=np.asarray(d["means"], dtype=float),
        covs=np.asarray(d["covariances"], dtype=float),
    )


def gm_to_json(gm: GaussianMixture) -> str:
    return json.dumps(gm_to_dict(gm))


def gm_from_json(text: str) -> GaussianMixture:
    return gm_from_dict(json.loads(text))
