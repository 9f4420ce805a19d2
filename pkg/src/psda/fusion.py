"""Fusing softmax semantic likelihoods into Gaussian-mixture beliefs.

The exact posterior p(x)p(D|x)/C has no closed form, so three
approximations are provided:

* vb_update: variational Gaussian via a quadratic upper bound on the
  softmax log-normalizer; returns a guaranteed underestimate of C.
* vbis: importance sampling seeded at the variational mean, correcting
  both moments and the normalizer estimate.
* lwis: likelihood-weighted sampling from the prior itself, appropriate
  when the posterior stays close to the prior (e.g. persistent negative
  field-of-view reports).

fuse_gm applies these per mixture component and routes between VBIS and
LWIS based on how surprising the datum is under the prior.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .gaussmix import COV_JITTER, Gaussian, GaussianMixture, _chol_with_jitter
from .softmax import SoftmaxModel

__all__ = [
    "VariationalState",
    "FusionConfig",
    "FusionResult",
    "DegenerateProposalError",
    "AllZeroLikelihoodError",
    "lambda_xi",
    "bouchard_bound",
    "vb_update",
    "vbis",
    "lwis",
    "fuse_gm",
]

_LAMBDA_TAYLOR_CUTOFF = 1e-3


class DegenerateProposalError(RuntimeError):
    """Importance-sampling effective sample size collapsed."""


class AllZeroLikelihoodError(RuntimeError):
    """Every sample of every component had zero likelihood."""


def lambda_xi(xi):
    """Curvature coefficient of the log-sum-exp bound; in (0, 1/8].

    tanh(xi/2)/(4 xi) with a series branch near zero to avoid 0/0.
    """
    xi = np.abs(np.asarray(xi, dtype=float))
    small = xi < _LAMBDA_TAYLOR_CUTOFF
    safe = np.where(small, 1.0, xi)
    out = np.where(small, 0.125 - xi**2 / 96.0, np.tanh(safe / 2.0) / (4.0 * safe))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class VariationalState:
    """Free parameters (alpha, xi) of the log-sum-exp quadratic bound."""

    alpha: float
    xi: np.ndarray
    lambda_xi: np.ndarray = None  # derived from xi

    def __post_init__(self):
        xi = np.abs(np.atleast_1d(np.asarray(self.xi, dtype=float)))
        xi.setflags(write=False)
        lam = np.atleast_1d(lambda_xi(xi))
        lam.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "lambda_xi", lam)
        object.__setattr__(self, "alpha", float(self.alpha))


def _softplus(z):
    z = np.asarray(z, dtype=float)
    return np.where(z > 30.0, z, np.log1p(np.exp(np.minimum(z, 30.0))))


def bouchard_bound(y, vs: VariationalState) -> float:
    """Quadratic upper bound on log sum_h exp(y_h) at (alpha, xi)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    a, xi, lam = vs.alpha, vs.xi, vs.lambda_xi
    terms = (y - a - xi) / 2.0 + lam * ((y - a) ** 2 - xi**2) + _softplus(xi)
    return float(a + terms.sum())


@dataclass(frozen=True)
class FusionConfig:
    """Knobs shared by every fusion path."""

    n_samples: int = 5000
    surprise_threshold: float = 0.1
    presample_count: int = 500
    max_vb_iters: int = 100
    vb_tol: float = 1e-6
    min_ess: float = 10.0


@dataclass(frozen=True)
class FusionResult:
    posterior: Union[Gaussian, GaussianMixture]
    normalizer: float
    method: str  # VB | VBIS | LWIS
    per_component_normalizers: Optional[np.ndarray] = None
    converged: bool = True


# ---------------------------------------------------------------------------
# Variational update, vectorized over a stack of Gaussian priors.
# ---------------------------------------------------------------------------


def _vb_stack(
    mu0: np.ndarray,
    cov0: np.ndarray,
    model: SoftmaxModel,
    class_idx: int,
    max_iters: int,
    tol: float,
):
    """Variational Gaussian update of M priors against one softmax class.

    Returns (mu (M,n), cov (M,n,n), log_c (M,), converged bool).
    """
    w = model.weights  # (Hc, n)
    b = model.biases  # (Hc,)
    m, n = mu0.shape
    prec0 = np.linalg.inv(cov0)
    prec0_mu0 = np.einsum("mij,mj->mi", prec0, mu0)
    _, logdet0 = np.linalg.slogdet(cov0)
    quad0 = np.einsum("mi,mi->m", mu0, prec0_mu0)

    def moments_y(mu, cov):
        ey = mu @ w.T + b  # (M, Hc)
        vy = np.einsum("hi,mij,hj->mh", w, cov, w)
        return ey, np.maximum(vy, 0.0)

    def refresh(ey, vy, hc):
        lam = np.full_like(ey, 0.125)
        alpha = None
        # two passes: alpha with current lambda, then xi, then final lambda
        for _ in range(2):
            alpha = ((hc - 2.0) / 4.0 + (lam * ey).sum(axis=1)) / lam.sum(axis=1)
            xi = np.sqrt((ey - alpha[:, None]) ** 2 + vy)
            lam = lambda_xi(xi)
        return alpha, xi, lam

    def posterior_update(alpha, xi, lam):
        g2 = 2.0 * np.einsum("mh,hi,hj->mij", lam, w, w)
        prec = prec0 + g2
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        coeff = 0.5 + 2.0 * lam * (b[None, :] - alpha[:, None])  # (M, Hc)
        g1 = w[class_idx][None, :] - coeff @ w  # (M, n)
        h = prec0_mu0 + g1
        mu = np.einsum("mij,mj->mi", cov, h)
        ba = b[None, :] - alpha[:, None]
        g0 = (
            b[class_idx]
            - alpha
            - ((ba - xi) / 2.0 + lam * (ba**2 - xi**2) + _softplus(xi)).sum(axis=1)
        )
        _, logdet = np.linalg.slogdet(cov)
        quad = np.einsum("mi,mi->m", mu, h)
        log_c = g0 + 0.5 * (quad - quad0) + 0.5 * (logdet - logdet0)
        return mu, cov, log_c

    hc = w.shape[0]
    ey, vy = moments_y(mu0, cov0)
    alpha, xi, lam = refresh(ey, vy, hc)
    mu, cov, log_c = posterior_update(alpha, xi, lam)
    converged = False
    for _ in range(max_iters - 1):
        ey, vy = moments_y(mu, cov)
        alpha, xi, lam = refresh(ey, vy, hc)
        mu, cov, new_log_c = posterior_update(alpha, xi, lam)
        if np.all(np.abs(new_log_c - log_c) < tol):
            log_c = new_log_c
            converged = True
            break
        log_c = new_log_c
    return mu, cov, log_c, converged


def _moment_match(weights: np.ndarray, mus: np.ndarray, covs: np.ndarray):
    w = weights / weights.sum()
    mean = w @ mus
    diff = mus - mean
    cov = np.einsum("m,mij->ij", w, covs) + np.einsum("m,mi,mj->ij", w, diff, diff)
    return mean, 0.5 * (cov + cov.T)


def _vb_label(
    prior_means: np.ndarray,
    prior_covs: np.ndarray,
    model: SoftmaxModel,
    label: str,
    cfg: FusionConfig,
):
    """VB update of stacked priors against a (possibly grouped) label.

    Grouped labels run one VB pass per subclass; each component's result
    is the subclass mixture moment-matched back to a single Gaussian with
    summed normalizer, which stays an underestimate of the true C.
    """
    idxs = model.subclass_map[model.label_index(label)]
    mus, covs, cs = [], [], []
    converged = True
    for j in idxs:
        mu, cov, log_c, conv = _vb_stack(
            prior_means, prior_covs, model, j, cfg.max_vb_iters, cfg.vb_tol
        )
        mus.append(mu)
        covs.append(cov)
        cs.append(np.exp(log_c))
        converged &= conv
    if len(idxs) == 1:
        return mus[0], covs[0], cs[0], converged
    cs = np.stack(cs, axis=1)  # (M, J)
    mus = np.stack(mus, axis=1)  # (M, J, n)
    covs = np.stack(covs, axis=1)
    total = cs.sum(axis=1)
    out_mu = np.empty_like(prior_means)
    out_cov = np.empty_like(prior_covs)
    for m in range(prior_means.shape[0]):
        out_mu[m], out_cov[m] = _moment_match(cs[m], mus[m], covs[m])
    return out_mu, out_cov, total, converged


def vb_update(prior: Gaussian, model: SoftmaxModel, label: str, cfg: FusionConfig = FusionConfig()) -> FusionResult:
    """Variational Gaussian posterior and normalizer underestimate."""
    mu, cov, c, converged = _vb_label(
        prior.mean[None, :], prior.cov[None, :, :], model, label, cfg
    )
    return FusionResult(
        posterior=Gaussian(mu[0], cov[0]),
        normalizer=float(c[0]),
        method="VB",
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Importance sampling refinements.
# ---------------------------------------------------------------------------


def _weighted_moments(xs: np.ndarray, w: np.ndarray, fallback_cov: np.ndarray):
    """Normalized-weight sample mean/covariance with PD fallback."""
    wn = w / w.sum()
    mean = wn @ xs
    diff = xs - mean
    cov = np.einsum("s,si,sj->ij", wn, diff, diff)
    cov = 0.5 * (cov + cov.T)
    try:
        _chol_with_jitter(cov)
    except Exception:
        cov = fallback_cov
    return mean, cov


def _log_gauss(xs: np.ndarray, mean: np.ndarray, chol: np.ndarray, log_det: float):
    diff = xs - mean
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(sol**2, axis=0)
    n = mean.size
    return -0.5 * (maha + n * np.log(2 * np.pi) + log_det)


def vbis(
    prior: Gaussian,
    model: SoftmaxModel,
    label: str,
    n_samples: int = 5000,
    rng_seed=0,
    cfg: FusionConfig = FusionConfig(),
) -> FusionResult:
    """Importance-corrected posterior using the VB mean as proposal center.

    Proposal q = N(mu_VB, Sigma_prior); weights p(x)p(D|x)/q(x). The
    normalizer estimate is the raw mean weight.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    vb = vb_update(prior, model, label, cfg)
    rng = np.random.default_rng(rng_seed)
    chol = prior.chol
    xs = vb.posterior.mean + (chol @ rng.standard_normal((n_samples, prior.dim)).T).T
    log_num = _log_gauss(xs, prior.mean, chol, prior.log_det)
    log_den = _log_gauss(xs, vb.posterior.mean, chol, prior.log_det)
    lik = model.label_prob(label, xs)
    w = np.exp(log_num - log_den) * lik
    total = w.sum()
    ess = 0.0 if total <= 0.0 else total**2 / np.sum(w**2)
    if ess < cfg.min_ess:
        raise DegenerateProposalError(f"effective sample size {ess:.2f}")
    mean, cov = _weighted_moments(xs, w, prior.cov)
    return FusionResult(
        posterior=Gaussian(mean, cov),
        normalizer=float(total / n_samples),
        method="VBIS",
        converged=vb.converged,
    )


def _gm_of(prior: Union[Gaussian, GaussianMixture]) -> GaussianMixture:
    return GaussianMixture.single(prior) if isinstance(prior, Gaussian) else prior


def _weighted_moments_batch(
    xs: np.ndarray, w: np.ndarray, fallback_mu: np.ndarray, fallback_cov: np.ndarray
):
    """Batched normalized-weight moments (M components x S samples)."""
    totals = w.sum(axis=1)
    ok = totals > 0.0
    wn = w / np.where(ok, totals, 1.0)[:, None]
    mus = np.einsum("ms,msi->mi", wn, xs)
    diff = xs - mus[:, None, :]
    covs = np.einsum("ms,msi,msj->mij", wn, diff, diff)
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    mus[~ok] = fallback_mu[~ok]
    covs[~ok] = fallback_cov[~ok]
    jitter = COV_JITTER * np.eye(covs.shape[-1])
    try:
        np.linalg.cholesky(covs + jitter)
    except np.linalg.LinAlgError:
        for u in np.flatnonzero(ok):
            try:
                np.linalg.cholesky(covs[u] + jitter)
            except np.linalg.LinAlgError:
                covs[u] = fallback_cov[u]
    return mus, covs


def _lwis_components(
    gm: GaussianMixture, model: SoftmaxModel, label: str, n_per: int, rng
):
    """Per-component likelihood-weighted moments and mean raw weights."""
    m, n = gm.means.shape
    eps = rng.standard_normal((m, n_per, n))
    xs = gm.means[:, None, :] + np.einsum("mij,msj->msi", gm.chols, eps)
    lik = model.label_prob(label, xs.reshape(-1, n)).reshape(m, n_per)
    c = lik.mean(axis=1)
    mus, covs = _weighted_moments_batch(xs, lik, gm.means, gm.covs)
    return mus, covs, c


def lwis(
    prior: Union[Gaussian, GaussianMixture],
    model: SoftmaxModel,
    label: str,
    n_samples: int = 5000,
    rng_seed=0,
) -> FusionResult:
    """Likelihood-weighted update sampling from the prior itself.

    Per component: weights are the label likelihood at prior samples, the
    mean raw weight is the component normalizer, and mixture weights are
    reweighted by the normalizers. Components with no support drop to
    weight zero; the update fails only if every component does.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100 per component")
    gm = _gm_of(prior)
    rng = np.random.default_rng(rng_seed)
    mus, covs, c = _lwis_components(gm, model, label, n_samples, rng)
    new_w = gm.weights * c
    total = new_w.sum()
    if total <= 0.0:
        raise AllZeroLikelihoodError("label likelihood vanished on every component")
    keep = new_w > 0.0
    posterior = GaussianMixture(new_w[keep] / total, mus[keep], covs[keep])
    return FusionResult(
        posterior=posterior,
        normalizer=float(total),
        method="LWIS",
        per_component_normalizers=c,
    )


def fuse_gm(
    prior: Union[Gaussian, GaussianMixture],
    model: SoftmaxModel,
    label: str,
    cfg: FusionConfig = FusionConfig(),
    rng_seed=0,
) -> FusionResult:
    """Mixture-prior semantic update with VBIS/LWIS routing.

    Routes to VBIS when a quick prior-sample estimate of p(D) falls below
    the surprise threshold (posterior expected to move far from the
    prior), otherwise LWIS. Per component u the conditional posterior and
    normalizer C_u are computed; posterior mixture weights are
    w_u C_u / sum_v w_v C_v and the total normalizer is sum_u w_u C_u.
    """
    gm = _gm_of(prior)
    rng = np.random.default_rng(rng_seed)
    pre_idx = rng.choice(gm.n_components, size=cfg.presample_count, p=gm.weights)
    pre_eps = rng.standard_normal((cfg.presample_count, gm.dim))
    pre_xs = gm.means[pre_idx] + np.einsum(
        "kij,kj->ki", gm.chols[pre_idx], pre_eps
    )
    expected_lik = float(np.mean(model.label_prob(label, pre_xs)))

    if expected_lik >= cfg.surprise_threshold:
        res = lwis(gm, model, label, cfg.n_samples, rng)
        return res

    # surprising datum: VB proposal + importance correction per component
    vb_mu, _, _, converged = _vb_label(gm.means, gm.covs, model, label, cfg)
    m, n = gm.means.shape
    eps = rng.standard_normal((m, cfg.n_samples, n))
    xs = vb_mu[:, None, :] + np.einsum("mij,msj->msi", gm.chols, eps)
    flat = xs.reshape(-1, n)
    lik = model.label_prob(label, flat).reshape(m, cfg.n_samples)
    diff_num = xs - gm.means[:, None, :]
    diff_den = xs - vb_mu[:, None, :]
    maha_num = np.einsum("msi,mij,msj->ms", diff_num, gm.precisions, diff_num)
    maha_den = np.einsum("msi,mij,msj->ms", diff_den, gm.precisions, diff_den)
    log_ratio = -0.5 * (maha_num - maha_den)
    w = np.exp(log_ratio) * lik  # (M, S)
    c = w.mean(axis=1)
    totals = w.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ess = np.where(totals > 0.0, totals**2 / np.sum(w**2, axis=1), 0.0)
    w = np.where(ess[:, None] >= cfg.min_ess, w, 0.0)  # degenerate: keep prior
    mus, covs = _weighted_moments_batch(xs, w, gm.means, gm.covs)
    new_w = gm.weights * c
    total = new_w.sum()
    if total <= 0.0:
        raise AllZeroLikelihoodError("label likelihood vanished on every component")
    keep = new_w > 0.0
    posterior = GaussianMixture(new_w[keep] / total, mus[keep], covs[keep])
    return FusionResult(
        posterior=posterior,
        normalizer=float(total),
        method="VBIS",
        per_component_normalizers=c,
        converged=converged,
    )
