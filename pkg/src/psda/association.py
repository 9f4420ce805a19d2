"""Association-hypothesis weighting and posterior assembly.

A positive semantic datum either describes no target (hypothesis 0,
false/clutter report) or exactly one of N candidate targets. The
hypothesis posterior gamma weights the per-hypothesis state posteriors
into each target's updated belief. Besides the full marginalization,
winner-take-all (greedy), fixed-weight (naive) and full-trust (no
association) baselines share the same fusion machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .gaussmix import Gaussian, GaussianMixture, mix, runnalls_compress
from .fusion import FusionConfig, FusionResult, fuse_gm
from .softmax import SoftmaxModel

__all__ = [
    "AssociationConfig",
    "AssociationResult",
    "ZeroEvidenceError",
    "gamma_multi",
    "psda_single",
    "psda_multi",
    "greedy_psda",
    "naive_da",
    "no_da",
]

Prior = Union[Gaussian, GaussianMixture]


class ZeroEvidenceError(RuntimeError):
    """Every hypothesis has zero probability (no clutter mass, no overlap)."""


@dataclass(frozen=True)
class AssociationConfig:
    """Hypothesis priors for one semantic datum.

    false_positive_rate is p(theta_0), the chance the report describes no
    target. dictionary_size is the label count H of the datum's
    observation type (the false report is uniform over it). Per-target
    hypothesis priors default to splitting 1 - p(theta_0) evenly.
    """

    false_positive_rate: float
    dictionary_size: Optional[int] = None
    hypothesis_priors: Optional[tuple[float, ...]] = None
    max_components: Optional[int] = None

    def __post_init__(self):
        fp = float(self.false_positive_rate)
        if not 0.0 <= fp <= 1.0:
            raise ValueError("false_positive_rate must be in [0, 1]")
        object.__setattr__(self, "false_positive_rate", fp)
        if self.hypothesis_priors is not None:
            hp = tuple(float(p) for p in self.hypothesis_priors)
            if any(p < 0 for p in hp):
                raise ValueError("hypothesis priors must be nonnegative")
            if abs(fp + sum(hp) - 1.0) > 1e-9:
                raise ValueError("p(theta_0) + sum p(theta_i) must equal 1")
            object.__setattr__(self, "hypothesis_priors", hp)

    def priors_for(self, n_candidates: int) -> np.ndarray:
        if self.hypothesis_priors is not None:
            if len(self.hypothesis_priors) != n_candidates:
                raise ValueError("hypothesis prior count mismatch")
            return np.asarray(self.hypothesis_priors, dtype=float)
        return np.full(n_candidates, (1.0 - self.false_positive_rate) / n_candidates)

    def h_for(self, model: SoftmaxModel) -> int:
        return self.dictionary_size if self.dictionary_size else model.n_labels


@dataclass(frozen=True)
class AssociationResult:
    """gamma over hypotheses 0..N plus per-candidate updated beliefs."""

    gamma: np.ndarray
    per_target_posteriors: tuple[GaussianMixture, ...]
    candidate_ids: tuple[str, ...]
    normalizers: tuple[float, ...] = ()

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        if abs(g.sum() - 1.0) > 1e-9:
            raise ValueError("association probabilities must sum to 1")

    @property
    def gamma0(self) -> float:
        return float(self.gamma[0])

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma.tolist(),
            "candidates": list(self.candidate_ids),
            "normalizers": list(self.normalizers),
        }


def _as_gm(prior: Prior) -> GaussianMixture:
    return GaussianMixture.single(prior) if isinstance(prior, Gaussian) else prior


def _cand_seed(rng_seed, i: int):
    return np.random.SeedSequence((int(rng_seed), i))


def _ids(candidate_ids, n) -> tuple[str, ...]:
    if candidate_ids is None:
        return tuple(str(i) for i in range(n))
    return tuple(candidate_ids)


def gamma_multi(
    priors: Sequence[Prior],
    normalizers: Sequence[float],
    cfg: AssociationConfig,
) -> np.ndarray:
    """Association probabilities from per-candidate evidence totals.

    normalizers[i] is the candidate's mixture-weighted normalizer
    sum_u w_u C_u. gamma_0 is proportional to p(theta_0)/H and gamma_i to
    p(theta_i) * normalizers[i]; the vector is normalized to sum to 1.
    """
    c = np.asarray(normalizers, dtype=float)
    if cfg.dictionary_size is None:
        raise ValueError("dictionary_size required to weight the clutter hypothesis")
    hyp = cfg.priors_for(c.size)
    raw = np.concatenate(
        ([cfg.false_positive_rate / cfg.dictionary_size], hyp * c)
    )
    den = raw.sum()
    if den <= 0.0:
        raise ZeroEvidenceError("gamma denominator is zero")
    return raw / den


def _conditionals(
    priors: Sequence[Prior],
    model: SoftmaxModel,
    label: str,
    fusion: FusionConfig,
    rng_seed,
) -> tuple[list[GaussianMixture], np.ndarray]:
    posts, cs = [], []
    for i, prior in enumerate(priors):
        res = fuse_gm(_as_gm(prior), model, label, fusion, _cand_seed(rng_seed, i))
        posts.append(_as_gm(res.posterior))
        cs.append(res.normalizer)
    return posts, np.asarray(cs)


def _maybe_compress(gm: GaussianMixture, cfg: AssociationConfig) -> GaussianMixture:
    if cfg.max_components is not None and gm.n_components > cfg.max_components:
        return runnalls_compress(gm, cfg.max_components)
    return gm


def psda_multi(
    priors: Sequence[Prior],
    model: SoftmaxModel,
    label: str,
    cfg: AssociationConfig,
    fusion: FusionConfig = FusionConfig(),
    rng_seed=0,
    candidate_ids: Optional[Sequence[str]] = None,
) -> AssociationResult:
    """Full marginalization over association hypotheses.

    Each candidate's belief becomes gamma_i * (its conditional posterior)
    plus (1 - gamma_i) * (its prior), the marginal of the joint
    hypothesis mixture for that target.
    """
    gms = [_as_gm(p) for p in priors]
    if not gms:
        raise ValueError("candidate set must be non-empty")
    cond, cs = _conditionals(gms, model, label, fusion, rng_seed)
    h_cfg = cfg if cfg.dictionary_size else _with_h(cfg, model.n_labels)
    gamma = gamma_multi(gms, cs, h_cfg)
    posts = []
    for i, prior in enumerate(gms):
        g_i = float(gamma[i + 1])
        posterior = mix([(g_i, cond[i]), (1.0 - g_i, prior)])
        posts.append(_maybe_compress(posterior, cfg))
    return AssociationResult(
        gamma=gamma,
        per_target_posteriors=tuple(posts),
        candidate_ids=_ids(candidate_ids, len(gms)),
        normalizers=tuple(float(c) for c in cs),
    )


def _with_h(cfg: AssociationConfig, h: int) -> AssociationConfig:
    return AssociationConfig(
        false_positive_rate=cfg.false_positive_rate,
        dictionary_size=h,
        hypothesis_priors=cfg.hypothesis_priors,
        max_components=cfg.max_components,
    )


def psda_single(
    prior: Prior,
    model: SoftmaxModel,
    label: str,
    cfg: AssociationConfig,
    fusion: FusionConfig = FusionConfig(),
    rng_seed=0,
    candidate_ids: Optional[Sequence[str]] = None,
) -> AssociationResult:
    """Single-candidate case: blend of prior and conditional posterior."""
    return psda_multi([prior], model, label, cfg, fusion, rng_seed, candidate_ids)


def greedy_psda(
    priors: Sequence[Prior],
    model: SoftmaxModel,
    label: str,
    cfg: AssociationConfig,
    fusion: FusionConfig = FusionConfig(),
    rng_seed=0,
    candidate_ids: Optional[Sequence[str]] = None,
) -> AssociationResult:
    """Winner-take-all: keep only the maximum-probability hypothesis pdf.

    Computes the same gamma vector as the full method, then commits: the
    winning target (if any) takes its conditional posterior outright and
    everyone else keeps their prior. Ties favor the clutter hypothesis,
    then the lowest index (argmax returns the first maximum).
    """
    gms = [_as_gm(p) for p in priors]
    cond, cs = _conditionals(gms, model, label, fusion, rng_seed)
    h_cfg = cfg if cfg.dictionary_size else _with_h(cfg, model.n_labels)
    gamma = gamma_multi(gms, cs, h_cfg)
    winner = int(np.argmax(gamma))
    posts = []
    for i, prior in enumerate(gms):
        chosen = cond[i] if winner == i + 1 else prior
        posts.append(_maybe_compress(chosen, cfg))
    return AssociationResult(
        gamma=gamma,
        per_target_posteriors=tuple(posts),
        candidate_ids=_ids(candidate_ids, len(gms)),
        normalizers=tuple(float(c) for c in cs),
    )


def naive_da(
    priors: Sequence[Prior],
    model: SoftmaxModel,
    label: str,
    cfg: AssociationConfig,
    fusion: FusionConfig = FusionConfig(),
    rng_seed=0,
    polarity: str = "positive",
) -> list[GaussianMixture]:
    """Fixed equal association weights instead of inferred ones.

    Positive data: each of the N candidates gets 1/N of the full update
    and keeps the rest of its prior. Negative data: full update.
    """
    gms = [_as_gm(p) for p in priors]
    cond, _ = _conditionals(gms, model, label, fusion, rng_seed)
    if polarity == "negative":
        return [_maybe_compress(c, cfg) for c in cond]
    n = len(gms)
    out = []
    for prior, c in zip(gms, cond):
        blended = mix([(1.0 / n, c), (1.0 - 1.0 / n, prior)])
        out.append(_maybe_compress(blended, cfg))
    return out


def no_da(
    priors: Sequence[Prior],
    model: SoftmaxModel,
    label: str,
    fusion: FusionConfig = FusionConfig(),
    rng_seed=0,
    cfg: Optional[AssociationConfig] = None,
) -> list[GaussianMixture]:
    """Trust the datum outright: full update of every candidate."""
    gms = [_as_gm(p) for p in priors]
    cond, _ = _conditionals(gms, model, label, fusion, rng_seed)
    if cfg is not None:
        return [_maybe_compress(c, cfg) for c in cond]
    return cond
