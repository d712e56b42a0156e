"""Latent Dirichlet Allocation trained by batch variational Bayes.

Training follows the classic variational EM: per-document coordinate
ascent on the document-topic Dirichlet parameters and word-topic
responsibilities (E-step), then a Dirichlet update of the topic-word
parameters (M-step). The ELBO is tracked per pass and is non-decreasing.

Inference for new documents runs the same coordinate ascent with the
topic-word distributions fixed, starting from a fixed uniform
initialization so results are deterministic without a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.special import gammaln, psi

from .textpipe import BagOfWords, Vocabulary

_FORMAT_VERSION = 1


class LdaError(ValueError):
    pass


@dataclass(frozen=True)
class LdaConfig:
    num_topics: int
    alpha: float | None = None          # defaults to 1/num_topics
    beta: float = 0.01
    em_passes: int = 50
    doc_estep_iters: int = 100
    seed: int = 0
    convergence_tol: float = 1e-4

    def __post_init__(self):
        if self.num_topics < 1:
            raise LdaError("num_topics must be >= 1")
        if (self.alpha is not None and self.alpha <= 0) or self.beta <= 0:
            raise LdaError("alpha and beta must be positive")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.alpha is not None else 1.0 / self.num_topics


@dataclass
class LdaModel:
    phi: np.ndarray                     # T x |V|, row-stochastic
    config: LdaConfig
    vocab: Vocabulary
    elbo_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        rows = self.phi.sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-9):
            raise LdaError("phi rows must sum to 1")
        if (self.phi < 0).any():
            raise LdaError("phi must be non-negative")

    @property
    def num_topics(self) -> int:
        return self.phi.shape[0]

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            version=np.array([_FORMAT_VERSION]),
            phi=self.phi,
            vocab=np.array(self.vocab.words),
            config=np.array([json.dumps(asdict(self.config))]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "LdaModel":
        data = np.load(path, allow_pickle=False)
        version = int(data["version"][0])
        if version != _FORMAT_VERSION:
            raise LdaError(f"unsupported model format version {version}")
        config = LdaConfig(**json.loads(str(data["config"][0])))
        vocab = Vocabulary(words=tuple(str(w) for w in data["vocab"]))
        return cls(phi=data["phi"], config=config, vocab=vocab)


@dataclass
class TopicMixture:
    theta: np.ndarray
    empty: bool = False


def _dirichlet_elog(params: np.ndarray) -> np.ndarray:
    if params.ndim == 1:
        return psi(params) - psi(params.sum())
    return psi(params) - psi(params.sum(axis=1))[:, None]


def _counts_matrix(bows: list[BagOfWords], vocab_size: int) -> np.ndarray:
    counts = np.zeros((len(bows), vocab_size))
    for i, bow in enumerate(bows):
        for dim, c in bow.counts.items():
            counts[i, dim] = c
    return counts


def _estep(
    counts: np.ndarray,
    exp_elog_beta: np.ndarray,
    alpha: float,
    max_iters: int,
    tol: float,
    gamma: np.ndarray | None = None,
) -> np.ndarray:
    """Batched coordinate ascent on the per-document Dirichlet parameters.

    ``exp_elog_beta`` is either exp(E[log beta]) during training or the
    point topic-word matrix at inference time.
    """
    n_docs, _ = counts.shape
    n_topics = exp_elog_beta.shape[0]
    totals = counts.sum(axis=1)
    if gamma is None:
        gamma = alpha + np.tile(totals[:, None] / n_topics, (1, n_topics))
    for _ in range(max_iters):
        last = gamma
        exp_elog_theta = np.exp(_dirichlet_elog(gamma))
        phinorm = exp_elog_theta @ exp_elog_beta + 1e-100
        gamma = alpha + exp_elog_theta * ((counts / phinorm) @ exp_elog_beta.T)
        if np.abs(gamma - last).mean() < tol:
            break
    return gamma


def _sstats(counts: np.ndarray, exp_elog_beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    exp_elog_theta = np.exp(_dirichlet_elog(gamma))
    phinorm = exp_elog_theta @ exp_elog_beta + 1e-100
    return exp_elog_beta * ((counts / phinorm).T @ exp_elog_theta).T


def _elbo(
    counts: np.ndarray,
    gamma: np.ndarray,
    lam: np.ndarray,
    alpha: float,
    beta: float,
) -> float:
    n_topics, vocab_size = lam.shape
    elog_theta = _dirichlet_elog(gamma)
    elog_beta = _dirichlet_elog(lam)
    # E[log p(w | theta, beta)] with responsibilities collapsed
    phinorm = np.log(np.exp(elog_theta) @ np.exp(elog_beta) + 1e-100)
    score = float((counts * phinorm).sum())
    # E[log p(theta | alpha)] - E[log q(theta | gamma)]
    score += float(((alpha - gamma) * elog_theta).sum())
    score += float((gammaln(gamma) - gammaln(alpha)).sum())
    score += float(
        (gammaln(alpha * n_topics) - gammaln(gamma.sum(axis=1))).sum()
    )
    # E[log p(beta | eta)] - E[log q(beta | lambda)]
    score += float(((beta - lam) * elog_beta).sum())
    score += float((gammaln(lam) - gammaln(beta)).sum())
    score += float(
        (gammaln(beta * vocab_size) - gammaln(lam.sum(axis=1))).sum()
    )
    return score


def train(bows: list[BagOfWords], config: LdaConfig, vocab: Vocabulary) -> LdaModel:
    if not bows:
        raise LdaError("cannot train on an empty corpus")
    if len(vocab) == 0:
        raise LdaError("cannot train with an empty vocabulary")
    counts = _counts_matrix(bows, len(vocab))
    alpha = config.effective_alpha
    n_topics = config.num_topics

    rng = np.random.default_rng(config.seed)
    lam = rng.gamma(100.0, 1.0 / 100.0, (n_topics, len(vocab)))
    gamma = None
    trace = []
    for _ in range(config.em_passes):
        exp_elog_beta = np.exp(_dirichlet_elog(lam))
        gamma = _estep(
            counts, exp_elog_beta, alpha,
            config.doc_estep_iters, config.convergence_tol, gamma=gamma,
        )
        lam = config.beta + _sstats(counts, exp_elog_beta, gamma)
        trace.append(_elbo(counts, gamma, lam, alpha, config.beta))

    phi = lam / lam.sum(axis=1, keepdims=True)
    return LdaModel(phi=phi, config=config, vocab=vocab, elbo_trace=trace)


# ---------------------------------------------------------------------------
# Inference

def infer_matrix(model: LdaModel, counts: np.ndarray) -> np.ndarray:
    """Topic mixtures for a batch of dense count rows (n_docs x |V|)."""
    config = model.config
    active = np.flatnonzero(counts.sum(axis=0) > 0)
    if active.size == 0:
        return np.full((counts.shape[0], model.num_topics), 1.0 / model.num_topics)
    gamma = _estep(
        counts[:, active],
        model.phi[:, active],
        config.effective_alpha,
        config.doc_estep_iters,
        config.convergence_tol,
    )
    theta = gamma / gamma.sum(axis=1, keepdims=True)
    empty = counts.sum(axis=1) == 0
    if empty.any():
        theta[empty] = 1.0 / model.num_topics
    return theta


def infer(model: LdaModel, bow: BagOfWords) -> TopicMixture:
    counts = _counts_matrix([bow], len(model.vocab))
    if counts.sum() == 0:
        return TopicMixture(
            theta=np.full(model.num_topics, 1.0 / model.num_topics), empty=True
        )
    return TopicMixture(theta=infer_matrix(model, counts)[0])


def reviewer_vector(model: LdaModel, archive_bows: list[BagOfWords]) -> TopicMixture:
    """Archive mixture: element-wise union (sum) of the archive's bags,
    then inference on the combined bag."""
    if not archive_bows:
        raise LdaError("archive must contain at least one document")
    combined: dict[int, int] = {}
    for bow in archive_bows:
        for dim, c in bow.counts.items():
            combined[dim] = combined.get(dim, 0) + c
    union = BagOfWords(counts=combined, vocab=archive_bows[0].vocab)
    return infer(model, union)
