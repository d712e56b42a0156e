"""Feature-space attack: loss, reviewer-word distributions, candidate
generation, stochastic beam search, and the two baselines.

The attack operates on stem counts (the common feature space across an
ensemble of systems whose vocabularies may differ). A modification is a
sparse map stem -> signed count; every candidate respects non-negativity
against the submission's stem counts and the configured L1/Linf caps.

Reviewer-word distributions measure how predictive a stem is for a
reviewer: the average topic-word probability weighted by the reviewer's
topic relevance, truncated to the most probable words. Exclusive
variants restrict a target's distribution against a set of concurring
reviewers; sampling from them moves the submission towards (or away
from) the target without dragging the concurrers along.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .matcher import Ranking, make_ranking
from .system import AssignmentSystem
from .textpipe import BagOfWords, featurize_stems

SELECT = "select"
REJECT = "reject"


class AttackError(ValueError):
    pass


class NoExclusiveWords(AttackError):
    pass


@dataclass(frozen=True)
class AttackTarget:
    select: tuple[str, ...] = ()
    reject: tuple[str, ...] = ()

    def __post_init__(self):
        if set(self.select) & set(self.reject):
            raise AttackError("select and reject sets must be disjoint")
        if not self.select and not self.reject:
            raise AttackError("target needs at least one reviewer")

    def validate_feasible(self, n_reviewers: int, load: int) -> None:
        if len(self.select) > load:
            raise AttackError(f"cannot select {len(self.select)} reviewers with load {load}")
        if len(self.reject) > n_reviewers - load:
            raise AttackError(
                f"cannot reject {len(self.reject)} of {n_reviewers} reviewers with load {load}"
            )


@dataclass(frozen=True)
class SearchConfig:
    beam_width: int = 8
    step_size: int = 128
    successors: int = 512
    window: int = 6
    offset: int = 3
    max_iters: int = 1000
    target_margin: float = 0.02         # required margin |gamma|
    reject_rank: int = 10
    top_words: int = 5000
    l1_max: int | None = None
    linf_max: int | None = None
    seed: int = 0


def white_box_config(**overrides) -> SearchConfig:
    return replace(SearchConfig(), **overrides)


def black_box_config(**overrides) -> SearchConfig:
    base = SearchConfig(
        beam_width=4, step_size=256, successors=128, window=2, offset=1,
        target_margin=0.16,
    )
    return replace(base, **overrides)


# ---------------------------------------------------------------------------
# Loss and objective

def _ranking_arrays(system: AssignmentSystem, scores: np.ndarray):
    """Per-row rank positions and descending-sorted scores.

    ``scores`` is (n, R) with columns in reviewer-id order, so a stable
    descending sort breaks ties by ascending reviewer id.
    """
    order = np.argsort(-scores, axis=1, kind="stable")
    ranks = np.empty_like(order)
    n = scores.shape[0]
    ranks[np.arange(n)[:, None], order] = np.arange(scores.shape[1])
    sorted_scores = np.take_along_axis(scores, order, axis=1)
    return ranks, sorted_scores


@dataclass
class EvalResult:
    losses: np.ndarray                  # (n,) summed over systems
    met: np.ndarray                     # (n,) bool, all systems
    margins: np.ndarray                 # (n,) min over systems
    sys_ranks: list[np.ndarray]         # per system: (n, R) rank of each reviewer


def evaluate_deltas(
    systems: list[AssignmentSystem],
    base_stems: dict[str, int],
    deltas: list[dict[str, int]],
    target: AttackTarget,
    load: int,
    config: SearchConfig,
) -> EvalResult:
    n = len(deltas)
    total_losses = np.zeros(n)
    met_all = np.ones(n, dtype=bool)
    margins = np.full(n, np.inf)
    sys_ranks = []
    for system in systems:
        vocab = system.vocab
        counts = np.zeros((n, len(vocab)))
        base_vec = np.zeros(len(vocab))
        for w, c in base_stems.items():
            dim = vocab.index.get(w)
            if dim is not None:
                base_vec[dim] = c
        for i, delta in enumerate(deltas):
            counts[i] = base_vec
            for w, c in delta.items():
                dim = vocab.index.get(w)
                if dim is not None:
                    counts[i, dim] += c
        np.clip(counts, 0, None, out=counts)
        thetas = system.theta_batch(counts)
        scores = thetas @ system.reviewer_thetas.T
        ranks, sorted_scores = _ranking_arrays(system, scores)
        idx = {rid: j for j, rid in enumerate(system.reviewer_ids)}
        sel = [idx[r] for r in target.select]
        rej = [idx[r] for r in target.reject]
        n_rev = len(system.reviewer_ids)

        loss = np.zeros(n)
        for j in sel:
            loss += ranks[:, j] * (1.0 - scores[:, j])
        if rej:
            s_boundary = sorted_scores[:, min(config.reject_rank, n_rev - 1)]
            for j in rej:
                push = np.maximum(config.reject_rank - ranks[:, j], 0)
                loss += push * (scores[:, j] - s_boundary)

        met = np.ones(n, dtype=bool)
        for j in sel:
            met &= ranks[:, j] < load
        for j in rej:
            met &= ranks[:, j] >= load
        sys_margin = np.full(n, 1.0)
        if sel and load < n_rev:
            out_score = sorted_scores[:, load]
            for j in sel:
                sys_margin = np.minimum(sys_margin, scores[:, j] - out_score)
        if rej:
            in_score = sorted_scores[:, load - 1]
            for j in rej:
                sys_margin = np.minimum(sys_margin, in_score - scores[:, j])

        total_losses += np.where(met, -np.minimum(sys_margin, 1.0), loss)
        met_all &= met
        margins = np.minimum(margins, sys_margin)
        sys_ranks.append(ranks)
    margins = np.minimum(margins, 1.0)
    return EvalResult(losses=total_losses, met=met_all, margins=margins, sys_ranks=sys_ranks)


def _single_eval(
    system: AssignmentSystem,
    bow: BagOfWords,
    target: AttackTarget,
    load: int,
    config: SearchConfig,
) -> EvalResult:
    return evaluate_deltas([system], bow.as_stems(), [{}], target, load, config)


def loss_select(system: AssignmentSystem, bow: BagOfWords, select: tuple[str, ...]) -> float:
    ranking = system.ranking(bow)
    return float(
        sum(ranking.rank_of[r] * (1.0 - ranking.scores[r]) for r in select)
    )


def loss_reject(
    system: AssignmentSystem,
    bow: BagOfWords,
    reject: tuple[str, ...],
    reject_rank: int,
) -> float:
    ranking = system.ranking(bow)
    boundary = ranking.score_at(min(reject_rank, len(ranking.ordered) - 1))
    total = 0.0
    for r in reject:
        push = max(reject_rank - ranking.rank_of[r], 0)
        total += push * (ranking.scores[r] - boundary)
    return float(total)


def objective_met(
    system: AssignmentSystem, bow: BagOfWords, target: AttackTarget, load: int
) -> bool:
    ranking = system.ranking(bow)
    return _objective_met_ranking(ranking, target, load)


def _objective_met_ranking(ranking: Ranking, target: AttackTarget, load: int) -> bool:
    return all(ranking.rank_of[r] < load for r in target.select) and all(
        ranking.rank_of[r] >= load for r in target.reject
    )


def margin(
    system: AssignmentSystem, bow: BagOfWords, target: AttackTarget, load: int
) -> float:
    if not objective_met(system, bow, target, load):
        raise AttackError("margin is only defined once the objective is met")
    ranking = system.ranking(bow)
    n_rev = len(ranking.ordered)
    value = 1.0
    if target.select and load < n_rev:
        out_score = ranking.score_at(load)
        value = min(value, min(ranking.scores[r] - out_score for r in target.select))
    if target.reject:
        in_score = ranking.score_at(load - 1)
        value = min(value, min(in_score - ranking.scores[r] for r in target.reject))
    return float(min(value, 1.0))


# ---------------------------------------------------------------------------
# Reviewer-word distributions

@dataclass
class ReviewerWordDistribution:
    reviewer_id: str
    probs: dict[str, float]

    def support(self) -> set[str]:
        return set(self.probs)


def reviewer_words(model, theta_r: np.ndarray, top_words: int, reviewer_id: str = "") -> ReviewerWordDistribution:
    """Mass of word w: (1/T) sum_t P(w|t) * theta_r[t], truncated to the
    ``top_words`` highest-mass words and renormalized."""
    mass = (theta_r @ model.phi) / model.num_topics
    return _truncate_mass(model.vocab.words, mass, top_words, reviewer_id)


def _truncate_mass(words, mass: np.ndarray, top_words: int, reviewer_id: str) -> ReviewerWordDistribution:
    nz = np.flatnonzero(mass > 0)
    if nz.size > top_words:
        # deterministic: by descending mass, then word
        order = sorted(nz.tolist(), key=lambda i: (-mass[i], words[i]))[:top_words]
        nz = np.array(order)
    total = mass[nz].sum()
    probs = {words[i]: float(mass[i] / total) for i in nz.tolist()}
    return ReviewerWordDistribution(reviewer_id=reviewer_id, probs=probs)


def exclusive_pos(
    target_q: ReviewerWordDistribution, concurring: list[ReviewerWordDistribution]
) -> ReviewerWordDistribution:
    """Words predictive for the target but for none of the concurrers."""
    if not concurring:
        return target_q
    excluded = set()
    for q in concurring:
        excluded |= q.support()
    kept = {w: p for w, p in target_q.probs.items() if w not in excluded}
    if not kept:
        raise NoExclusiveWords(
            f"no words exclusive to {target_q.reviewer_id!r} against the concurring set"
        )
    total = sum(kept.values())
    return ReviewerWordDistribution(
        reviewer_id=target_q.reviewer_id,
        probs={w: p / total for w, p in kept.items()},
    )


def exclusive_neg(
    target_q: ReviewerWordDistribution, concurring: list[ReviewerWordDistribution]
) -> ReviewerWordDistribution:
    """Words predictive for every concurrer but not for the target,
    weighted by the concurrers' average mass."""
    if not concurring:
        return target_q
    common = set.intersection(*(q.support() for q in concurring)) - target_q.support()
    if not common:
        raise NoExclusiveWords(
            f"no words exclusive to the concurring set against {target_q.reviewer_id!r}"
        )
    kept = {
        w: sum(q.probs[w] for q in concurring) / len(concurring) for w in common
    }
    total = sum(kept.values())
    return ReviewerWordDistribution(
        reviewer_id=target_q.reviewer_id,
        probs={w: p / total for w, p in kept.items()},
    )


def sample_concurring(
    ranking: Ranking,
    target_reviewer: str,
    direction: str,
    window: int,
    offset: int,
    n_sets: int,
    rng: np.random.Generator,
) -> list[list[str]]:
    """Sample subsets of reviewers near the target in the ranking.

    Selection: reviewers with 0 <= rank(target) - rank(r) - offset <= window.
    Rejection: the mirrored window below the target.
    """
    t_rank = ranking.rank_of[target_reviewer]
    if direction == SELECT:
        lo, hi = t_rank - offset - window, t_rank - offset
    elif direction == REJECT:
        lo, hi = t_rank + offset, t_rank + offset + window
    else:
        raise AttackError(f"unknown direction {direction!r}")
    pool = [
        rid
        for rid in ranking.ordered[max(lo, 0) : hi + 1]
        if rid != target_reviewer
    ]
    if not pool:
        return [[]]
    sets = []
    for _ in range(n_sets):
        mask = rng.random(len(pool)) < 0.5
        sets.append([rid for rid, m in zip(pool, mask) if m])
    return sets


# ---------------------------------------------------------------------------
# Candidate generation

def norms(delta: dict[str, int]) -> tuple[int, int]:
    if not delta:
        return 0, 0
    return sum(abs(c) for c in delta.values()), max(abs(c) for c in delta.values())


def _apply_additions(
    delta: dict[str, int],
    words: list[str],
    base_stems: dict[str, int],
    config: SearchConfig,
) -> dict[str, int]:
    new = dict(delta)
    l1, _ = norms(new)
    for w in words:
        if config.l1_max is not None and l1 >= config.l1_max:
            break
        current = new.get(w, 0)
        if config.linf_max is not None and current >= config.linf_max:
            continue
        new[w] = current + 1
        l1 += 1
    return new


def _apply_removals(
    delta: dict[str, int],
    words: list[str],
    base_stems: dict[str, int],
    config: SearchConfig,
) -> dict[str, int]:
    new = dict(delta)
    l1, _ = norms(new)
    for w in words:
        if config.l1_max is not None and l1 >= config.l1_max:
            break
        current = new.get(w, 0)
        if base_stems.get(w, 0) + current <= 0:
            continue
        if config.linf_max is not None and -current >= config.linf_max:
            continue
        new[w] = current - 1
        if new[w] == 0:
            del new[w]
        l1 += 1
    return new


def _sample_words(
    dist: ReviewerWordDistribution,
    k: int,
    blocked: set[str],
    rng: np.random.Generator,
) -> list[str]:
    words = [w for w in sorted(dist.probs) if w not in blocked]
    if not words:
        return []
    probs = np.array([dist.probs[w] for w in words])
    probs = probs / probs.sum()
    picks = rng.choice(len(words), size=k, replace=True, p=probs)
    return [words[i] for i in picks.tolist()]


def generate_candidates(
    delta: dict[str, int],
    base_stems: dict[str, int],
    target: AttackTarget,
    q_banks: dict[str, dict[str, ReviewerWordDistribution]],
    rankings: dict[str, Ranking],
    config: SearchConfig,
    blocked: set[str],
    n_sets: int,
    rng: np.random.Generator,
) -> list[dict[str, int]]:
    """Successor deltas for one beam candidate.

    For every (system, target reviewer, sampled concurring set), one
    successor adds ``step_size`` words from the positive exclusive
    distribution and one removes ``step_size`` words from the negative
    one (interchanged for rejection targets).
    """
    out = []
    for system_id, q_bank in q_banks.items():
        ranking = rankings[system_id]
        jobs = [(r, SELECT) for r in target.select] + [(r, REJECT) for r in target.reject]
        for reviewer, direction in jobs:
            target_q = q_bank[reviewer]
            sets = sample_concurring(
                ranking, reviewer, direction, config.window, config.offset, n_sets, rng
            )
            for concurring_ids in sets:
                concurring = [q_bank[r] for r in concurring_ids]
                try:
                    q_pos = exclusive_pos(target_q, concurring)
                except NoExclusiveWords:
                    q_pos = None
                try:
                    q_neg = exclusive_neg(target_q, concurring)
                except NoExclusiveWords:
                    q_neg = None
                if direction == SELECT:
                    add_dist, rem_dist = q_pos, q_neg
                else:
                    add_dist, rem_dist = q_neg, q_pos
                if add_dist is not None:
                    words = _sample_words(add_dist, config.step_size, blocked, rng)
                    if words:
                        cand = _apply_additions(delta, words, base_stems, config)
                        if cand != delta:
                            out.append(cand)
                if rem_dist is not None:
                    words = _sample_words(rem_dist, config.step_size, blocked, rng)
                    if words:
                        cand = _apply_removals(delta, words, base_stems, config)
                        if cand != delta:
                            out.append(cand)
    return out


# ---------------------------------------------------------------------------
# Beam search

@dataclass
class SearchResult:
    success: bool
    delta: dict[str, int]
    loss: float
    margin: float
    iterations: int
    trace: list[dict] = field(default_factory=list)
    reason: str = ""


def _delta_key(delta: dict[str, int]):
    return frozenset(delta.items())


def beam_search(
    base_stems: dict[str, int],
    target: AttackTarget,
    systems: list[AssignmentSystem],
    config: SearchConfig,
    load: int,
    blocked: set[str] | None = None,
) -> SearchResult:
    """Stochastic beam search for a modification vector.

    Survivors are sampled with probability softmax(-loss); the search
    stops when the objective holds on every system with margin at least
    the configured target margin. On failure the best delta seen is
    returned together with the loss trace.
    """
    blocked = set(blocked or ())
    for system in systems:
        target.validate_feasible(len(system.reviewer_ids), load)

    # reviewer-word distributions, fixed for the whole search
    q_banks: dict[str, dict[str, ReviewerWordDistribution]] = {}
    for system in systems:
        bank = {}
        for j, rid in enumerate(system.reviewer_ids):
            bank[rid] = reviewer_words(
                system.model, system.reviewer_thetas[j], config.top_words, rid
            )
        q_banks[system.system_id] = bank

    cache: dict = {}

    def evaluate(deltas: list[dict[str, int]]) -> EvalResult:
        return evaluate_deltas(systems, base_stems, deltas, target, load, config)

    init = evaluate([{}])
    if init.met[0] and init.margins[0] >= config.target_margin:
        return SearchResult(
            success=True, delta={}, loss=float(init.losses[0]),
            margin=float(init.margins[0]), iterations=0,
        )

    beam: list[dict[str, int]] = [{}]
    beam_eval = init
    best_delta: dict[str, int] = {}
    best_loss = float(init.losses[0])
    trace: list[dict] = []

    n_sets_per = max(1, config.successors // max(1, len(beam)))
    for iteration in range(config.max_iters):
        rng = np.random.default_rng([config.seed, iteration])
        n_sets_per = max(1, config.successors // len(beam))
        candidates: list[dict[str, int]] = []
        seen = set()
        for b_idx, delta in enumerate(beam):
            rankings = {}
            for s_idx, system in enumerate(systems):
                ranks_row = beam_eval.sys_ranks[s_idx][b_idx]
                order = np.argsort(ranks_row)
                rankings[system.system_id] = Ranking(
                    ordered=[system.reviewer_ids[i] for i in order.tolist()],
                    scores={rid: 0.0 for rid in system.reviewer_ids},
                )
            for cand in generate_candidates(
                delta, base_stems, target, q_banks, rankings, config,
                blocked, n_sets_per, rng,
            ):
                key = _delta_key(cand)
                if key not in seen:
                    seen.add(key)
                    candidates.append(cand)
        if not candidates:
            return SearchResult(
                success=False, delta=best_delta, loss=best_loss,
                margin=float("-inf"), iterations=iteration, trace=trace,
                reason="no legal successors",
            )

        to_eval = [c for c in candidates if _delta_key(c) not in cache]
        if to_eval:
            fresh = evaluate(to_eval)
            for i, c in enumerate(to_eval):
                cache[_delta_key(c)] = (
                    float(fresh.losses[i]), bool(fresh.met[i]), float(fresh.margins[i]),
                    [r[i] for r in fresh.sys_ranks],
                )
        losses = np.array([cache[_delta_key(c)][0] for c in candidates])
        mets = np.array([cache[_delta_key(c)][1] for c in candidates])
        margins = np.array([cache[_delta_key(c)][2] for c in candidates])

        order_best = int(np.argmin(losses))
        if losses[order_best] < best_loss:
            best_loss = float(losses[order_best])
            best_delta = candidates[order_best]

        winners = np.flatnonzero(mets & (margins >= config.target_margin))
        if winners.size:
            w = winners[int(np.argmin(losses[winners]))]
            result = SearchResult(
                success=True, delta=candidates[w], loss=float(losses[w]),
                margin=float(margins[w]), iterations=iteration + 1, trace=trace,
            )
            _verify_exit(result, systems, base_stems, target, load)
            return result

        # stochastic survivor selection: softmax over negated losses
        n_keep = min(config.beam_width, len(candidates))
        logits = -(losses - losses.min())
        probs = np.exp(logits)
        probs /= probs.sum()
        chosen = rng.choice(len(candidates), size=n_keep, replace=False, p=probs)
        chosen = chosen.tolist()
        if order_best not in chosen:   # keep the best candidate alive
            chosen[-1] = order_best
        beam = [candidates[i] for i in chosen]
        beam_eval = EvalResult(
            losses=losses[chosen],
            met=mets[chosen],
            margins=margins[chosen],
            sys_ranks=[
                np.stack([cache[_delta_key(beam[i])][3][s] for i in range(len(beam))])
                for s in range(len(systems))
            ],
        )
        l1, linf = norms(best_delta)
        trace.append(
            {
                "iteration": iteration,
                "best_loss": best_loss,
                "beam_losses": [float(x) for x in losses[chosen]],
                "l1": l1,
                "linf": linf,
            }
        )

    return SearchResult(
        success=False, delta=best_delta, loss=best_loss, margin=float("-inf"),
        iterations=config.max_iters, trace=trace, reason="iteration cap reached",
    )


def _verify_exit(
    result: SearchResult,
    systems: list[AssignmentSystem],
    base_stems: dict[str, int],
    target: AttackTarget,
    load: int,
) -> None:
    """Re-derive success from the ranking path; never trust cached ranks."""
    merged = dict(base_stems)
    for w, c in result.delta.items():
        merged[w] = merged.get(w, 0) + c
    for system in systems:
        bow = featurize_stems(merged, system.vocab)
        if not objective_met(system, bow, target, load):
            raise AttackError(
                f"search exit inconsistent with ranking on system {system.system_id!r}"
            )


# ---------------------------------------------------------------------------
# Baselines

def hill_climbing(
    base_stems: dict[str, int],
    target: AttackTarget,
    system: AssignmentSystem,
    config: SearchConfig,
    load: int,
    max_iters: int = 1000,
    patience: int = 100,
) -> SearchResult:
    """Greedy single-candidate baseline: sample one word at a time from
    the target reviewer's dominant topics, keep it only if the loss
    decreases."""
    rng = np.random.default_rng([config.seed, 91])
    idx = {rid: j for j, rid in enumerate(system.reviewer_ids)}

    pools = []
    for rid in target.select + target.reject:
        theta_r = system.reviewer_thetas[idx[rid]]
        top3 = np.argsort(-theta_r)[:3]
        mass = system.model.phi[top3].sum(axis=0) * theta_r[top3].sum()
        mass = mass / mass.sum()
        direction = SELECT if rid in target.select else REJECT
        pools.append((direction, np.flatnonzero(mass > 0), mass[mass > 0]))

    def eval_delta(delta):
        res = evaluate_deltas([system], base_stems, [delta], target, load, config)
        return float(res.losses[0]), bool(res.met[0]), float(res.margins[0])

    delta: dict[str, int] = {}
    loss, met, marg = eval_delta(delta)
    if met and marg >= config.target_margin:
        return SearchResult(success=True, delta={}, loss=loss, margin=marg, iterations=0)

    stalled = 0
    words = system.vocab.words
    for iteration in range(max_iters):
        direction, support, probs = pools[int(rng.integers(len(pools)))]
        w = words[int(support[rng.choice(len(support), p=probs)])]
        cand = dict(delta)
        if direction == SELECT:
            cand[w] = cand.get(w, 0) + 1
        else:
            if base_stems.get(w, 0) + cand.get(w, 0) <= 0:
                stalled += 1
                if stalled >= patience:
                    break
                continue
            cand[w] = cand.get(w, 0) - 1
            if cand[w] == 0:
                del cand[w]
        c_loss, c_met, c_marg = eval_delta(cand)
        if c_loss < loss:
            delta, loss, met, marg = cand, c_loss, c_met, c_marg
            stalled = 0
            if met and marg >= config.target_margin:
                return SearchResult(
                    success=True, delta=delta, loss=loss, margin=marg,
                    iterations=iteration + 1,
                )
        else:
            stalled += 1
            if stalled >= patience:
                return SearchResult(
                    success=False, delta=delta, loss=loss, margin=float("-inf"),
                    iterations=iteration + 1, reason="local minimum",
                )
    return SearchResult(
        success=False, delta=delta, loss=loss, margin=float("-inf"),
        iterations=max_iters, reason="iteration cap reached",
    )


def morphing(
    base_stems: dict[str, int],
    target: AttackTarget,
    system: AssignmentSystem,
    donor_stems: dict[str, dict[str, int]],
    config: SearchConfig,
    load: int,
    chunk: int = 20,
    max_chunks: int = 500,
) -> SearchResult:
    """Morph the submission with training documents for which the target
    reviewer already ranks highly. Supports selection only."""
    if target.reject:
        raise AttackError("morphing does not support rejection targets")
    rng = np.random.default_rng([config.seed, 17])
    idx = {rid: j for j, rid in enumerate(system.reviewer_ids)}

    donors = []
    for did, stems in sorted(donor_stems.items()):
        if system.train_thetas is None:
            break
        pos = system.train_doc_ids.index(did)
        scores = system.reviewer_thetas @ system.train_thetas[pos]
        order = np.argsort(-scores, kind="stable")
        ranks = np.empty_like(order)
        ranks[order] = np.arange(len(order))
        if all(ranks[idx[r]] < load for r in target.select):
            donors.append(stems)
    if not donors:
        raise AttackError("no donor documents rank the target reviewer highly")

    def eval_delta(delta):
        res = evaluate_deltas([system], base_stems, [delta], target, load, config)
        return float(res.losses[0]), bool(res.met[0]), float(res.margins[0])

    delta: dict[str, int] = {}
    loss, met, marg = eval_delta(delta)
    if met and marg >= config.target_margin:
        return SearchResult(success=True, delta={}, loss=loss, margin=marg, iterations=0)

    for iteration in range(max_chunks):
        stems = donors[int(rng.integers(len(donors)))]
        words = sorted(stems)
        probs = np.array([stems[w] for w in words], dtype=float)
        probs /= probs.sum()
        picks = rng.choice(len(words), size=chunk, replace=True, p=probs)
        for i in picks.tolist():
            w = words[i]
            delta[w] = delta.get(w, 0) + 1
        loss, met, marg = eval_delta(delta)
        if met and marg >= config.target_margin:
            return SearchResult(
                success=True, delta=delta, loss=loss, margin=marg,
                iterations=iteration + 1,
            )
    return SearchResult(
        success=False, delta=delta, loss=loss, margin=float("-inf"),
        iterations=max_chunks, reason="donor budget exhausted",
    )
