import itertools

import numpy as np
import pytest

from advpapers import matcher
from advpapers.matcher import (
    Assignment,
    BiddingMatrix,
    LoadConstraints,
    assign,
    bidding_score,
    make_ranking,
    top_k,
)


def test_bidding_score_is_dot_product():
    assert bidding_score([0.2, 0.8], [0.5, 0.5]) == pytest.approx(0.5)
    with pytest.raises(matcher.MatcherError):
        bidding_score([0.2, 0.8], [1.0])


def test_ranking_order_and_tie_break():
    ranking = make_ranking(["r2", "r0", "r1"], np.array([0.5, 0.9, 0.5]))
    assert ranking.ordered == ["r0", "r1", "r2"]  # tie broken by id
    assert ranking.rank_of["r0"] == 0
    assert ranking.score_at(0) == pytest.approx(0.9)


def test_top_k():
    ranking = make_ranking(["a", "b", "c"], np.array([0.1, 0.3, 0.2]))
    assert top_k(ranking, 2) == ["b", "c"]
    with pytest.raises(matcher.MatcherError):
        top_k(ranking, 4)


def brute_force_optimum(scores, ls, lr):
    """Enumerate reviewer subsets per submission under both load caps."""
    n_rev, n_sub = scores.shape
    best = -np.inf
    options = list(itertools.combinations(range(n_rev), ls))

    def rec(j, used, total):
        nonlocal best
        if j == n_sub:
            best = max(best, total)
            return
        for combo in options:
            if any(used[i] + 1 > lr for i in combo):
                continue
            for i in combo:
                used[i] += 1
            rec(j + 1, used, total + sum(scores[i, j] for i in combo))
            for i in combo:
                used[i] -= 1

    rec(0, [0] * n_rev, 0.0)
    return best


@pytest.mark.parametrize("seed", range(8))
def test_assign_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n_rev = int(rng.integers(2, 5))
    n_sub = int(rng.integers(1, 4))
    ls = int(rng.integers(1, n_rev + 1))
    lr_min = -(-ls * n_sub // n_rev)  # ceil, keeps the instance feasible
    lr = int(rng.integers(lr_min, ls * n_sub + 1))
    scores = np.round(rng.random((n_rev, n_sub)), 6)
    matrix = BiddingMatrix(
        scores=scores,
        reviewer_ids=[f"r{i}" for i in range(n_rev)],
        submission_ids=[f"s{j}" for j in range(n_sub)],
    )
    result = assign(matrix, LoadConstraints(per_submission=ls, per_reviewer=lr))
    expected = brute_force_optimum(scores, ls, lr)
    assert result.objective == pytest.approx(expected, abs=1e-9)
    # every submission fully staffed, no reviewer overloaded
    for j in range(n_sub):
        assert len(result.reviewers_of(f"s{j}")) == ls
    for i in range(n_rev):
        assert sum(1 for r, _ in result.pairs if r == f"r{i}") <= lr


def test_assign_infeasible_loads():
    matrix = BiddingMatrix(
        scores=np.ones((2, 3)), reviewer_ids=["a", "b"], submission_ids=["x", "y", "z"]
    )
    with pytest.raises(matcher.MatcherError):
        assign(matrix, LoadConstraints(per_submission=2, per_reviewer=2))


def test_assignment_csv(tmp_path):
    matrix = BiddingMatrix(
        scores=np.array([[0.9, 0.1], [0.2, 0.8]]),
        reviewer_ids=["ra", "rb"],
        submission_ids=["s0", "s1"],
    )
    result = assign(matrix, LoadConstraints(per_submission=1, per_reviewer=1))
    matcher.assignment_to_csv(result, matrix, tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().strip().splitlines()
    assert lines[0] == "reviewer_id,submission_id,score,rank"
    assert len(lines) == 3
    assert any(line.startswith("ra,s0") for line in lines)
    assert any(line.startswith("rb,s1") for line in lines)


def test_ranking_csv(tmp_path):
    ranking = make_ranking(["a", "b"], np.array([0.25, 0.75]))
    matcher.ranking_to_csv(ranking, "sub", tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[1].startswith("b,sub,0.750000000,0")
