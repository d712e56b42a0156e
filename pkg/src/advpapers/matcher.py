"""Bidding scores, reviewer rankings, and load-constrained assignment.

The bidding score between a reviewer archive and a submission is the dot
product of their topic mixtures. The global assignment maximizes total
score subject to per-submission and per-reviewer load caps; it is solved
exactly with successive-shortest-path min-cost max-flow on integer-scaled
costs (the LP relaxation of the bipartite matching is totally unimodular,
so the flow optimum equals the LP optimum).
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_COST_SCALE = 10**9


class MatcherError(ValueError):
    pass


def bidding_score(theta_r: np.ndarray, theta_s: np.ndarray) -> float:
    theta_r = np.asarray(theta_r, dtype=float)
    theta_s = np.asarray(theta_s, dtype=float)
    if theta_r.shape != theta_s.shape:
        raise MatcherError(
            f"topic mixture dimensions differ: {theta_r.shape} vs {theta_s.shape}"
        )
    return float(theta_r @ theta_s)


@dataclass
class Ranking:
    ordered: list[str]                  # reviewer ids, best first
    scores: dict[str, float]

    def __post_init__(self):
        self.rank_of = {rid: i for i, rid in enumerate(self.ordered)}

    def score_at(self, rank: int) -> float:
        return self.scores[self.ordered[rank]]


def make_ranking(reviewer_ids: list[str], scores: np.ndarray) -> Ranking:
    """Descending by score; ties broken by ascending reviewer id."""
    order = sorted(range(len(reviewer_ids)), key=lambda i: (-scores[i], reviewer_ids[i]))
    ordered = [reviewer_ids[i] for i in order]
    return Ranking(ordered=ordered, scores={reviewer_ids[i]: float(scores[i]) for i in order})


def rank_reviewers(system, bow) -> Ranking:
    return make_ranking(system.reviewer_ids, system.scores(bow))


def top_k(ranking: Ranking, load: int) -> list[str]:
    if load > len(ranking.ordered):
        raise MatcherError(f"cannot take top {load} of {len(ranking.ordered)} reviewers")
    return ranking.ordered[:load]


@dataclass(frozen=True)
class LoadConstraints:
    per_submission: int
    per_reviewer: int


@dataclass
class BiddingMatrix:
    scores: np.ndarray                  # |R| x |S|
    reviewer_ids: list[str]
    submission_ids: list[str]


@dataclass
class Assignment:
    pairs: set[tuple[str, str]]         # (reviewer_id, submission_id)
    objective: float

    def reviewers_of(self, submission_id: str) -> set[str]:
        return {r for r, s in self.pairs if s == submission_id}


class _MinCostFlow:
    def __init__(self, n: int):
        self.n = n
        self.graph: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[int] = []

    def add_edge(self, u: int, v: int, cap: int, cost: int) -> None:
        self.graph[u].append(len(self.to))
        self.to.append(v); self.cap.append(cap); self.cost.append(cost)
        self.graph[v].append(len(self.to))
        self.to.append(u); self.cap.append(0); self.cost.append(-cost)

    def run(self, source: int, sink: int) -> int:
        """Successive shortest paths with SPFA. Returns total cost."""
        total_cost = 0
        while True:
            dist = [None] * self.n
            in_queue = [False] * self.n
            prev_edge = [-1] * self.n
            dist[source] = 0
            queue = deque([source])
            while queue:
                u = queue.popleft()
                in_queue[u] = False
                for eid in self.graph[u]:
                    if self.cap[eid] <= 0:
                        continue
                    v = self.to[eid]
                    nd = dist[u] + self.cost[eid]
                    if dist[v] is None or nd < dist[v]:
                        dist[v] = nd
                        prev_edge[v] = eid
                        if not in_queue[v]:
                            queue.append(v)
                            in_queue[v] = True
            if dist[sink] is None or dist[sink] >= 0:
                break
            # bottleneck along the path
            bottleneck = None
            v = sink
            while v != source:
                eid = prev_edge[v]
                bottleneck = self.cap[eid] if bottleneck is None else min(bottleneck, self.cap[eid])
                v = self.to[eid ^ 1]
            v = sink
            while v != source:
                eid = prev_edge[v]
                self.cap[eid] -= bottleneck
                self.cap[eid ^ 1] += bottleneck
                v = self.to[eid ^ 1]
            total_cost += bottleneck * dist[sink]
        return total_cost


def assign(matrix: BiddingMatrix, loads: LoadConstraints) -> Assignment:
    n_rev = len(matrix.reviewer_ids)
    n_sub = len(matrix.submission_ids)
    if loads.per_submission * n_sub > loads.per_reviewer * n_rev:
        raise MatcherError(
            f"infeasible loads: {loads.per_submission} x {n_sub} submissions exceed "
            f"{loads.per_reviewer} x {n_rev} reviewer capacity"
        )
    rev_order = sorted(range(n_rev), key=lambda i: matrix.reviewer_ids[i])
    sub_order = sorted(range(n_sub), key=lambda j: matrix.submission_ids[j])

    n = 2 + n_rev + n_sub
    source, sink = 0, n - 1
    flow = _MinCostFlow(n)
    rev_node = {}
    for pos, i in enumerate(rev_order):
        rev_node[i] = 1 + pos
        flow.add_edge(source, 1 + pos, loads.per_reviewer, 0)
    sub_node = {}
    for pos, j in enumerate(sub_order):
        sub_node[j] = 1 + n_rev + pos
        flow.add_edge(1 + n_rev + pos, sink, loads.per_submission, 0)
    edge_of: dict[int, tuple[int, int]] = {}
    for i in rev_order:
        for j in sub_order:
            cost = -int(round(matrix.scores[i, j] * _COST_SCALE))
            eid = len(flow.to)
            flow.add_edge(rev_node[i], sub_node[j], 1, cost)
            edge_of[eid] = (i, j)

    flow.run(source, sink)

    pairs = set()
    objective = 0.0
    for eid, (i, j) in edge_of.items():
        if flow.cap[eid] == 0:  # saturated forward edge
            pairs.add((matrix.reviewer_ids[i], matrix.submission_ids[j]))
            objective += float(matrix.scores[i, j])
    return Assignment(pairs=pairs, objective=objective)


def ranking_to_csv(ranking: Ranking, submission_id: str, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["reviewer_id", "submission_id", "score", "rank"])
        for rank, rid in enumerate(ranking.ordered):
            writer.writerow([rid, submission_id, f"{ranking.scores[rid]:.9f}", rank])


def assignment_to_csv(
    assignment: Assignment, matrix: BiddingMatrix, path: str | Path
) -> None:
    rev_idx = {r: i for i, r in enumerate(matrix.reviewer_ids)}
    sub_idx = {s: j for j, s in enumerate(matrix.submission_ids)}
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["reviewer_id", "submission_id", "score", "rank"])
        for rid, sid in sorted(assignment.pairs):
            score = matrix.scores[rev_idx[rid], sub_idx[sid]]
            col = matrix.scores[:, sub_idx[sid]]
            order = sorted(
                range(len(col)), key=lambda i: (-col[i], matrix.reviewer_ids[i])
            )
            rank = order.index(rev_idx[rid])
            writer.writerow([rid, sid, f"{score:.9f}", rank])
