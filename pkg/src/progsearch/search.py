"""Graph-guided heuristic search for the program answering one question.

Each step picks the not-fully-explored node with the highest expectation

    Exp(n) = sum_d w_d * max{score(m) : dist(n, m) <= d} + alpha / (visits(n) + 1)

(the weight list is indexed from distance 0; its length fixes the radius),
then expands it: on the first visit of an executable program the node's
score is replaced by the evaluator's accuracy, one unexpanded node address
is sampled, and all legal one-edit mutants at that address are added to
the graph.  The search stops at the step budget, when every node is fully
explored, or as soon as a score reaches 1.0 (nothing can improve on it).

Non-executable nodes that the mismatch tolerance admitted are never
evaluated; they keep their predictor-probability score and serve as
connectivity bridges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .graph import GraphNode, ProgramGraph, ball_max_scores, init_graph
from .predictors import NGramPredictor, ProbabilityScorer, QuestionEmbedder, SolvedStore, closest_solved
from .programs import Program, mutate
from .registry import ModuleRegistry

DEFAULT_WEIGHTS = (0.5, 0.25, 0.15, 0.1)


@dataclass(frozen=True)
class SearchConfig:
    max_step: int = 1000
    weights: tuple[float, ...] = DEFAULT_WEIGHTS
    alpha: float = 0.05
    tolerance: int = 1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.weights or any(w < 0 for w in self.weights):
            raise ValueError("weights must be a non-empty list of non-negative reals")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")

    @property
    def max_distance(self) -> int:
        """Largest ball radius considered: one less than the weight count."""
        return len(self.weights) - 1


@dataclass
class SearchTrace:
    """Per-step records: (step, selected key, new nodes, evaluations, best score)."""

    records: list[tuple[int, str, int, int, float]] = field(default_factory=list)
    evaluations: int = 0

    def record(self, step: int, key: str, new_nodes: int, best_score: float) -> None:
        self.records.append((step, key, new_nodes, self.evaluations, best_score))


class SearchExhausted(RuntimeError):
    """No candidate node remains (every node fully explored)."""


Evaluator = Callable[[Program], float]


def expectation(node: GraphNode, graph: ProgramGraph, config: SearchConfig) -> float:
    """Expectation of one node, from a truncated BFS around it."""
    balls = ball_max_scores(graph, node, config.max_distance)
    total = 0.0
    for d, w in enumerate(config.weights):
        total += w * balls[d]
    total += config.alpha / (node.visit_count + 1.0)
    return total


def select_node(graph: ProgramGraph, config: SearchConfig) -> GraphNode:
    """Candidate (not fully explored) node maximizing expectation.

    Exact ties break toward the shorter program, then the smaller
    canonical key.  Raises SearchExhausted when no candidate remains.
    """
    mask = graph.candidate_mask()
    if not mask.any():
        raise SearchExhausted
    values = graph.expectations(config.weights, config.alpha)
    values[~mask] = -np.inf
    best = values.max()
    ties = np.flatnonzero(values == best)
    if len(ties) > 1:  # shorter program first, then smaller canonical key
        lengths = graph._lengths[ties]
        ties = ties[lengths == lengths.min()]
        if len(ties) > 1:
            return graph.nodes[int(min(ties, key=lambda i: graph.nodes[i].key))]
    return graph.nodes[int(ties[0])]


def expand(
    node: GraphNode,
    graph: ProgramGraph,
    evaluator: Evaluator,
    scorer: ProbabilityScorer,
    registry: ModuleRegistry,
    rng,
    trace: SearchTrace,
) -> int:
    """Visit `node` and grow the graph at one sampled address.

    First visit of an executable program runs the evaluator (counted in
    the trace); every legal mutant at the sampled address is added.
    Returns the number of newly created nodes.
    """
    node.visit_count += 1
    if not node.visited and node.legality.executable:
        node.score = evaluator(node.program)
        node.visited = True
        trace.evaluations += 1
    unexpanded = [a for a in range(len(node.program.tokens)) if a not in node.expanded]
    address = unexpanded[rng.randrange(len(unexpanded))]
    created = 0
    for mutant in mutate(node.program, address, registry):
        _, is_new = graph.add(mutant, scorer)
        if is_new:
            created += 1
    node.expanded.add(address)
    if len(node.expanded) == len(node.program.tokens):
        node.fully_explored = True
    return created


def run_search(
    question: Sequence[str],
    evaluator: Evaluator,
    predictor: NGramPredictor,
    solved_store: Optional[SolvedStore],
    embedder: Optional[QuestionEmbedder],
    registry: ModuleRegistry,
    config: SearchConfig,
    rng=None,
) -> tuple[Program, float, SearchTrace, ProgramGraph]:
    """Search for the best-scoring program for one question.

    Returns (best program, best score, trace, final graph).  Propagates
    NoLegalSeedError when no seed can enter the graph.
    """
    import random as _random

    if rng is None:
        rng = _random.Random(config.rng_seed)
    scorer = predictor.scorer(question, registry)
    closest = None
    if solved_store is not None and embedder is not None and len(solved_store) > 0:
        found = closest_solved(embedder, solved_store, question)
        if found is not None:
            closest = found[0]
    graph = init_graph(question, scorer, closest, registry, config.tolerance)
    trace = SearchTrace()
    for step in range(config.max_step):
        try:
            node = select_node(graph, config)
        except SearchExhausted:
            break
        created = expand(node, graph, evaluator, scorer, registry, rng, trace)
        best = graph.best_node()
        trace.record(step, node.key, created, best.score)
        if best.score >= 1.0:
            break
    best = graph.best_node()
    return best.program, best.score, trace, graph
