"""Search graph over unique programs with one-edit adjacency.

Nodes deduplicate programs by canonical key and carry the per-node search
state (score, visit count, per-address expansion flags, legality).  An
edge joins two programs exactly when one is a single edit of the other.
Because deletion abandons sibling subtrees, the one-edit relation is not
symmetric, so adjacency is discovered from both sides: a new program
links forward to nodes whose keys appear in its own mutation
neighborhood, and backward through an index of every existing node's
mutant keys.  Either way it is hash lookups, never pairwise distance
scans.

Scores and visit counts are mirrored into flat numpy arrays so the whole
graph's expectation values can be computed in a few relaxation rounds per
step (numba-jitted when available) instead of one BFS per node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .predictors import ProbabilityScorer
from .programs import END_TOKEN, Program, asymmetric_deletion_keys, mutation_keys
from .registry import LegalityReport, ModuleRegistry, count_mismatches

SCORE_FLOOR = 1e-9

try:  # pragma: no cover - exercised indirectly
    from numba import njit

    @njit(cache=True)
    def _ball_rounds_jit(eu, ev, n_edges, scores, rounds):  # pragma: no cover
        n = scores.shape[0]
        out = np.empty((rounds + 1, n), dtype=np.float64)
        for i in range(n):
            out[0, i] = scores[i]
        for r in range(1, rounds + 1):
            for i in range(n):
                out[r, i] = out[r - 1, i]
            for e in range(n_edges):
                u = eu[e]
                v = ev[e]
                if out[r - 1, v] > out[r, u]:
                    out[r, u] = out[r - 1, v]
                if out[r - 1, u] > out[r, v]:
                    out[r, v] = out[r - 1, u]
        return out

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def _ball_rounds_numpy(eu, ev, n_edges, scores, rounds):
    out = np.empty((rounds + 1, scores.shape[0]), dtype=np.float64)
    out[0] = scores
    u = eu[:n_edges]
    v = ev[:n_edges]
    for r in range(1, rounds + 1):
        cur = out[r - 1]
        nxt = out[r]
        nxt[:] = cur
        np.maximum.at(nxt, u, cur[v])
        np.maximum.at(nxt, v, cur[u])
    return out


def ball_rounds(eu, ev, n_edges, scores, rounds):
    """Max score within <= r hops for every node, r = 0..rounds."""
    if _HAVE_NUMBA:
        return _ball_rounds_jit(eu[:n_edges], ev[:n_edges], n_edges, scores, rounds)
    return _ball_rounds_numpy(eu, ev, n_edges, scores, rounds)


class NoLegalSeedError(RuntimeError):
    pass


@dataclass(eq=False)
class GraphNode:
    """One unique program plus its search bookkeeping."""

    id: int
    program: Program
    legality: LegalityReport
    graph: "ProgramGraph"
    expanded: set[int]

    @property
    def key(self) -> str:
        return self.program.key

    @property
    def score(self) -> float:
        return float(self.graph._scores[self.id])

    @score.setter
    def score(self, value: float) -> None:
        self.graph._scores[self.id] = value

    @property
    def visit_count(self) -> int:
        return int(self.graph._visits[self.id])

    @visit_count.setter
    def visit_count(self, value: int) -> None:
        self.graph._visits[self.id] = value

    @property
    def visited(self) -> bool:
        return bool(self.graph._visited[self.id])

    @visited.setter
    def visited(self, value: bool) -> None:
        self.graph._visited[self.id] = value

    @property
    def fully_explored(self) -> bool:
        return not bool(self.graph._open[self.id])

    @fully_explored.setter
    def fully_explored(self, value: bool) -> None:
        self.graph._open[self.id] = not value


class ProgramGraph:
    """Deduplicated program nodes with incremental one-edit adjacency."""

    def __init__(self, registry: ModuleRegistry, tolerance: int) -> None:
        self.registry = registry
        self.tolerance = tolerance
        self.nodes: list[GraphNode] = []
        self._by_key: dict[str, int] = {}
        self.adjacency: list[list[int]] = []
        # node id lists keyed by a mutant key of their program
        self._mutant_index: dict[str, list[int]] = {}
        cap = 256
        self._scores = np.zeros(cap, dtype=np.float64)
        self._visits = np.zeros(cap, dtype=np.int64)
        self._visited = np.zeros(cap, dtype=np.bool_)
        self._open = np.zeros(cap, dtype=np.bool_)
        self._lengths = np.zeros(cap, dtype=np.int64)
        ecap = 1024
        self._edge_u = np.zeros(ecap, dtype=np.int64)
        self._edge_v = np.zeros(ecap, dtype=np.int64)
        self.n_edges = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def node_by_key(self, key: str) -> Optional[GraphNode]:
        idx = self._by_key.get(key)
        return self.nodes[idx] if idx is not None else None

    def _grow_nodes(self) -> None:
        cap = len(self._scores)
        if len(self.nodes) < cap:
            return
        for name in ("_scores", "_visits", "_visited", "_open", "_lengths"):
            old = getattr(self, name)
            new = np.zeros(cap * 2, dtype=old.dtype)
            new[:cap] = old
            setattr(self, name, new)

    def _add_edge(self, a: int, b: int) -> None:
        self.adjacency[a].append(b)
        self.adjacency[b].append(a)
        if self.n_edges == len(self._edge_u):
            for name in ("_edge_u", "_edge_v"):
                old = getattr(self, name)
                new = np.zeros(len(old) * 2, dtype=old.dtype)
                new[: len(old)] = old
                setattr(self, name, new)
        self._edge_u[self.n_edges] = a
        self._edge_v[self.n_edges] = b
        self.n_edges += 1

    def add(
        self, program: Program, scorer: ProbabilityScorer
    ) -> tuple[Optional[GraphNode], bool]:
        """Insert a program; returns (node, created).

        Rejected programs (mismatch count above tolerance) yield (None,
        False); duplicates return the existing node unchanged.  A new
        node's score is the scorer probability floored at SCORE_FLOOR, and
        edges are linked to every present program one edit away in either
        direction.
        """
        report = count_mismatches(program, self.registry, self.tolerance)
        if not report.within_tolerance:
            return None, False
        key = program.key
        existing = self._by_key.get(key)
        if existing is not None:
            return self.nodes[existing], False

        node_id = len(self.nodes)
        self._grow_nodes()
        node = GraphNode(
            id=node_id, program=program, legality=report, graph=self, expanded=set()
        )
        self.nodes.append(node)
        self.adjacency.append([])
        self._by_key[key] = node_id
        self._scores[node_id] = max(scorer.probability(program), SCORE_FLOOR)
        self._visits[node_id] = 0
        self._visited[node_id] = False
        self._open[node_id] = True
        self._lengths[node_id] = len(program.tokens)

        by_key = self._by_key
        neighbors: set[int] = set()
        for mkey in mutation_keys(program, self.registry):
            # forward: neighbor is one edit from this program (and, for the
            # symmetric edits, vice versa)
            idx = by_key.get(mkey)
            if idx is not None:
                neighbors.add(idx)
        for idx in self._mutant_index.get(key, ()):
            # backward: an existing node deletes to this program while
            # abandoning a subtree, an edit this side cannot reproduce
            neighbors.add(idx)
        for idx in sorted(neighbors):
            if idx != node_id:
                self._add_edge(node_id, idx)
        index = self._mutant_index
        for mkey in asymmetric_deletion_keys(program, self.registry):
            bucket = index.get(mkey)
            if bucket is None:
                index[mkey] = [node_id]
            else:
                bucket.append(node_id)
        return node, True

    def expectations(self, weights: Sequence[float], alpha: float) -> np.ndarray:
        """Expectation value of every node under the current scores."""
        n = len(self.nodes)
        rounds = len(weights) - 1
        balls = ball_rounds(self._edge_u, self._edge_v, self.n_edges, self._scores[:n], rounds)
        out = np.zeros(n, dtype=np.float64)
        for d, w in enumerate(weights):
            out += w * balls[d]
        out += alpha / (self._visits[:n] + 1.0)
        return out

    def candidate_mask(self) -> np.ndarray:
        return self._open[: len(self.nodes)].copy()

    def best_node(self) -> GraphNode:
        """Highest evaluated score; earliest insertion wins ties.

        Unvisited nodes carry predictor probabilities, not accuracies, so
        they only qualify when nothing has been evaluated yet (e.g. a
        graph whose nodes are all tolerance-admitted bridges).
        """
        n = len(self.nodes)
        visited = self._visited[:n]
        if visited.any():
            scores = np.where(visited, self._scores[:n], -1.0)
            return self.nodes[int(np.argmax(scores))]
        return self.nodes[int(np.argmax(self._scores[:n]))]


def add_program(
    graph: ProgramGraph, program: Program, scorer: ProbabilityScorer
) -> Optional[GraphNode]:
    """Spec-level wrapper around ProgramGraph.add (node or None on reject)."""
    node, _ = graph.add(program, scorer)
    return node


def ball_max_scores(graph: ProgramGraph, node: GraphNode, max_distance: int) -> list[float]:
    """Max node score within hop distance d of `node`, for d = 0..max_distance.

    Straightforward truncated BFS; the entries are non-decreasing in d.
    """
    best = node.score
    out = [best]
    seen = {node.id}
    frontier = [node.id]
    for _ in range(max_distance):
        nxt = []
        for idx in frontier:
            for nb in graph.adjacency[idx]:
                if nb not in seen:
                    seen.add(nb)
                    nxt.append(nb)
                    score = float(graph._scores[nb])
                    if score > best:
                        best = score
        out.append(best)
        frontier = nxt
    return out


def shortest_legal_program(registry: ModuleRegistry, max_nodes: int = 8) -> Program:
    """Minimum-node-count program with zero mismatches.

    Enumerates typed programs by increasing token count; among minimal
    programs the lexicographically smallest canonical key wins.  Raises
    NoLegalSeedError when nothing legal exists within `max_nodes` tokens.
    """
    from .registry import NONE_TYPE

    # minimal token count to produce each type, by fixpoint (END costs 1)
    inf = 10 ** 9
    min_size: dict[str, int] = {t: inf for t in registry.types}
    min_size[NONE_TYPE] = 1
    changed = True
    while changed:
        changed = False
        for sig in registry.modules:
            total = 1
            for accepted in sig.inputs:
                best = min((min_size[t] for t in accepted), default=inf)
                if best >= inf:
                    total = inf
                    break
                total += best
            if total < min_size[sig.output]:
                min_size[sig.output] = total
                changed = True

    def slot_floor(accepted: frozenset[str]) -> int:
        return min((min_size[t] for t in accepted), default=inf)

    def complete(slots: list[frozenset[str]], budget: int, prefix: list[str], hits: list[str]) -> None:
        if not slots:
            if budget == 0:
                hits.append(" ".join(prefix))
            return
        accepted, rest = slots[0], slots[1:]
        floor_rest = sum(slot_floor(a) for a in rest)
        if floor_rest >= inf:
            return
        if NONE_TYPE in accepted and 1 + floor_rest <= budget:
            complete(rest, budget - 1, prefix + [END_TOKEN], hits)
        for sig in registry.modules:
            if sig.output not in accepted:
                continue
            own = sum(slot_floor(a) for a in sig.inputs)
            if own >= inf or 1 + own + floor_rest > budget:
                continue
            complete(list(sig.inputs) + rest, budget - 1, prefix + [sig.name], hits)

    for size in range(1, max_nodes + 1):
        hits: list[str] = []
        for sig in registry.modules:
            if sig.output not in registry.answer_types:
                continue
            complete(list(sig.inputs), size - 1, [sig.name], hits)
        if hits:
            best = min(hits)
            return Program(tuple(best.split()))
    raise NoLegalSeedError(f"no legal program within {max_nodes} nodes")


def init_graph(
    question: Sequence[str],
    scorer: ProbabilityScorer,
    closest_program: Optional[Program],
    registry: ModuleRegistry,
    tolerance: int,
) -> ProgramGraph:
    """Seed a fresh graph: predictor output, closest solved program (when
    available), and the shortest legal program.  Illegal seeds are skipped
    and duplicates collapse; an empty result raises NoLegalSeedError."""
    graph = ProgramGraph(registry, tolerance)
    seeds: list[Program] = [scorer.predict()]
    if closest_program is not None:
        seeds.append(closest_program)
    try:
        seeds.append(shortest_legal_program(registry))
    except NoLegalSeedError:
        pass
    names = set(registry.names)
    for seed in seeds:
        if all(tok in names or tok == END_TOKEN for tok in seed.tokens):
            graph.add(seed, scorer)
    if len(graph) == 0:
        raise NoLegalSeedError("no seed program passed the legality check")
    return graph


def dump_graph(graph: ProgramGraph, path) -> None:
    """One JSON record per node: key, state, legality, and edge keys."""
    lines = []
    for node in graph.nodes:
        record = {
            "key": node.key,
            "score": node.score,
            "visit_count": node.visit_count,
            "visited": node.visited,
            "fully_explored": node.fully_explored,
            "legality": {
                "mismatch_count": node.legality.mismatch_count,
                "executable": node.legality.executable,
                "within_tolerance": node.legality.within_tolerance,
            },
            "edges": sorted(graph.nodes[nb].key for nb in graph.adjacency[node.id]),
        }
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n")
