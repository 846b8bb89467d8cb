import itertools
import random

import numpy as np
import pytest

from progsearch.graph import (
    NoLegalSeedError,
    ProgramGraph,
    add_program,
    ball_max_scores,
    dump_graph,
    init_graph,
    shortest_legal_program,
)
from progsearch.programs import Program, brute_force_distance, mutation_keys, random_program
from progsearch.registry import load_registry


def P(*tokens):
    return Program(tuple(tokens))


def scorer_for(stub_predictor_factory, prediction, probabilities=None):
    stub = stub_predictor_factory(prediction, probabilities)
    return stub.scorer(("q",))


# -- shortest legal program -----------------------------------------------------------


def test_shortest_legal_microworld10(mw10):
    # both two-token candidates exist; the smaller canonical key wins
    assert shortest_legal_program(mw10).key == "count scene"


def test_shortest_legal_arity0_answer():
    reg = load_registry(
        {
            "types": ["Boolean"],
            "answer_types": ["Boolean"],
            "modules": [
                {"name": "always", "inputs": [], "output": "Boolean"},
                {"name": "not_", "inputs": [["Boolean"]], "output": "Boolean"},
            ],
        }
    )
    assert shortest_legal_program(reg).key == "always"


def test_shortest_legal_unreachable():
    reg = load_registry(
        {
            "types": ["Boolean", "Integer"],
            "answer_types": ["Integer"],
            "modules": [{"name": "always", "inputs": [], "output": "Boolean"}],
        }
    )
    with pytest.raises(NoLegalSeedError):
        shortest_legal_program(reg)


# -- add_program -----------------------------------------------------------


def test_add_program_dedup(tiny_registry, stub_predictor_factory):
    scorer = scorer_for(stub_predictor_factory, P("count", "scene"))
    graph = ProgramGraph(tiny_registry, tolerance=1)
    first = add_program(graph, P("count", "scene"), scorer)
    again = add_program(graph, P("count", "scene"), scorer)
    assert first is again
    assert len(graph) == 1


def test_add_program_rejects_over_tolerance(tiny_registry, stub_predictor_factory):
    scorer = scorer_for(stub_predictor_factory, P("count", "scene"))
    graph = ProgramGraph(tiny_registry, tolerance=1)
    # exist fed an Integer and rooted fine: count(count(END)) has two mismatches
    rejected = add_program(graph, P("count", "count", "END"), scorer)
    assert rejected is None
    assert len(graph) == 0


def test_add_program_links_both_distance_one_neighbors(tiny_registry, stub_predictor_factory):
    scorer = scorer_for(stub_predictor_factory, P("count", "scene"))
    graph = ProgramGraph(tiny_registry, tolerance=1)
    add_program(graph, P("count", "scene"), scorer)
    add_program(graph, P("scene"), scorer)
    node = add_program(graph, P("exist", "scene"), scorer)
    assert sorted(graph.adjacency[node.id]) == [0, 1]


def test_add_program_score_floor(tiny_registry, stub_predictor_factory):
    scorer = scorer_for(stub_predictor_factory, P("scene"), probabilities={"scene": 0.0})
    graph = ProgramGraph(tiny_registry, tolerance=1)
    node = add_program(graph, P("scene"), scorer)
    assert node.score == 1e-9


# -- init_graph -----------------------------------------------------------


def test_init_skips_illegal_prediction(mw10, stub_predictor_factory):
    # two Attribute-into-SingleObject mismatches: over tolerance, skipped
    bad = P("query_color", "query_color", "query_color", "unique", "scene")
    scorer = scorer_for(stub_predictor_factory, bad)
    graph = init_graph(("q",), scorer, None, mw10, tolerance=1)
    assert len(graph) == 1
    assert graph.nodes[0].key == "count scene"


def test_init_identical_seeds_collapse(mw10, stub_predictor_factory):
    scorer = scorer_for(stub_predictor_factory, P("count", "scene"))
    graph = init_graph(("q",), scorer, P("count", "scene"), mw10, tolerance=1)
    assert len(graph) == 1
    assert graph.n_edges == 0


def test_init_two_seeds_one_edge(mw10, stub_predictor_factory):
    scorer = scorer_for(stub_predictor_factory, P("exist", "scene"))
    graph = init_graph(("q",), scorer, None, mw10, tolerance=1)
    assert len(graph) == 2
    assert graph.n_edges == 1
    assert brute_force_distance(graph.nodes[0].program, graph.nodes[1].program, mw10, 1) == 1


def test_init_seed_count_bounds(mw10, stub_predictor_factory):
    scorer = scorer_for(stub_predictor_factory, P("exist", "filter_red", "scene"))
    graph = init_graph(("q",), scorer, P("count", "filter_red", "scene"), mw10, tolerance=1)
    assert 1 <= len(graph) <= 3


def test_init_no_legal_seed():
    reg = load_registry(
        {
            "types": ["Boolean", "Integer"],
            "answer_types": ["Integer"],
            "modules": [{"name": "always", "inputs": [], "output": "Boolean"}],
        }
    )

    class HopelessScorer:
        def predict(self, max_len=20):
            return P("always")

        def probability(self, program):
            return 0.5

    with pytest.raises(NoLegalSeedError):
        init_graph(("q",), HopelessScorer(), None, reg, tolerance=0)


# -- ball maxima -----------------------------------------------------------


def _make_path_graph(tiny_registry, stub_predictor_factory, scores):
    """scene -- count(scene) -- count(filter_red(scene)) path with given scores."""
    probabilities = {
        "scene": scores[0],
        "count scene": scores[1],
        "count filter_red scene": scores[2],
    }
    scorer = scorer_for(stub_predictor_factory, P("scene"), probabilities)
    graph = ProgramGraph(tiny_registry, tolerance=1)
    a = add_program(graph, P("scene"), scorer)
    b = add_program(graph, P("count", "scene"), scorer)
    c = add_program(graph, P("count", "filter_red", "scene"), scorer)
    assert graph.n_edges == 2
    assert sorted(graph.adjacency[b.id]) == [a.id, c.id]
    return graph, (a, b, c)


def test_ball_max_isolated_node(tiny_registry, stub_predictor_factory):
    scorer = scorer_for(stub_predictor_factory, P("scene"), {"scene": 0.4})
    graph = ProgramGraph(tiny_registry, tolerance=1)
    node = add_program(graph, P("scene"), scorer)
    assert ball_max_scores(graph, node, 3) == [0.4, 0.4, 0.4, 0.4]


def test_ball_max_path_graph(tiny_registry, stub_predictor_factory):
    graph, (a, b, c) = _make_path_graph(tiny_registry, stub_predictor_factory, (0.1, 0.9, 0.5))
    assert ball_max_scores(graph, a, 2) == [0.1, 0.9, 0.9]
    assert ball_max_scores(graph, b, 2) == [0.9, 0.9, 0.9]
    assert ball_max_scores(graph, c, 2) == [0.5, 0.9, 0.9]


def test_ball_max_nondecreasing_and_floyd_warshall(mw10, stub_predictor_factory):
    rng = random.Random(4)
    scorer_probs = {}
    programs = []
    seen = set()
    while len(programs) < 45:
        p = random_program(mw10, rng, max_depth=3)
        if p.key not in seen:
            seen.add(p.key)
            programs.append(p)
            scorer_probs[p.key] = rng.random()
    scorer = scorer_for(stub_predictor_factory, programs[0], scorer_probs)
    graph = ProgramGraph(mw10, tolerance=2)
    nodes = [add_program(graph, p, scorer) for p in programs]
    nodes = [n for n in nodes if n is not None]

    n = len(graph)
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u in range(n):
        for v in graph.adjacency[u]:
            dist[u][v] = 1.0
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][k] + dist[k][j] < dist[i][j]:
                    dist[i][j] = dist[i][k] + dist[k][j]

    scores = np.array([graph.nodes[i].score for i in range(n)])
    for node in graph.nodes:
        balls = ball_max_scores(graph, node, 4)
        assert balls[0] == node.score
        assert all(balls[d] <= balls[d + 1] for d in range(4))
        for d in range(5):
            expected = scores[dist[node.id] <= d].max()
            assert balls[d] == pytest.approx(expected, abs=0)


# -- global edge invariant -----------------------------------------------------------


def test_edge_invariant_matches_brute_force(tiny_registry, stub_predictor_factory):
    rng = random.Random(6)
    scorer = scorer_for(stub_predictor_factory, P("count", "scene"))
    graph = ProgramGraph(tiny_registry, tolerance=1)
    add_program(graph, P("count", "scene"), scorer)
    # grow by random mutation closure up to 40 nodes
    while len(graph) < 40:
        node = graph.nodes[rng.randrange(len(graph))]
        from progsearch.programs import mutate

        addr = rng.randrange(len(node.program.tokens))
        for mutant in mutate(node.program, addr, tiny_registry):
            add_program(graph, mutant, scorer)
            if len(graph) >= 40:
                break

    edges = set()
    for u in range(len(graph)):
        for v in graph.adjacency[u]:
            edges.add((min(u, v), max(u, v)))
    for u, v in itertools.combinations(range(len(graph)), 2):
        pu, pv = graph.nodes[u].program, graph.nodes[v].program
        adjacent = (
            brute_force_distance(pu, pv, tiny_registry, 1) == 1
            or brute_force_distance(pv, pu, tiny_registry, 1) == 1
        )
        assert ((u, v) in edges) == adjacent, (pu.key, pv.key)


def test_no_self_loops_or_duplicate_edges(mw10, stub_predictor_factory):
    rng = random.Random(8)
    scorer = scorer_for(stub_predictor_factory, P("count", "scene"))
    graph = ProgramGraph(mw10, tolerance=1)
    for _ in range(300):
        add_program(graph, random_program(mw10, rng, max_depth=3), scorer)
    for u in range(len(graph)):
        assert u not in graph.adjacency[u]
        assert len(graph.adjacency[u]) == len(set(graph.adjacency[u]))


# -- dump -----------------------------------------------------------


def test_dump_graph_schema(tmp_path, tiny_registry, stub_predictor_factory):
    import json

    graph, _ = _make_path_graph(tiny_registry, stub_predictor_factory, (0.1, 0.9, 0.5))
    path = tmp_path / "graph.jsonl"
    dump_graph(graph, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    record = json.loads(lines[0])
    assert set(record) == {
        "key",
        "score",
        "visit_count",
        "visited",
        "fully_explored",
        "legality",
        "edges",
    }
    assert record["key"] == "scene"
    assert record["edges"] == ["count scene"]
