"""Outer training loop with a three-pool curriculum sampler.

Questions live in one of three pools: unmet (never attempted), unsolved
(attempted, best score below the acceptable boundary), and solved.  Each
loop draws from unmet with probability exp(-N_unsolved / (N_solved + 1))
when unmet questions remain (otherwise from unsolved), searches for a
program, routes the question by its score, and trains the program
predictor -- plus the necessity predictor when candidate selection is
active -- on the loop's best program.

Candidate selection restricts the search to the top predicted-necessary
modules plus a few random ones; when the restricted registry admits no
legal seed the loop falls back to the full registry and flags it.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .graph import NoLegalSeedError, shortest_legal_program
from .microworld import QuestionTriplet, accuracy, exact_match_oracle
from .predictors import (
    NecessityPredictor,
    NGramPredictor,
    QuestionEmbedder,
    SolvedStore,
    select_candidates,
)
from .registry import ModuleRegistry
from .search import SearchConfig, run_search

EXACT_MODE = "exact"
ACCURACY_MODE = "accuracy"
_DEFAULT_BOUNDARY = {EXACT_MODE: 1.0, ACCURACY_MODE: 0.99}


@dataclass(frozen=True)
class LoopConfig:
    max_loop: int = 100
    acceptable_boundary: Optional[float] = None  # None: per-mode default
    csm_enabled: bool = False
    top_count: int = 15
    random_count: int = 5

    def __post_init__(self) -> None:
        if self.acceptable_boundary is not None and not 0.0 <= self.acceptable_boundary <= 1.0:
            raise ValueError("acceptable_boundary must lie in [0, 1]")

    def boundary_for(self, mode: str) -> float:
        if self.acceptable_boundary is not None:
            return self.acceptable_boundary
        return _DEFAULT_BOUNDARY[mode]


class AllSolvedError(RuntimeError):
    """Both source pools are empty: training is complete."""


@dataclass
class DataPools:
    unmet: list[int]
    unsolved: list[int] = field(default_factory=list)
    solved: list[int] = field(default_factory=list)

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.unmet), len(self.unsolved), len(self.solved)


def unmet_probability(n_unmet: int, n_unsolved: int, n_solved: int) -> float:
    """Probability of drawing from the unmet pool."""
    if n_unmet <= 0:
        return 0.0
    return math.exp(-n_unsolved / (n_solved + 1))


def sample_pools(pools: DataPools, rng: random.Random) -> tuple[int, str]:
    """Draw (question id, source pool name); raises AllSolvedError when done.

    One uniform decides the pool (unmet probability is 1 whenever the
    unsolved pool is empty and 0 whenever unmet is, so the chosen pool is
    never empty); a second uniform picks the question within it.
    """
    n_um, n_us, _ = pools.counts
    if n_um == 0 and n_us == 0:
        raise AllSolvedError
    p_um = unmet_probability(*pools.counts)
    if rng.random() < p_um:
        return pools.unmet[rng.randrange(n_um)], "unmet"
    return pools.unsolved[rng.randrange(n_us)], "unsolved"


def route_result(pools: DataPools, qid: int, best_score: float, boundary: float) -> bool:
    """Move a question (currently unmet or unsolved) by its score.

    Returns True when it reached the boundary and moved to solved.
    Re-routing an unsolved question below the boundary leaves it unsolved.
    """
    if qid in pools.unmet:
        pools.unmet.remove(qid)
    elif qid in pools.unsolved:
        pools.unsolved.remove(qid)
    if best_score >= boundary:
        pools.solved.append(qid)
        return True
    pools.unsolved.append(qid)
    return False


@dataclass
class LoopRecord:
    loop: int
    question_id: int
    source_pool: str
    evaluations: int
    best_score: float
    solved_total: int
    csm_fallback: int
    candidates: Optional[tuple[str, ...]] = None  # None on non-CSM loops


@dataclass
class TrainingResult:
    records: list[LoopRecord]
    pools: DataPools
    predictor: NGramPredictor
    necessity: Optional[NecessityPredictor]
    solved_store: SolvedStore
    curve: list[tuple[int, int]]  # (cumulative evaluations, solved count)
    total_evaluations: int


def run_training(
    dataset: list[QuestionTriplet],
    registry: ModuleRegistry,
    mode: str,
    loop_config: LoopConfig,
    search_config: SearchConfig,
    seed: int,
    on_record=None,
    on_search=None,
) -> TrainingResult:
    """Run the outer loop over a dataset; fully determined by `seed`.

    `mode` picks the scoring signal: "exact" compares against the ground
    truth program, "accuracy" executes on the triplet's scenes.  The
    optional `on_record` callback observes each LoopRecord as it is made
    (used for incremental metrics writing); `on_search(loop, qid, trace,
    graph)` observes each finished search (used for trace and graph dumps).
    """
    if mode not in (EXACT_MODE, ACCURACY_MODE):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == EXACT_MODE and any(t.gt_program is None for t in dataset):
        raise ValueError("exact mode requires ground-truth programs in the dataset")

    rng_sample = random.Random(f"{seed}:sample")
    rng_search = random.Random(f"{seed}:search")
    rng_csm = random.Random(f"{seed}:csm")

    predictor = NGramPredictor(registry)
    necessity = NecessityPredictor(registry) if loop_config.csm_enabled else None
    embedder = QuestionEmbedder()
    embedder.fit([t.question for t in dataset])
    store = SolvedStore()
    pools = DataPools(unmet=[t.qid for t in dataset])
    by_id = {t.qid: t for t in dataset}
    boundary = loop_config.boundary_for(mode)

    records: list[LoopRecord] = []
    curve: list[tuple[int, int]] = [(0, 0)]
    total_evals = 0

    for loop in range(1, loop_config.max_loop + 1):
        try:
            qid, source = sample_pools(pools, rng_sample)
        except AllSolvedError:
            break
        triplet = by_id[qid]
        if mode == EXACT_MODE:
            gt = triplet.gt_program
            evaluator = lambda prog: exact_match_oracle(prog, gt)  # noqa: E731
        else:
            evaluator = lambda prog: accuracy(prog, triplet, registry)  # noqa: E731

        candidates: Optional[tuple[str, ...]] = None
        fallback = 0
        if loop_config.csm_enabled:
            names = select_candidates(
                necessity,
                triplet.question,
                registry,
                loop_config.top_count,
                loop_config.random_count,
                rng_csm,
            )
            candidates = tuple(names)
            restricted = registry.restrict(names)
            try:
                # a usable candidate set must admit at least one fully legal
                # seed; otherwise the whole loop runs on the full registry
                shortest_legal_program(restricted)
            except NoLegalSeedError:
                fallback = 1
                restricted = registry
            try:
                best_program, best_score, trace, graph = run_search(
                    triplet.question,
                    evaluator,
                    predictor,
                    store,
                    embedder,
                    restricted,
                    search_config,
                    rng=rng_search,
                )
            except NoLegalSeedError:
                fallback = 1
                best_program, best_score, trace, graph = run_search(
                    triplet.question,
                    evaluator,
                    predictor,
                    store,
                    embedder,
                    registry,
                    search_config,
                    rng=rng_search,
                )
        else:
            best_program, best_score, trace, graph = run_search(
                triplet.question,
                evaluator,
                predictor,
                store,
                embedder,
                registry,
                search_config,
                rng=rng_search,
            )
        if on_search is not None:
            on_search(loop, qid, trace, graph)

        solved = route_result(pools, qid, best_score, boundary)
        if solved:
            store.add(triplet.question, embedder.embed(triplet.question), best_program, best_score)
        predictor.train(triplet.question, best_program)
        if loop_config.csm_enabled:
            necessity.train(triplet.question, best_program)

        total_evals += trace.evaluations
        if solved:
            curve.append((total_evals, len(pools.solved)))
        record = LoopRecord(
            loop=loop,
            question_id=qid,
            source_pool=source,
            evaluations=trace.evaluations,
            best_score=best_score,
            solved_total=len(pools.solved),
            csm_fallback=fallback,
            candidates=candidates,
        )
        records.append(record)
        if on_record is not None:
            on_record(record)

    curve.append((total_evals, len(pools.solved)))
    return TrainingResult(
        records=records,
        pools=pools,
        predictor=predictor,
        necessity=necessity,
        solved_store=store,
        curve=curve,
        total_evaluations=total_evals,
    )
