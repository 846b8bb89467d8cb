"""Statistical predictors guiding the search.

Three lightweight learners stand in for heavier sequence models so the
search framework itself carries the load:

* ``NGramPredictor`` -- per-question-word pools of order-2 token counts
  with add-k smoothing; greedy structural decoding and per-token product
  probabilities.  Trains on (question, program) pairs.
* ``NecessityPredictor`` -- one online logistic regression per module over
  bag-of-question-words features, predicting whether a module is needed.
* ``QuestionEmbedder`` / ``SolvedStore`` -- unit-normalized TF-IDF question
  vectors and a store of solved questions for nearest-neighbor seeding.

All learners expose plain-dict state export/import for checkpointing.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import numpy as np

from .programs import END_TOKEN, Program
from .registry import ModuleRegistry

_PAD = "<s>"
_BIAS = "<bias>"


def _decode_structural(
    score_fn, registry: ModuleRegistry, max_len: int = 20
) -> Program:
    """Greedy decode over the registry vocabulary with structural closure.

    `score_fn(c1, c2)` returns a dict token -> probability over the full
    vocabulary.  END is disallowed at the root position; ties break toward
    the lexicographically smallest token.  At the length cap all open
    slots are force-closed with END.
    """
    tokens: list[str] = []
    open_slots = 1
    c1, c2 = _PAD, _PAD
    while open_slots > 0 and len(tokens) < max_len:
        dist = score_fn(c1, c2)
        allowed = [t for t in registry.vocab if t != END_TOKEN or len(tokens) > 0]
        best = min(allowed, key=lambda t: (-dist[t], t))
        tokens.append(best)
        open_slots += -1 if best == END_TOKEN else registry.arity(best) - 1
        c1, c2 = c2, best
    tokens.extend([END_TOKEN] * open_slots)
    return Program(tuple(tokens))


class NGramPredictor:
    """Question-conditioned order-2 token model with add-k smoothing.

    Each question word owns a smoothed conditional over the next token
    given the previous two; a position's distribution is the normalized
    product of the experts for the words present in the question (words
    with no counts for the context contribute nothing).  The product form
    lets rare discriminative words override ubiquitous filler words, which
    a pooled-count mixture cannot.  With no expert at all the distribution
    falls back to uniform over the vocabulary.
    """

    def __init__(self, registry: ModuleRegistry, k: float = 0.1) -> None:
        self.registry = registry
        self.k = k
        # (word, c1, c2) -> {token: count}
        self._counts: dict[tuple[str, str, str], dict[str, int]] = {}
        self._totals: dict[tuple[str, str, str], int] = {}

    def train(self, question: Sequence[str], program: Program) -> None:
        c1, c2 = _PAD, _PAD
        words = sorted(set(question))
        for tok in program.tokens:
            for w in words:
                key = (w, c1, c2)
                bucket = self._counts.setdefault(key, {})
                bucket[tok] = bucket.get(tok, 0) + 1
                self._totals[key] = self._totals.get(key, 0) + 1
            c1, c2 = c2, tok

    def _distribution(
        self, question: Sequence[str], c1: str, c2: str, registry: ModuleRegistry
    ) -> dict[str, float]:
        vocab = registry.vocab
        size = len(vocab)
        logs = [0.0] * size
        informed = False
        for w in sorted(set(question)):
            key = (w, c1, c2)
            bucket = self._counts.get(key)
            if not bucket:
                continue
            informed = True
            den = self._totals[key] + self.k * size
            for i, t in enumerate(vocab):
                logs[i] += math.log((bucket.get(t, 0) + self.k) / den)
        if not informed:
            uniform = 1.0 / size
            return {t: uniform for t in vocab}
        peak = max(logs)
        weights = [math.exp(v - peak) for v in logs]
        norm = sum(weights)
        return {t: weights[i] / norm for i, t in enumerate(vocab)}

    def probability(
        self, question: Sequence[str], program: Program, registry: Optional[ModuleRegistry] = None
    ) -> float:
        """Product of per-position token probabilities; always in (0, 1]."""
        reg = registry or self.registry
        prob = 1.0
        c1, c2 = _PAD, _PAD
        for tok in program.tokens:
            dist = self._distribution(question, c1, c2, reg)
            prob *= dist[tok]
            c1, c2 = c2, tok
        return prob

    def predict(
        self, question: Sequence[str], registry: Optional[ModuleRegistry] = None, max_len: int = 20
    ) -> Program:
        reg = registry or self.registry
        return _decode_structural(
            lambda c1, c2: self._distribution(question, c1, c2, reg), reg, max_len
        )

    def scorer(
        self, question: Sequence[str], registry: Optional[ModuleRegistry] = None
    ) -> "ProbabilityScorer":
        """Probability evaluator bound to one (question, registry) pair.

        Caches per-context distributions, which a search hits thousands of
        times; results are bitwise identical to probability().
        """
        return ProbabilityScorer(self, question, registry or self.registry)

    def state_dict(self) -> dict:
        return {
            "k": self.k,
            "counts": {
                "|".join(key): dict(sorted(bucket.items()))
                for key, bucket in sorted(self._counts.items())
            },
        }

    def load_state(self, state: dict) -> None:
        self.k = state["k"]
        self._counts = {}
        self._totals = {}
        for joined, bucket in state["counts"].items():
            w, c1, c2 = joined.split("|")
            key = (w, c1, c2)
            self._counts[key] = dict(bucket)
            self._totals[key] = sum(bucket.values())


class ProbabilityScorer:
    """Cached per-token probabilities for a fixed question and registry."""

    def __init__(
        self, predictor: NGramPredictor, question: Sequence[str], registry: ModuleRegistry
    ) -> None:
        self._predictor = predictor
        self._question = tuple(question)
        self._registry = registry
        self._cache: dict[tuple[str, str], dict[str, float]] = {}

    def _dist(self, c1: str, c2: str) -> dict[str, float]:
        key = (c1, c2)
        dist = self._cache.get(key)
        if dist is None:
            dist = self._predictor._distribution(self._question, c1, c2, self._registry)
            self._cache[key] = dist
        return dist

    def probability(self, program: Program) -> float:
        prob = 1.0
        c1, c2 = _PAD, _PAD
        for tok in program.tokens:
            prob *= self._dist(c1, c2)[tok]
            c1, c2 = c2, tok
        return prob

    def predict(self, max_len: int = 20) -> Program:
        return _decode_structural(self._dist, self._registry, max_len)


class NecessityPredictor:
    """Per-module online logistic regression over question words."""

    def __init__(self, registry: ModuleRegistry, learning_rate: float = 0.1) -> None:
        self.registry = registry
        self.learning_rate = learning_rate
        self._weights: dict[str, dict[str, float]] = {sig.name: {} for sig in registry.modules}

    @staticmethod
    def _features(question: Sequence[str]) -> list[str]:
        return sorted(set(question)) + [_BIAS]

    def predict(self, question: Sequence[str]) -> list[float]:
        """Necessity probability per module, in registry order."""
        feats = self._features(question)
        out = []
        for sig in self.registry.modules:
            w = self._weights[sig.name]
            z = sum(w.get(f, 0.0) for f in feats)
            out.append(1.0 / (1.0 + math.exp(-z)))
        return out

    def train(self, question: Sequence[str], program: Program) -> None:
        present = set(program.tokens)
        feats = self._features(question)
        for sig in self.registry.modules:
            w = self._weights[sig.name]
            z = sum(w.get(f, 0.0) for f in feats)
            p = 1.0 / (1.0 + math.exp(-z))
            grad = (1.0 if sig.name in present else 0.0) - p
            step = self.learning_rate * grad
            for f in feats:
                w[f] = w.get(f, 0.0) + step

    def state_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weights": {
                name: dict(sorted(w.items())) for name, w in sorted(self._weights.items())
            },
        }

    def load_state(self, state: dict) -> None:
        self.learning_rate = state["learning_rate"]
        self._weights = {sig.name: {} for sig in self.registry.modules}
        for name, w in state["weights"].items():
            self._weights[name] = dict(w)


def presence_vector(program: Program, registry: ModuleRegistry) -> list[int]:
    """Boolean per-module appearance vector in registry order."""
    present = set(program.tokens)
    return [1 if sig.name in present else 0 for sig in registry.modules]


def select_candidates(
    necessity: NecessityPredictor,
    question: Sequence[str],
    registry: ModuleRegistry,
    top_count: int,
    random_count: int,
    rng,
) -> list[str]:
    """Top-`top_count` modules by predicted necessity plus `random_count`
    uniform picks from the remainder; returned in registry order."""
    preds = necessity.predict(question)
    ranked = sorted(zip(preds, registry.names), key=lambda pair: (-pair[0], pair[1]))
    top = {name for _, name in ranked[: max(top_count, 0)]}
    rest = [name for name in registry.names if name not in top]
    extra = rng.sample(rest, min(max(random_count, 0), len(rest))) if top_count < len(registry.names) else []
    chosen = top | set(extra)
    return [name for name in registry.names if name in chosen]


class QuestionEmbedder:
    """Unit-normalized TF-IDF vectors over a fixed question corpus."""

    def __init__(self) -> None:
        self._vocab: dict[str, int] = {}
        self._idf: Optional[np.ndarray] = None

    def fit(self, corpus: Iterable[Sequence[str]]) -> None:
        questions = [tuple(q) for q in corpus]
        vocab: dict[str, int] = {}
        for q in questions:
            for w in q:
                if w not in vocab:
                    vocab[w] = len(vocab)
        df = np.zeros(len(vocab))
        for q in questions:
            for w in set(q):
                df[vocab[w]] += 1
        n = len(questions)
        self._vocab = vocab
        self._idf = np.log((1.0 + n) / (1.0 + df)) + 1.0

    def embed(self, question: Sequence[str]) -> np.ndarray:
        if self._idf is None:
            raise RuntimeError("embedder not fitted")
        vec = np.zeros(len(self._vocab))
        for w in question:
            idx = self._vocab.get(w)
            if idx is not None:
                vec[idx] += 1.0
        vec *= self._idf
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


class SolvedStore:
    """Solved questions with their embeddings, programs, and scores."""

    def __init__(self) -> None:
        self._entries: list[tuple[tuple[str, ...], np.ndarray, Program, float]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def add(
        self, question: Sequence[str], embedding: np.ndarray, program: Program, score: float
    ) -> None:
        self._entries.append((tuple(question), embedding, program, score))

    def closest(self, embedding: np.ndarray) -> Optional[tuple[Program, float]]:
        """Program of the L2-nearest stored question; ties keep the earliest."""
        best: Optional[tuple[Program, float]] = None
        for _, emb, program, _ in self._entries:
            dist = float(np.linalg.norm(embedding - emb))
            if best is None or dist < best[1]:
                best = (program, dist)
        return best


def closest_solved(
    embedder: QuestionEmbedder, store: SolvedStore, question: Sequence[str]
) -> Optional[tuple[Program, float]]:
    """Nearest solved question's program and its embedding distance."""
    if len(store) == 0:
        return None
    return store.closest(embedder.embed(question))
