"""Policy-gradient baseline: a tabular contextual sequence policy.

The policy is log-linear: per-(question word, previous-two-token context)
logit vectors over the token vocabulary are summed across the words
present in the question and softmaxed.  Sampling respects program
structure (END is disallowed at the root; generation closes when all
slots are filled, and remaining slots are force-filled at the length
cap), so every sample is structurally legal.  Updates follow the score
-function estimator with a moving-average reward baseline.

This replaces a recurrent policy network on purpose: at this scale the
credit-assignment behavior under exact-match rewards, which is what the
comparison experiments measure, does not depend on the architecture.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .microworld import QuestionTriplet, exact_match_oracle
from .programs import END_TOKEN, Program
from .registry import ModuleRegistry

_PAD = "<s>"


class SequencePolicy:
    """Tabular log-linear policy over (word presence, 2-token context)."""

    def __init__(
        self,
        registry: ModuleRegistry,
        learning_rate: float = 0.05,
        baseline_decay: float = 0.99,
    ) -> None:
        self.registry = registry
        self.learning_rate = learning_rate
        self.baseline_decay = baseline_decay
        self.baseline = 0.0
        self.vocab: tuple[str, ...] = registry.vocab
        self._index = {tok: i for i, tok in enumerate(self.vocab)}
        self._arity = np.array(
            [registry.arity(t) if t != END_TOKEN else 0 for t in self.vocab], dtype=np.int64
        )
        # (word, c1, c2) -> logit vector over vocab
        self._logits: dict[tuple[str, str, str], np.ndarray] = {}

    def _summed_logits(self, words: list[str], c1: str, c2: str) -> np.ndarray:
        z = np.zeros(len(self.vocab))
        for w in words:
            vec = self._logits.get((w, c1, c2))
            if vec is not None:
                z += vec
        return z

    def distribution(
        self, question: Sequence[str], c1: str, c2: str, allowed: np.ndarray
    ) -> np.ndarray:
        """Softmax over the allowed token indices (zero elsewhere)."""
        words = sorted(set(question))
        z = self._summed_logits(words, c1, c2)[allowed]
        z = z - z.max()
        e = np.exp(z)
        probs = np.zeros(len(self.vocab))
        probs[allowed] = e / e.sum()
        return probs

    def full_distribution(self, question: Sequence[str], c1: str, c2: str) -> np.ndarray:
        """Softmax over the whole vocabulary (normalization invariant)."""
        return self.distribution(question, c1, c2, np.arange(len(self.vocab)))


def _allowed_indices(policy: SequencePolicy, position: int) -> np.ndarray:
    if position == 0:  # the root must be a module
        return np.arange(len(policy.vocab) - 1)
    return np.arange(len(policy.vocab))


def sample_program(
    policy: SequencePolicy, question: Sequence[str], rng: random.Random, max_len: int = 20
) -> Program:
    """Autoregressively sample one structurally legal program."""
    tokens: list[str] = []
    open_slots = 1
    c1, c2 = _PAD, _PAD
    while open_slots > 0 and len(tokens) < max_len:
        allowed = _allowed_indices(policy, len(tokens))
        probs = policy.distribution(question, c1, c2, allowed)
        u = rng.random()
        acc = 0.0
        pick = int(allowed[-1])
        for idx in allowed:
            acc += probs[idx]
            if u < acc:
                pick = int(idx)
                break
        tok = policy.vocab[pick]
        tokens.append(tok)
        open_slots += -1 if tok == END_TOKEN else policy.registry.arity(tok) - 1
        c1, c2 = c2, tok
    tokens.extend([END_TOKEN] * open_slots)
    return Program(tuple(tokens))


def update(
    policy: SequencePolicy, question: Sequence[str], program: Program, reward: float
) -> None:
    """One policy-gradient step on a sampled program.

    Taken tokens move by lr * (reward - baseline) * (1 - pi), the other
    allowed tokens by -lr * (reward - baseline) * pi; the moving-average
    baseline updates afterwards.
    """
    advantage = reward - policy.baseline
    words = sorted(set(question))
    c1, c2 = _PAD, _PAD
    for position, tok in enumerate(program.tokens):
        allowed = _allowed_indices(policy, position)
        probs = policy.distribution(question, c1, c2, allowed)
        grad = -policy.learning_rate * advantage * probs
        grad[policy._index[tok]] += policy.learning_rate * advantage
        for w in words:
            key = (w, c1, c2)
            vec = policy._logits.get(key)
            if vec is None:
                vec = np.zeros(len(policy.vocab))
                policy._logits[key] = vec
            vec += grad
        c1, c2 = c2, tok
    policy.baseline = (
        policy.baseline_decay * policy.baseline + (1.0 - policy.baseline_decay) * reward
    )


@dataclass
class BaselineResult:
    curve: list[tuple[int, int]]  # (evaluations, correct programs found)
    solved: set[int] = field(default_factory=set)
    evaluations: int = 0


def run_baseline(
    dataset: list[QuestionTriplet],
    registry: ModuleRegistry,
    budget: int,
    seed: int,
    learning_rate: float = 0.05,
    baseline_decay: float = 0.99,
    max_len: int = 20,
) -> BaselineResult:
    """Round-robin exact-match exploration over the dataset's questions.

    Each step samples one program for the current unsolved question,
    queries the exact-match oracle (one evaluation), updates the policy
    with the boolean reward, and marks the question solved on a match.
    """
    if any(t.gt_program is None for t in dataset):
        raise ValueError("baseline requires ground-truth programs in the dataset")
    rng = random.Random(f"{seed}:reinforce")
    policy = SequencePolicy(registry, learning_rate, baseline_decay)
    unsolved = [t.qid for t in dataset]
    by_id = {t.qid: t for t in dataset}
    result = BaselineResult(curve=[(0, 0)])
    cursor = 0
    while result.evaluations < budget and unsolved:
        cursor %= len(unsolved)
        qid = unsolved[cursor]
        triplet = by_id[qid]
        program = sample_program(policy, triplet.question, rng, max_len)
        reward = exact_match_oracle(program, triplet.gt_program)
        result.evaluations += 1
        update(policy, triplet.question, program, reward)
        if reward == 1.0:
            unsolved.pop(cursor)
            result.solved.add(qid)
            result.curve.append((result.evaluations, len(result.solved)))
        else:
            cursor += 1
    result.curve.append((result.evaluations, len(result.solved)))
    return result
