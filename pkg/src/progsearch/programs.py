"""Typed module programs and their one-edit mutation neighborhood.

A program is a rooted ordered tree whose internal nodes are module
applications and whose leaves are either arity-0 modules or an ``END``
marker for an unfilled slot.  Since every module has a fixed arity, the
pre-order token sequence determines the tree uniquely, so a program is
stored as its token tuple and tree surgery is done by splicing subtree
spans.  A pre-order index (0 = root) addresses a node unambiguously.

Three edit operations generate the distance-1 neighborhood used by the
search graph: insertion of a module between a node and its parent,
deletion of a module (retaining one child), and substitution by another
module of equal arity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Optional

if TYPE_CHECKING:
    from .registry import ModuleRegistry

END_TOKEN = "END"


class ProgramError(ValueError):
    """Base class for malformed-program conditions."""


class UnknownModuleError(ProgramError):
    pass


class TruncatedProgramError(ProgramError):
    pass


class TrailingTokensError(ProgramError):
    pass


class InvalidAddressError(ProgramError):
    pass


@dataclass(frozen=True)
class Program:
    """Immutable program, canonically identified by its pre-order tokens."""

    tokens: tuple[str, ...]

    @cached_property
    def key(self) -> str:
        """Canonical text form: whitespace-joined pre-order tokens."""
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __repr__(self) -> str:
        return f"Program({self.key!r})"


# -- tree view -------------------------------------------------------------

@dataclass(frozen=True)
class ModuleNode:
    name: str
    children: tuple["Node", ...]


@dataclass(frozen=True)
class EndNode:
    pass


Node = ModuleNode | EndNode

END_NODE = EndNode()


def to_tree(program: Program, registry: "ModuleRegistry") -> Node:
    """Materialize the nested-node view of a program."""

    def build(i: int) -> tuple[Node, int]:
        tok = program.tokens[i]
        if tok == END_TOKEN:
            return END_NODE, i + 1
        children = []
        j = i + 1
        for _ in range(registry.arity(tok)):
            child, j = build(j)
            children.append(child)
        return ModuleNode(tok, tuple(children)), j

    root, end = build(0)
    assert end == len(program.tokens)
    return root


def from_tree(root: Node) -> Program:
    """Flatten a nested-node tree into a program (pre-order emission)."""
    out: list[str] = []

    def walk(node: Node) -> None:
        if isinstance(node, EndNode):
            out.append(END_TOKEN)
            return
        out.append(node.name)
        for child in node.children:
            walk(child)

    walk(root)
    return Program(tuple(out))


# -- serialization ----------------------------------------------------------

def to_sequence(program: Program) -> tuple[str, ...]:
    """Pre-order token sequence (module name before its children, END leaves)."""
    return program.tokens


def canonical_key(program: Program) -> str:
    return program.key


def from_sequence(tokens: Iterable[str], registry: "ModuleRegistry") -> Program:
    """Parse a token sequence back into a program, validating structure.

    Raises UnknownModuleError, TruncatedProgramError, or TrailingTokensError.
    """
    toks = tuple(tokens)
    if not toks:
        raise TruncatedProgramError("empty token sequence")
    open_slots = 1
    for i, tok in enumerate(toks):
        if open_slots == 0:
            raise TrailingTokensError(f"tokens remain after program closed at position {i}")
        if tok == END_TOKEN:
            open_slots -= 1
        else:
            sig = registry.sig_or_none(tok)
            if sig is None:
                raise UnknownModuleError(f"unknown module {tok!r}")
            open_slots += sig.arity - 1
    if open_slots != 0:
        raise TruncatedProgramError(f"sequence ends with {open_slots} unfilled slot(s)")
    return Program(toks)


def parse_key(key: str, registry: "ModuleRegistry") -> Program:
    """Parse the canonical text form (whitespace-separated tokens)."""
    return from_sequence(key.split(), registry)


# -- structural helpers ------------------------------------------------------

def subtree_end(tokens: tuple[str, ...], start: int, registry: "ModuleRegistry") -> int:
    """End index (exclusive) of the subtree rooted at pre-order index `start`."""
    open_slots = 1
    i = start
    n = len(tokens)
    while open_slots > 0:
        if i >= n:
            raise TruncatedProgramError("subtree scan ran past end of tokens")
        tok = tokens[i]
        open_slots += -1 if tok == END_TOKEN else registry.arity(tok) - 1
        i += 1
    return i


def child_spans(
    tokens: tuple[str, ...], addr: int, registry: "ModuleRegistry"
) -> list[tuple[int, int]]:
    """(start, end) spans of the children of the module at `addr`."""
    tok = tokens[addr]
    spans = []
    pos = addr + 1
    for _ in range(registry.arity(tok)):
        end = subtree_end(tokens, pos, registry)
        spans.append((pos, end))
        pos = end
    return spans


# -- mutation ----------------------------------------------------------------

def mutate(program: Program, address: int, registry: "ModuleRegistry") -> list[Program]:
    """All distinct one-edit variants of `program` at the node `address`.

    END leaves admit insertions only (the new module lands where the END
    was, with all its slots left as END).  Module nodes admit insertions
    above them (one variant per slot that receives the old subtree),
    deletions (one variant per retained child; results that would leave a
    bare END root are dropped), and equal-arity substitutions.  The result
    list is deduplicated and deterministically ordered.
    """
    tokens = program.tokens
    if not 0 <= address < len(tokens):
        raise InvalidAddressError(f"address {address} out of range for {len(tokens)} nodes")

    target = tokens[address]
    is_end = target == END_TOKEN
    s = address
    e = subtree_end(tokens, s, registry)

    seen: set[tuple[str, ...]] = set()
    out: list[Program] = []

    def emit(toks: tuple[str, ...]) -> None:
        if toks not in seen:
            seen.add(toks)
            out.append(Program(toks))

    # insertions
    for sig in registry.modules:
        k = sig.arity
        if is_end:
            emit(tokens[:s] + (sig.name,) + (END_TOKEN,) * k + tokens[s + 1 :])
        else:
            if k == 0:
                continue
            for slot in range(k):
                emit(
                    tokens[:s]
                    + (sig.name,)
                    + (END_TOKEN,) * slot
                    + tokens[s:e]
                    + (END_TOKEN,) * (k - 1 - slot)
                    + tokens[e:]
                )

    if not is_end:
        # deletions
        arity = registry.arity(target)
        if arity == 0:
            if address != 0:  # deleting an arity-0 root would leave an empty program
                emit(tokens[:s] + (END_TOKEN,) + tokens[e:])
        else:
            for cs, ce in child_spans(tokens, address, registry):
                if address == 0 and tokens[cs] == END_TOKEN:
                    continue  # bare END root: empty program, discarded
                emit(tokens[:s] + tokens[cs:ce] + tokens[e:])

        # substitutions
        for sig in registry.modules:
            if sig.arity == arity and sig.name != target:
                emit(tokens[:s] + (sig.name,) + tokens[s + 1 :])

    return out


def mutate_all(program: Program, registry: "ModuleRegistry") -> list[Program]:
    """Union of mutate() over every node address, deduplicated."""
    seen: set[tuple[str, ...]] = set()
    out: list[Program] = []
    for addr in range(len(program.tokens)):
        for mutant in mutate(program, addr, registry):
            if mutant.tokens not in seen:
                seen.add(mutant.tokens)
                out.append(mutant)
    return out


def mutation_keys(program: Program, registry: "ModuleRegistry") -> list[str]:
    """Canonical keys of mutate_all(program); the graph's edge fingerprint.

    Key-only fast path: equivalent to [m.key for m in mutate_all(...)] but
    assembled from precomputed string fragments, since the graph calls this
    once per inserted node.
    """
    frag = _mutation_fragments(registry)
    tokens = program.tokens
    n = len(tokens)
    out: list[str] = []
    seen: set[str] = set()
    add_seen = seen.add
    append = out.append

    # prefixes[i] carries a trailing space, suffixes[i] a leading one, so
    # keys assemble by plain concatenation
    prefixes = [""] * (n + 1)
    acc = ""
    for i in range(n):
        acc = acc + tokens[i] + " "
        prefixes[i + 1] = acc
    suffixes = [""] * (n + 1)
    acc = ""
    for i in range(n - 1, -1, -1):
        acc = " " + tokens[i] + acc
        suffixes[i] = acc

    for addr in range(n):
        target = tokens[addr]
        s = addr
        pre = prefixes[s]
        if target == END_TOKEN:
            post = suffixes[s + 1]
            for closed in frag.closed_modules:
                key = pre + closed + post
                if key not in seen:
                    add_seen(key)
                    append(key)
            continue
        e = subtree_end(tokens, s, registry)
        mid = " ".join(tokens[s:e])
        post = suffixes[e]
        # insertions above a module node
        for head, tail in frag.insertion_parts:
            key = pre + head + mid + tail + post
            if key not in seen:
                add_seen(key)
                append(key)
        # deletions
        arity = registry.arity(target)
        if arity == 0:
            if addr != 0:
                key = pre + END_TOKEN + post
                if key not in seen:
                    add_seen(key)
                    append(key)
        else:
            for cs, ce in child_spans(tokens, addr, registry):
                if addr == 0 and tokens[cs] == END_TOKEN:
                    continue
                key = pre + " ".join(tokens[cs:ce]) + post
                if key not in seen:
                    add_seen(key)
                    append(key)
        # substitutions
        inner = suffixes[s + 1]
        for other in frag.by_arity.get(arity, ()):
            if other != target:
                key = pre + other + inner
                if key not in seen:
                    add_seen(key)
                    append(key)
    return out


def asymmetric_deletion_keys(program: Program, registry: "ModuleRegistry") -> list[str]:
    """Keys of deletion mutants whose edge a later node cannot rediscover.

    Insertion, substitution, and deletions that abandon only END leaves are
    symmetric: when q is one such edit of p, p is also one edit of q, so a
    node added later finds the edge through its own mutation keys.  The
    exception is deleting a module that had a non-END sibling subtree next
    to the retained child; only those mutant keys need reverse indexing.
    """
    tokens = program.tokens
    out: list[str] = []
    seen: set[str] = set()
    for addr in range(len(tokens)):
        target = tokens[addr]
        if target == END_TOKEN or registry.arity(target) == 0:
            continue
        spans = child_spans(tokens, addr, registry)
        e = spans[-1][1]
        for keep_idx, (cs, ce) in enumerate(spans):
            if addr == 0 and tokens[cs] == END_TOKEN:
                continue
            others_all_end = all(
                tokens[os] == END_TOKEN
                for j, (os, oe) in enumerate(spans)
                if j != keep_idx
            )
            if others_all_end:
                continue
            toks = tokens[:addr] + tokens[cs:ce] + tokens[e:]
            key = " ".join(toks)
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


class _MutationFragments:
    """Registry-derived string pieces shared by every mutation_keys call."""

    __slots__ = ("closed_modules", "insertion_parts", "by_arity")

    def __init__(self, registry: "ModuleRegistry") -> None:
        # module applied with every slot already END (END-target insertion)
        self.closed_modules = tuple(
            " ".join([sig.name] + [END_TOKEN] * sig.arity) for sig in registry.modules
        )
        # (head with trailing space, tail with leading space) per module x
        # receiving slot, for module-target insertion by concatenation
        parts = []
        for sig in registry.modules:
            for slot in range(sig.arity):
                head = " ".join([sig.name] + [END_TOKEN] * slot) + " "
                rest = sig.arity - 1 - slot
                tail = (" " + " ".join([END_TOKEN] * rest)) if rest else ""
                parts.append((head, tail))
        self.insertion_parts = tuple(parts)
        by_arity: dict[int, list[str]] = {}
        for sig in registry.modules:
            by_arity.setdefault(sig.arity, []).append(sig.name)
        self.by_arity = {k: tuple(v) for k, v in by_arity.items()}


_FRAGMENT_CACHE: dict[int, tuple[object, "_MutationFragments"]] = {}


def _mutation_fragments(registry: "ModuleRegistry") -> _MutationFragments:
    cached = _FRAGMENT_CACHE.get(id(registry))
    if cached is not None and cached[0] is registry:
        return cached[1]
    frag = _MutationFragments(registry)
    if len(_FRAGMENT_CACHE) > 64:
        _FRAGMENT_CACHE.clear()
    _FRAGMENT_CACHE[id(registry)] = (registry, frag)
    return frag


def brute_force_distance(
    p1: Program, p2: Program, registry: "ModuleRegistry", bound: int = 4
) -> Optional[int]:
    """Minimal number of mutate steps from p1 to p2 (BFS closure of mutate).

    Returns None when p2 is not reachable within `bound` steps.  Intended
    for small trees and small bounds; this is the reference oracle for the
    graph's edge relation, independent of the incremental edge bookkeeping.
    """
    if p1.tokens == p2.tokens:
        return 0
    frontier = [p1]
    visited = {p1.tokens}
    for depth in range(1, bound + 1):
        nxt = []
        for prog in frontier:
            for mutant in mutate_all(prog, registry):
                if mutant.tokens == p2.tokens:
                    return depth
                if mutant.tokens not in visited:
                    visited.add(mutant.tokens)
                    nxt.append(mutant)
        frontier = nxt
        if not frontier:
            break
    return None


# -- random generation (test support) ----------------------------------------

def random_program(registry: "ModuleRegistry", rng, max_depth: int = 6, end_prob: float = 0.3) -> Program:
    """Random structurally legal tree: uniform module per slot, END with
    probability `end_prob`, all slots forced to END at the depth cap.
    Type legality is not enforced."""
    names = registry.names
    out: list[str] = []

    def fill(depth: int) -> None:
        if depth >= max_depth or rng.random() < end_prob:
            out.append(END_TOKEN)
            return
        name = names[rng.randrange(len(names))]
        out.append(name)
        for _ in range(registry.arity(name)):
            fill(depth + 1)

    root = names[rng.randrange(len(names))]
    out.append(root)
    for _ in range(registry.arity(root)):
        fill(2)
    return Program(tuple(out))
